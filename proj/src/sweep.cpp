#include "cellstorm/sweep.hpp"

#include "cellstorm/localizer.hpp"

namespace cellstorm::sweep {

eval::SweepReport run_sweep(const config::RunConfig& cfg, const SweepPlan& plan, int threads) {
    cfg.validate();
    if (plan.photons.empty() || plan.qualities.empty()) throw Error("config", "sweep needs photons and qualities");
    eval::SweepReport report;
    report.methods = {"classic"};
    if (plan.weights) report.methods.push_back("nn");
    report.photons = plan.photons;
    report.qualities = plan.qualities;

    const eval::MatchOptions match{cfg.eval.radius_nm, cfg.eval.one_to_one};
    for (double photons : plan.photons)
        for (int quality : plan.qualities) {
            auto blink = cfg.simulation.blink;
            blink.photons = photons;
            auto codec = cfg.codec;
            codec.quality = quality;
            codec.qp_override.reset();
            const auto sim = sim::simulate_stack(cfg.simulation.scene, blink, cfg.simulation.psf, cfg.camera, codec,
                                                 cfg.simulation.frames, cfg.seed, threads);
            for (const auto& method : report.methods) {
                LocalizationTable found;
                if (method == "classic") {
                    found = localizer::localize_stack(sim.stack, cfg.localizer, cfg.camera, threads);
                } else {
                    nn::NnLocalizeConfig nc;
                    nc.grid.factor = cfg.nn.factor;
                    nc.tile = cfg.nn.tile;
                    nc.halo = cfg.nn.halo;
                    found = nn::nn_localize_stack(sim.stack, *plan.weights, nc, threads);
                }
                const auto m = eval::match_detailed(found, sim.ground_truth, match);
                eval::SweepCell cell;
                cell.method = method;
                cell.photons = photons;
                cell.quality = quality;
                cell.report = m.report;
                LocalizationTable unmatched;
                for (auto i : m.unmatched) unmatched.push_back(found[i]);
                cell.false_grid_histogram = eval::grid_histogram(unmatched, sim.stack.pixel_nm, sim.grid);
                report.cells.push_back(std::move(cell));
            }
        }
    report.validate();
    return report;
}

} // namespace cellstorm::sweep
