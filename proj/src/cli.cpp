#include "cellstorm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellstorm/camera.hpp"
#include "cellstorm/codec.hpp"
#include "cellstorm/config.hpp"
#include "cellstorm/eval.hpp"
#include "cellstorm/io.hpp"
#include "cellstorm/localizer.hpp"
#include "cellstorm/nn.hpp"
#include "cellstorm/sim.hpp"
#include "cellstorm/sweep.hpp"

namespace cellstorm::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

int exit_code_for(const std::string& code) {
    if (code == "usage") return exit_usage;
    if (code == "missing-input") return exit_missing_input;
    if (code.rfind("config", 0) == 0) return exit_config;
    if (code.rfind("stack-", 0) == 0 && code != "stack-io") return exit_invalid_input;
    if (code.rfind("archive-", 0) == 0 && code != "archive-io") return exit_invalid_input;
    static const char* invalid[] = {"table-parse", "invalid-input", "invalid-stack", "insufficient-data",
                                    "degenerate-fit", "calibration", "sweep-missing-cell"};
    for (const char* c : invalid)
        if (code == c) return exit_invalid_input;
    return exit_failure;
}

namespace {

// Options every subcommand accepts.
struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    int threads = 0;
    // One option object per subcommand; a value was given if any of them fired.
    std::vector<CLI::Option*> seed_opts;
    std::vector<CLI::Option*> threads_opts;

    static bool given(const std::vector<CLI::Option*>& opts) {
        return std::any_of(opts.begin(), opts.end(), [](const CLI::Option* o) { return o->count() > 0; });
    }
    bool seed_given() const { return given(seed_opts); }
    bool threads_given() const { return given(threads_opts); }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "JSON config file (or a previous run manifest)");
    app->add_option("--set", c.sets, "Override a config value, e.g. camera.gain=0.7")->take_all();
    c.seed_opts.push_back(app->add_option("--seed", c.seed, "Random seed"));
    c.threads_opts.push_back(
        app->add_option("--threads", c.threads, "Worker threads (default: CELLSTORM_THREADS or all cores)")
            ->check(CLI::PositiveNumber));
}

config::RunConfig resolve(const Common& c) {
    std::optional<fs::path> file;
    if (!c.config_file.empty()) file = c.config_file;
    auto cfg = config::load(file, c.sets);
    if (c.seed_given()) cfg.seed = c.seed;
    return cfg;
}

int thread_count(const Common& c) {
    if (c.threads_given()) return c.threads;
    if (const char* env = std::getenv("CELLSTORM_THREADS")) {
        int n = 0;
        const auto* end = env + std::strlen(env);
        if (auto [p, ec] = std::from_chars(env, end, n); ec == std::errc{} && p == end && n > 0) return n;
        throw Error("usage", std::string("CELLSTORM_THREADS must be a positive integer, got '") + env + "'");
    }
    return int(std::max(1u, std::thread::hardware_concurrency()));
}

void require_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw Error("missing-input", "input file not found: " + p.string());
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw Error("io", "failed writing " + p.string());
}

void write_manifest(const fs::path& path, const std::string& command, const config::RunConfig& cfg,
                    const std::vector<std::string>& args, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
    Json m;
    m["tool"] = "cellstorm";
    m["version"] = CELLSTORM_VERSION;
    m["command"] = command;
    m["args"] = std::vector<std::string>(args.begin() + 1, args.end());
    m["seed"] = cfg.seed;
    Json in = Json::array(), out = Json::array();
    for (const auto& p : inputs) in.push_back(p.string());
    for (const auto& p : outputs) out.push_back(p.string());
    m["inputs"] = in;
    m["outputs"] = out;
    m["config"] = Json::parse(config::to_json(cfg));
    write_text(path, m.dump(2) + "\n");
}

fs::path manifest_for(const fs::path& output) { return sibling(output, ".manifest.json"); }

codec::GridOffset parse_grid(const std::string& s, bool& random) {
    random = s == "random";
    if (random) return {};
    const auto comma = s.find(',');
    codec::GridOffset g;
    auto parse = [&](std::string_view v, int& out) {
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw Error("usage", "--grid-offset expects dx,dy or random, got '" + s + "'");
    };
    if (comma == std::string::npos) throw Error("usage", "--grid-offset expects dx,dy or random, got '" + s + "'");
    parse(std::string_view(s).substr(0, comma), g.dx);
    parse(std::string_view(s).substr(comma + 1), g.dy);
    return g;
}

Image<std::uint8_t> read_mask_pgm(const fs::path& path) {
    require_file(path);
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255 || !in)
        throw Error("invalid-input", path.string() + " is not an 8-bit binary PGM");
    Image<std::uint8_t> mask(w, h);
    in.read(reinterpret_cast<char*>(mask.data.data()), std::streamsize(mask.data.size()));
    if (!in) throw Error("invalid-input", path.string() + " is truncated");
    return mask;
}

Json report_json(const eval::MatchReport& r) {
    Json j;
    j["radius_nm"] = r.radius_nm;
    j["gt_count"] = r.gt_count;
    j["detected_count"] = r.detected_count;
    j["matched_count"] = r.matched_count;
    j["matched_fraction"] = r.matched_fraction();
    j["mean_distance_nm"] = r.mean_distance_nm;
    j["rmse_nm"] = r.rmse_nm;
    j["unmatched_detections"] = r.unmatched_detections();
    return j;
}

// ---------------------------------------------------------------------------

struct Runner {
    const std::vector<std::string>& args;
    std::ostream& out;

    int calibrate(const Common& c, const std::string& dark_path, const std::vector<std::string>& level_paths,
                  const fs::path& out_path, std::string csv_path) {
        auto cfg = resolve(c);
        require_file(dark_path);
        for (const auto& p : level_paths) require_file(p);
        const auto dark = io::read_stack(dark_path);
        std::vector<FrameStack> levels;
        for (const auto& p : level_paths) levels.push_back(io::read_stack(p));
        const auto res = camera::calibrate_mean_variance(levels, dark, cfg.camera.knee);

        Json j;
        j["gain"] = res.gain;
        j["offset"] = res.offset;
        j["read_noise"] = res.read_noise;
        j["fit_points"] = res.fit_points;
        j["r_squared"] = res.r_squared;
        j["knee"] = cfg.camera.knee;
        if (dark.n_frames >= 64) {
            const auto drift = camera::dark_drift_profile(dark);
            j["dip_period_frames"] = drift.period_frames ? Json(*drift.period_frames) : Json(nullptr);
        }
        std::ostringstream csv;
        csv << "mean,variance,used\n";
        for (const auto& p : res.points)
            csv << io::format_number(p.mean) << ',' << io::format_number(p.variance) << ',' << (p.used ? 1 : 0)
                << '\n';
        if (csv_path.empty()) csv_path = sibling(out_path, "_points.csv").string();
        write_text(out_path, j.dump(2) + "\n");
        write_text(csv_path, csv.str());
        std::vector<fs::path> inputs{dark_path};
        inputs.insert(inputs.end(), level_paths.begin(), level_paths.end());
        write_manifest(manifest_for(out_path), "calibrate", cfg, args, inputs, {out_path, csv_path});
        out << "gain=" << io::format_number(res.gain) << " offset=" << io::format_number(res.offset)
            << " read_noise=" << io::format_number(res.read_noise) << '\n';
        return exit_ok;
    }

    int simulate(config::RunConfig cfg, const Common& c, const fs::path& out_path, std::string gt_path) {
        if (!cfg.simulation.mask_pgm.empty()) cfg.simulation.scene.mask = read_mask_pgm(cfg.simulation.mask_pgm);
        cfg.validate();
        std::optional<codec::CodecConfig> codec;
        if (cfg.simulation.compress) codec = cfg.codec;
        const auto res = sim::simulate_stack(cfg.simulation.scene, cfg.simulation.blink, cfg.simulation.psf,
                                             cfg.camera, codec, cfg.simulation.frames, cfg.seed, thread_count(c));
        if (gt_path.empty()) gt_path = sibling(out_path, "_gt.csv").string();
        ensure_parent(out_path);
        ensure_parent(gt_path);
        io::write_stack(res.stack, out_path);
        io::write_emitters(res.ground_truth, gt_path);
        write_manifest(manifest_for(out_path), "simulate", cfg, args, {}, {out_path, gt_path});
        out << "frames=" << res.stack.n_frames << " size=" << res.stack.width << "x" << res.stack.height
            << " events=" << res.ground_truth.size() << '\n';
        return exit_ok;
    }

    int compress(const config::RunConfig& cfg, const Common& c, const fs::path& in_path, const fs::path& out_path) {
        cfg.validate();
        require_file(in_path);
        const auto stack = io::read_stack(in_path);
        const auto coded = codec::transcode_stack(stack, cfg.codec, cfg.seed, thread_count(c));
        ensure_parent(out_path);
        io::write_stack(coded, out_path);
        write_manifest(manifest_for(out_path), "compress", cfg, args, {in_path}, {out_path});
        const auto g = codec::resolve_grid(cfg.codec, cfg.seed);
        out << "quality=" << cfg.codec.quality << " qp=" << cfg.codec.qp() << " grid=" << g.dx << ',' << g.dy
            << '\n';
        return exit_ok;
    }

    int localize(const config::RunConfig& cfg, const Common& c, const fs::path& in_path, const fs::path& out_path) {
        cfg.validate();
        require_file(in_path);
        const auto stack = io::read_stack(in_path);
        localizer::LocalizeStats stats;
        const auto table = localizer::localize_stack(stack, cfg.localizer, cfg.camera, thread_count(c), &stats);
        ensure_parent(out_path);
        io::write_table(table, out_path);
        write_manifest(manifest_for(out_path), "localize", cfg, args, {in_path}, {out_path});
        out << "rows=" << table.size() << " candidates=" << stats.candidates << '\n';
        return exit_ok;
    }

    int make_dataset(config::RunConfig cfg, const Common& c, const fs::path& dir, const std::string& stack_path,
                     const std::string& table_path, bool no_simulated) {
        if (!cfg.simulation.mask_pgm.empty()) cfg.simulation.scene.mask = read_mask_pgm(cfg.simulation.mask_pgm);
        cfg.validate();
        if (stack_path.empty() != table_path.empty())
            throw Error("usage", "--stack and --table must be given together");
        if (no_simulated && stack_path.empty()) throw Error("usage", "--no-simulated needs --stack and --table");
        nn::UpsampleGrid grid{cfg.nn.factor};
        std::vector<nn::PairDataset> sets;
        std::vector<fs::path> inputs;
        if (!no_simulated) {
            sets.push_back(nn::make_pairs_simulated(cfg.simulation.scene, cfg.simulation.blink, cfg.simulation.psf,
                                                    cfg.camera, cfg.codec, cfg.dataset.frames, grid, cfg.seed,
                                                    {cfg.dataset.quality_min, cfg.dataset.quality_max},
                                                    thread_count(c)));
        }
        if (!stack_path.empty()) {
            require_file(stack_path);
            require_file(table_path);
            inputs = {stack_path, table_path};
            sets.push_back(
                nn::make_pairs_from_localizations(io::read_stack(stack_path), io::read_table(table_path), grid));
        }
        std::vector<const nn::PairDataset*> ptrs;
        for (const auto& s : sets) ptrs.push_back(&s);
        nn::export_dataset(ptrs, dir);
        write_manifest(dir / "manifest.json", "make-dataset", cfg, args, inputs,
                       {dir / "x.cstk", dir / "y.cstk", dir / "dataset.json"});
        long targets = 0;
        for (const auto& s : sets) targets += s.nonzero_targets();
        out << "sources=" << sets.size() << " targets=" << targets << '\n';
        return exit_ok;
    }

    int infer(const config::RunConfig& cfg, const Common& c, const fs::path& in_path, const fs::path& weights_path,
              const fs::path& out_path) {
        cfg.validate();
        require_file(in_path);
        if (!fs::exists(weights_path)) throw Error("missing-input", "weights not found: " + weights_path.string());
        const auto weights = nn::load_weights(weights_path);
        const auto stack = io::read_stack(in_path);
        nn::NnLocalizeConfig nc;
        nc.grid.factor = cfg.nn.factor;
        nc.tile = cfg.nn.tile;
        nc.halo = cfg.nn.halo;
        const auto table = nn::nn_localize_stack(stack, weights, nc, thread_count(c));
        ensure_parent(out_path);
        io::write_table(table, out_path);
        write_manifest(manifest_for(out_path), "infer", cfg, args, {in_path, weights_path}, {out_path});
        out << "rows=" << table.size() << '\n';
        return exit_ok;
    }

    int evaluate(const config::RunConfig& cfg, const fs::path& table_path, const fs::path& gt_path,
                 const fs::path& out_path) {
        cfg.validate();
        require_file(table_path);
        require_file(gt_path);
        const auto table = io::read_table(table_path);
        const auto gt = io::read_emitters(gt_path);
        const auto m = eval::match_detailed(table, gt, {cfg.eval.radius_nm, cfg.eval.one_to_one});
        const fs::path json_path = sibling(out_path, ".json"), csv_path = sibling(out_path, ".csv");
        write_text(json_path, report_json(m.report).dump(2) + "\n");
        std::ostringstream csv;
        csv << "detection,gt,dx_nm,dy_nm,distance_nm\n";
        for (const auto& p : m.pairs)
            csv << p.detection << ',' << p.gt << ',' << io::format_number(p.dx_nm) << ','
                << io::format_number(p.dy_nm) << ',' << io::format_number(p.distance_nm) << '\n';
        write_text(csv_path, csv.str());
        write_manifest(manifest_for(out_path), "eval", cfg, args, {table_path, gt_path}, {json_path, csv_path});
        out << "matched=" << m.report.matched_count << "/" << m.report.gt_count
            << " mean_distance_nm=" << io::format_number(m.report.mean_distance_nm) << '\n';
        return exit_ok;
    }

    int frc(const config::RunConfig& cfg, const fs::path& table_path, const fs::path& out_path,
            std::optional<double> field_nm) {
        cfg.validate();
        require_file(table_path);
        const auto res = eval::frc(io::read_table(table_path), cfg.eval.frc_px_nm, cfg.seed, field_nm);
        const fs::path json_path = sibling(out_path, ".json"), csv_path = sibling(out_path, ".csv");
        Json j;
        j["pixel_nm"] = cfg.eval.frc_px_nm;
        j["threshold"] = eval::kFrcThreshold;
        j["resolution_nm"] = res.resolution_nm ? Json(*res.resolution_nm) : Json(nullptr);
        write_text(json_path, j.dump(2) + "\n");
        std::ostringstream csv;
        csv << "frequency_per_nm,correlation,raw_correlation\n";
        for (std::size_t i = 0; i < res.correlation.size(); ++i)
            csv << io::format_number(res.ring_frequencies[i]) << ',' << io::format_number(res.correlation[i]) << ','
                << io::format_number(res.raw_correlation[i]) << '\n';
        write_text(csv_path, csv.str());
        write_manifest(manifest_for(out_path), "frc", cfg, args, {table_path}, {json_path, csv_path});
        out << "resolution_nm=" << (res.resolution_nm ? io::format_number(*res.resolution_nm) : "none") << '\n';
        return exit_ok;
    }

    int render(const config::RunConfig& cfg, const std::string& table_path, const std::string& stack_path,
               const std::string& widefield_path, const fs::path& out_path) {
        cfg.validate();
        ImageD img;
        std::vector<fs::path> inputs;
        if (!widefield_path.empty()) {
            if (!table_path.empty()) throw Error("usage", "--widefield and --table are exclusive");
            require_file(widefield_path);
            inputs.push_back(widefield_path);
            img = eval::widefield(io::read_stack(widefield_path));
        } else {
            if (table_path.empty()) throw Error("usage", "render needs --table or --widefield");
            require_file(table_path);
            inputs.push_back(table_path);
            const auto table = io::read_table(table_path);
            eval::RenderGeometry geom{0.0, 0.0, cfg.eval.render_px_nm};
            if (!stack_path.empty()) {
                require_file(stack_path);
                inputs.push_back(stack_path);
                geom = eval::geometry_for(io::read_stack(stack_path), cfg.eval.render_px_nm);
            } else {
                for (const auto& r : table) {
                    geom.width_nm = std::max(geom.width_nm, r.x_nm + cfg.eval.render_px_nm);
                    geom.height_nm = std::max(geom.height_nm, r.y_nm + cfg.eval.render_px_nm);
                }
            }
            img = eval::render(table, geom, cfg.eval.blur_nm);
        }
        ensure_parent(out_path);
        eval::write_pgm16(img, out_path);
        write_manifest(manifest_for(out_path), "render", cfg, args, inputs, {out_path});
        out << "image=" << img.width << "x" << img.height << '\n';
        return exit_ok;
    }

    int sweep(const config::RunConfig& cfg, const Common& c, const sweep::SweepPlan& plan_in,
              const std::string& weights_path, const fs::path& dir) {
        cfg.validate();
        auto plan = plan_in;
        std::optional<nn::WeightArchive> weights;
        std::vector<fs::path> inputs;
        if (!weights_path.empty()) {
            if (!fs::exists(weights_path)) throw Error("missing-input", "weights not found: " + weights_path);
            weights = nn::load_weights(weights_path);
            plan.weights = &*weights;
            inputs.push_back(weights_path);
        }
        const auto report = sweep::run_sweep(cfg, plan, thread_count(c));
        write_text(dir / "sweep.csv", eval::sweep_csv(report));
        write_text(dir / "sweep_plot.json", eval::sweep_plot_json(report) + "\n");
        write_manifest(dir / "manifest.json", "sweep", cfg, args, inputs, {dir / "sweep.csv", dir / "sweep_plot.json"});
        out << "cells=" << report.cells.size() << '\n';
        return exit_ok;
    }
};

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Phone-camera SMLM simulation, compression and localization toolkit", "cellstorm"};
    app.set_version_flag("--version", std::string(CELLSTORM_VERSION));
    app.require_subcommand(1);

    Common common;
    std::string in, out_path, gt, weights, table, stack, widefield, dark, csv_path, preset, grid_offset;
    std::vector<std::string> levels;
    int frames = 0, quality = 0, qp = 0, roi = 0, factor = 0, tile = 0, halo = 0;
    double photons = 0, density = 0, threshold_k = 0, px = 0, blur = 0, field_nm = 0;
    bool no_simulated = false;
    sweep::SweepPlan plan;

    auto* cal = app.add_subcommand("calibrate", "Gain, offset and read noise from a dark stack and flat levels");
    add_common(cal, common);
    cal->add_option("--dark", dark, "Dark stack (.cstk)")->required();
    cal->add_option("--level", levels, "Uniformly illuminated stack, repeat per level")->required()->expected(1, -1);
    cal->add_option("--out", out_path, "Result JSON")->required();
    cal->add_option("--csv", csv_path, "Mean-variance scatter CSV (default <out>_points.csv)");

    auto* simc = app.add_subcommand("simulate", "Blinking emitters through the camera model");
    add_common(simc, common);
    simc->add_option("--out", out_path, "Output stack (.cstk)")->required();
    simc->add_option("--gt", gt, "Ground truth CSV (default <out>_gt.csv)");
    auto* sim_frames = simc->add_option("--frames", frames)->check(CLI::PositiveNumber);
    auto* sim_photons = simc->add_option("--photons", photons)->check(CLI::PositiveNumber);
    auto* sim_density = simc->add_option("--density", density)->check(CLI::PositiveNumber);
    auto* sim_quality = simc->add_option("--quality", quality, "Run the codec at this quality")->check(CLI::Range(0, 100));
    simc->add_option("--camera-preset", preset)->check(CLI::IsMember(camera::preset_names()));

    auto* comp = app.add_subcommand("compress", "Lossy 4x4 transform codec round trip");
    add_common(comp, common);
    comp->add_option("--in", in)->required();
    comp->add_option("--out", out_path)->required();
    auto* comp_quality = comp->add_option("--quality", quality)->check(CLI::Range(0, 100));
    auto* comp_qp = comp->add_option("--qp", qp)->check(CLI::Range(0, 51));
    auto* comp_grid = comp->add_option("--grid-offset", grid_offset, "dx,dy or random");

    auto* loc = app.add_subcommand("localize", "Classic detection + Gaussian fitting");
    add_common(loc, common);
    loc->add_option("--in", in)->required();
    loc->add_option("--out", out_path)->required();
    auto* loc_k = loc->add_option("--threshold-k", threshold_k)->check(CLI::PositiveNumber);
    auto* loc_roi = loc->add_option("--roi", roi, "ROI radius in pixels")->check(CLI::PositiveNumber);
    loc->add_option("--camera-preset", preset)->check(CLI::IsMember(camera::preset_names()));

    auto* mk = app.add_subcommand("make-dataset", "Paired stacks for generator training");
    add_common(mk, common);
    mk->add_option("--out", out_path, "Output directory")->required();
    auto* mk_frames = mk->add_option("--frames", frames)->check(CLI::PositiveNumber);
    mk->add_option("--stack", stack, "Measured stack for a localization-derived source");
    mk->add_option("--table", table, "Localizations of --stack");
    mk->add_flag("--no-simulated", no_simulated);
    auto* mk_factor = mk->add_option("--factor", factor)->check(CLI::PositiveNumber);

    auto* inf = app.add_subcommand("infer", "Generator inference and local-maximum extraction");
    add_common(inf, common);
    inf->add_option("--in", in)->required();
    inf->add_option("--weights", weights, "Weight archive directory or manifest.json")->required();
    inf->add_option("--out", out_path)->required();
    auto* inf_factor = inf->add_option("--factor", factor)->check(CLI::PositiveNumber);
    auto* inf_tile = inf->add_option("--tile", tile)->check(CLI::NonNegativeNumber);
    auto* inf_halo = inf->add_option("--halo", halo)->check(CLI::NonNegativeNumber);

    auto* ev = app.add_subcommand("eval", "Match localizations to ground truth");
    add_common(ev, common);
    ev->add_option("--table", table)->required();
    ev->add_option("--gt", gt)->required();
    ev->add_option("--out", out_path, "Report path; .json and .csv are written")->required();

    auto* fr = app.add_subcommand("frc", "Fourier ring correlation resolution");
    add_common(fr, common);
    fr->add_option("--table", table)->required();
    fr->add_option("--out", out_path, "Report path; .json and .csv are written")->required();
    auto* fr_px = fr->add_option("--px", px, "Render pixel size in nm")->check(CLI::PositiveNumber);
    auto* fr_field = fr->add_option("--field-nm", field_nm)->check(CLI::PositiveNumber);

    auto* rd = app.add_subcommand("render", "Super-resolved or widefield image as 16-bit PGM");
    add_common(rd, common);
    rd->add_option("--table", table);
    rd->add_option("--stack", stack, "Stack whose field of view sets the image size");
    rd->add_option("--widefield", widefield, "Sum the frames of this stack instead");
    rd->add_option("--out", out_path)->required();
    auto* rd_px = rd->add_option("--px", px)->check(CLI::PositiveNumber);
    auto* rd_blur = rd->add_option("--blur-nm", blur)->check(CLI::NonNegativeNumber);

    auto* sw = app.add_subcommand("sweep", "Photon x quality grid, end to end");
    add_common(sw, common);
    sw->add_option("--photons", plan.photons)->delimiter(',');
    sw->add_option("--quality", plan.qualities)->delimiter(',')->check(CLI::Range(0, 100));
    auto* sw_frames = sw->add_option("--frames", frames)->check(CLI::PositiveNumber);
    auto* sw_density = sw->add_option("--density", density)->check(CLI::PositiveNumber);
    sw->add_option("--weights", weights, "Also run the generator");
    sw->add_option("--out-dir", out_path)->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::CallForVersion&) {
        out << CELLSTORM_VERSION << '\n';
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: code=usage message=" << one_line(e.what()) << '\n';
        return exit_usage;
    }

    Runner r{args, out};
    try {
        if (cal->parsed()) return r.calibrate(common, dark, levels, out_path, csv_path);

        auto cfg = resolve(common);
        if (simc->parsed()) {
            if (*sim_frames) cfg.simulation.frames = frames;
            if (*sim_photons) cfg.simulation.blink.photons = photons;
            if (*sim_density) cfg.simulation.scene.density = density;
            if (*sim_quality) {
                cfg.codec.quality = quality;
                cfg.simulation.compress = true;
            }
            if (!preset.empty()) cfg.camera = camera::preset(preset);
            return r.simulate(cfg, common, out_path, gt);
        }
        if (comp->parsed()) {
            if (*comp_quality) cfg.codec.quality = quality;
            if (*comp_qp) cfg.codec.qp_override = qp;
            if (*comp_grid) cfg.codec.grid = parse_grid(grid_offset, cfg.codec.random_grid);
            return r.compress(cfg, common, in, out_path);
        }
        if (loc->parsed()) {
            if (*loc_k) cfg.localizer.threshold_k = threshold_k;
            if (*loc_roi) cfg.localizer.roi_radius = roi;
            if (!preset.empty()) cfg.camera = camera::preset(preset);
            return r.localize(cfg, common, in, out_path);
        }
        if (mk->parsed()) {
            if (*mk_frames) cfg.dataset.frames = frames;
            if (*mk_factor) cfg.nn.factor = factor;
            return r.make_dataset(cfg, common, out_path, stack, table, no_simulated);
        }
        if (inf->parsed()) {
            if (*inf_factor) cfg.nn.factor = factor;
            if (*inf_tile) cfg.nn.tile = tile;
            if (*inf_halo) cfg.nn.halo = halo;
            return r.infer(cfg, common, in, weights, out_path);
        }
        if (ev->parsed()) return r.evaluate(cfg, table, gt, out_path);
        if (fr->parsed()) {
            if (*fr_px) cfg.eval.frc_px_nm = px;
            return r.frc(cfg, table, out_path, *fr_field ? std::optional<double>(field_nm) : std::nullopt);
        }
        if (rd->parsed()) {
            if (*rd_px) cfg.eval.render_px_nm = px;
            if (*rd_blur) cfg.eval.blur_nm = blur;
            return r.render(cfg, table, stack, widefield, out_path);
        }
        if (sw->parsed()) {
            if (*sw_frames) cfg.simulation.frames = frames;
            if (*sw_density) cfg.simulation.scene.density = density;
            return r.sweep(cfg, common, plan, weights, out_path);
        }
        throw Error("usage", "no subcommand");
    } catch (const Error& e) {
        err << "error: code=" << e.code() << " message=" << one_line(e.what()) << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: code=internal message=" << one_line(e.what()) << '\n';
        return exit_failure;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace cellstorm::cli
