#include "cellstorm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "cellstorm/io.hpp"

namespace cellstorm::eval {

namespace {

template <typename Row>
std::map<int, std::vector<std::size_t>> by_frame(const std::vector<Row>& rows) {
    std::map<int, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < rows.size(); ++i) out[rows[i].frame].push_back(i);
    return out;
}

} // namespace

MatchResult match_detailed(const LocalizationTable& det, const EmitterTable& gt, const MatchOptions& opt) {
    MatchResult res;
    res.report.radius_nm = opt.radius_nm;
    res.report.gt_count = long(gt.size());
    res.report.detected_count = long(det.size());
    const auto gt_frames = by_frame(gt);
    const auto det_frames = by_frame(det);
    const double r2 = opt.radius_nm * opt.radius_nm;

    std::vector<char> matched(det.size(), 0);
    for (const auto& [frame, dets] : det_frames) {
        auto it = gt_frames.find(frame);
        if (it == gt_frames.end()) continue;
        const auto& gts = it->second;
        if (!opt.one_to_one) {
            for (auto d : dets) {
                double best = r2;
                std::optional<std::size_t> best_g;
                for (auto g : gts) {
                    const double dx = det[d].x_nm - gt[g].x_nm, dy = det[d].y_nm - gt[g].y_nm;
                    const double dd = dx * dx + dy * dy;
                    if (dd <= best && (!best_g || dd < best)) {
                        best = dd;
                        best_g = g;
                    }
                }
                if (!best_g) continue;
                matched[d] = 1;
                res.pairs.push_back({d, *best_g, det[d].x_nm - gt[*best_g].x_nm, det[d].y_nm - gt[*best_g].y_nm,
                                     std::sqrt(best)});
            }
        } else {
            struct Cand { double dd; std::size_t d, g; };
            std::vector<Cand> cands;
            for (auto d : dets)
                for (auto g : gts) {
                    const double dx = det[d].x_nm - gt[g].x_nm, dy = det[d].y_nm - gt[g].y_nm;
                    if (dx * dx + dy * dy <= r2) cands.push_back({dx * dx + dy * dy, d, g});
                }
            std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.dd < b.dd; });
            std::vector<char> gt_used(gt.size(), 0);
            for (const auto& c : cands) {
                if (matched[c.d] || gt_used[c.g]) continue;
                matched[c.d] = 1;
                gt_used[c.g] = 1;
                res.pairs.push_back({c.d, c.g, det[c.d].x_nm - gt[c.g].x_nm, det[c.d].y_nm - gt[c.g].y_nm,
                                     std::sqrt(c.dd)});
            }
        }
    }
    std::sort(res.pairs.begin(), res.pairs.end(), [](const MatchPair& a, const MatchPair& b) { return a.detection < b.detection; });
    for (std::size_t d = 0; d < det.size(); ++d)
        if (!matched[d]) res.unmatched.push_back(d);

    res.report.matched_count = long(res.pairs.size());
    if (!res.pairs.empty()) {
        double sum = 0.0, sq = 0.0;
        for (const auto& p : res.pairs) {
            sum += p.distance_nm;
            sq += p.dx_nm * p.dx_nm + p.dy_nm * p.dy_nm;
        }
        res.report.mean_distance_nm = sum / double(res.pairs.size());
        res.report.rmse_nm = std::sqrt(sq / (2.0 * double(res.pairs.size())));
    }
    return res;
}

MatchReport match_to_gt(const LocalizationTable& det, const EmitterTable& gt, const MatchOptions& opt) {
    return match_detailed(det, gt, opt).report;
}

std::array<long, 16> grid_histogram(const LocalizationTable& rows, double pixel_nm, codec::GridOffset grid) {
    std::array<long, 16> counts{};
    auto phase = [](double coord_nm, double px, int offset) {
        const long c = long(std::floor(coord_nm / px)) - offset;
        return int(((c % 4) + 4) % 4);
    };
    for (const auto& r : rows)
        ++counts[std::size_t(4 * phase(r.y_nm, pixel_nm, grid.dy) + phase(r.x_nm, pixel_nm, grid.dx))];
    return counts;
}

GridTest grid_uniformity(const std::array<long, 16>& counts) {
    GridTest t;
    for (long c : counts) t.total += c;
    if (t.total == 0) return t;
    const double expected = double(t.total) / 16.0;
    for (long c : counts) t.chi_square += (double(c) - expected) * (double(c) - expected) / expected;
    t.p_value = boost::math::gamma_q(15.0 / 2.0, t.chi_square / 2.0);
    return t;
}

const SweepCell& SweepReport::cell(const std::string& method, double ph, int q) const {
    for (const auto& c : cells)
        if (c.method == method && c.photons == ph && c.quality == q) return c;
    throw Error("sweep-missing-cell", "no sweep cell for method=" + method + " photons=" + io::format_number(ph) +
                                          " quality=" + std::to_string(q));
}

void SweepReport::validate() const {
    for (const auto& m : methods)
        for (double p : photons)
            for (int q : qualities) {
                const auto n = std::count_if(cells.begin(), cells.end(), [&](const SweepCell& c) {
                    return c.method == m && c.photons == p && c.quality == q;
                });
                if (n != 1)
                    throw Error("sweep-missing-cell", "sweep cell method=" + m + " photons=" + io::format_number(p) +
                                                          " quality=" + std::to_string(q) + " appears " +
                                                          std::to_string(n) + " times");
            }
}

std::string sweep_csv(const SweepReport& r) {
    r.validate();
    std::ostringstream out;
    out << "method,photons,quality,gt_count,detected_count,matched_count,matched_fraction,mean_distance_nm,rmse_nm,"
           "unmatched_detections,false_grid_p\n";
    for (const auto& m : r.methods)
        for (double p : r.photons)
            for (int q : r.qualities) {
                const auto& cell = r.cell(m, p, q);
                const auto& c = cell.report;
                out << m << ',' << io::format_number(p) << ',' << q << ',' << c.gt_count << ',' << c.detected_count
                    << ',' << c.matched_count << ',' << io::format_number(c.matched_fraction()) << ','
                    << io::format_number(c.mean_distance_nm) << ',' << io::format_number(c.rmse_nm) << ','
                    << c.unmatched_detections() << ','
                    << io::format_number(grid_uniformity(cell.false_grid_histogram).p_value) << '\n';
            }
    return out.str();
}

std::string sweep_plot_json(const SweepReport& r) {
    r.validate();
    nlohmann::ordered_json j;
    j["photons"] = r.photons;
    j["qualities"] = r.qualities;
    j["series"] = nlohmann::ordered_json::array();
    for (const auto& m : r.methods)
        for (int q : r.qualities) {
            nlohmann::ordered_json s;
            s["method"] = m;
            s["quality"] = q;
            std::vector<long> bars, gt;
            std::vector<double> lines;
            for (double p : r.photons) {
                const auto& c = r.cell(m, p, q).report;
                bars.push_back(c.matched_count);
                gt.push_back(c.gt_count);
                lines.push_back(c.mean_distance_nm);
            }
            s["matched_count"] = bars;
            s["mean_distance_nm"] = lines;
            s["gt_count"] = gt;
            j["series"].push_back(s);
        }
    return j.dump(2);
}

} // namespace cellstorm::eval
