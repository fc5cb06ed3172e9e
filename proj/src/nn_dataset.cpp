#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "cellstorm/io.hpp"
#include "cellstorm/nn.hpp"
#include "cellstorm/rng.hpp"

namespace cellstorm::nn {

int target_index(double coord_nm, double pixel_nm, int factor) {
    return int(std::floor(coord_nm / (pixel_nm / factor)));
}

TrainingPair PairDataset::pair(int t) const {
    TrainingPair p;
    p.x = prepare_frame(frames, t, grid);
    p.y = ImageF(p.x.width, p.x.height, 0.0f);
    for (const auto& s : targets[std::size_t(t)]) p.y.at(s.x, s.y) = s.value;
    return p;
}

long PairDataset::nonzero_targets() const {
    long n = 0;
    for (const auto& f : targets) n += long(f.size());
    return n;
}

namespace {

struct RawTarget {
    int frame;
    double x_nm, y_nm, brightness;
};

// Places one pixel per row; rows landing on an occupied pixel keep the
// brighter value and count as a collision.
void build_targets(PairDataset& ds, const std::vector<RawTarget>& rows, double norm) {
    const int w = ds.frames.width * ds.grid.factor, h = ds.frames.height * ds.grid.factor;
    ds.targets.assign(std::size_t(ds.frames.n_frames), {});
    ds.source_rows = long(rows.size());
    std::vector<std::map<std::pair<int, int>, std::size_t>> occupied(std::size_t(ds.frames.n_frames));
    for (const auto& r : rows) {
        if (r.frame < 0 || r.frame >= ds.frames.n_frames)
            throw Error("invalid-input", "table row references frame " + std::to_string(r.frame + 1) +
                                             " outside the stack");
        const int x = std::clamp(target_index(r.x_nm, ds.frames.pixel_nm, ds.grid.factor), 0, w - 1);
        const int y = std::clamp(target_index(r.y_nm, ds.frames.pixel_nm, ds.grid.factor), 0, h - 1);
        const float value = float(r.brightness / norm);
        auto& occ = occupied[std::size_t(r.frame)];
        auto& frame_targets = ds.targets[std::size_t(r.frame)];
        if (auto it = occ.find({x, y}); it != occ.end()) {
            ++ds.collisions;
            auto& existing = frame_targets[it->second];
            existing.value = std::max(existing.value, value);
            continue;
        }
        occ[{x, y}] = frame_targets.size();
        frame_targets.push_back({x, y, value});
    }
}

} // namespace

PairDataset make_pairs_simulated(const sim::SimScene& scene, const sim::BlinkModel& blink, const sim::PsfModel& psf,
                                 const camera::CameraModel& cam, const codec::CodecConfig& codec, int n_frames,
                                 const UpsampleGrid& grid, std::uint64_t seed, std::pair<int, int> quality_range,
                                 int threads) {
    grid.validate();
    if (quality_range.first > quality_range.second) throw Error("config", "empty quality range");
    auto rng = make_rng(seed, Stream::dataset);
    codec::CodecConfig clip_codec = codec;
    clip_codec.quality = std::uniform_int_distribution<int>(quality_range.first, quality_range.second)(rng);
    clip_codec.random_grid = true;

    auto sim = sim::simulate_stack(scene, blink, psf, cam, clip_codec, n_frames, seed, threads);
    PairDataset ds;
    ds.frames = std::move(sim.stack);
    ds.grid = grid;
    ds.quality = clip_codec.quality;
    ds.codec_grid = sim.grid;
    ds.origin = "simulated";

    double max_photons = 0.0;
    std::vector<RawTarget> rows;
    rows.reserve(sim.ground_truth.size());
    for (const auto& e : sim.ground_truth) {
        max_photons = std::max(max_photons, e.photons);
        rows.push_back({e.frame, e.x_nm, e.y_nm, e.photons});
    }
    build_targets(ds, rows, max_photons > 0.0 ? max_photons : 1.0);
    return ds;
}

PairDataset make_pairs_from_localizations(const FrameStack& stack, const LocalizationTable& table,
                                          const UpsampleGrid& grid) {
    grid.validate();
    if (table.empty()) throw Error("invalid-input", "localization table is empty");
    PairDataset ds;
    ds.frames = stack;
    ds.grid = grid;
    ds.origin = "localized";

    double max_intensity = 0.0;
    std::vector<RawTarget> rows;
    rows.reserve(table.size());
    for (const auto& r : table) {
        const double b = r.intensity.value_or(1.0);
        max_intensity = std::max(max_intensity, b);
        rows.push_back({r.frame, r.x_nm, r.y_nm, b});
    }
    build_targets(ds, rows, max_intensity > 0.0 ? max_intensity : 1.0);
    return ds;
}

void export_dataset(const std::vector<const PairDataset*>& sources, const std::filesystem::path& dir) {
    if (sources.empty()) throw Error("invalid-input", "no dataset sources");
    int per_source = sources.front()->size();
    for (const auto* s : sources) per_source = std::min(per_source, s->size());
    if (per_source <= 0) throw Error("invalid-input", "dataset source has no frames");

    const auto& first = sources.front()->frames;
    const int factor = sources.front()->grid.factor;
    for (const auto* s : sources)
        if (s->frames.width != first.width || s->frames.height != first.height || s->grid.factor != factor ||
            s->frames.bit_depth != first.bit_depth)
            throw Error("invalid-input", "dataset sources disagree on geometry");

    const int total = per_source * int(sources.size());
    const int uw = first.width * factor, uh = first.height * factor;
    FrameStack xs = FrameStack::zeros(uw, uh, total, first.pixel_nm / factor, first.fps, first.bit_depth);
    FrameStack ys = FrameStack::zeros(uw, uh, total, first.pixel_nm / factor, first.fps, 16);

    nlohmann::ordered_json manifest;
    manifest["format"] = "cellstorm-pairs";
    manifest["version"] = 1;
    manifest["factor"] = factor;
    manifest["pixel_nm"] = first.pixel_nm;
    manifest["x_scale"] = double(first.max_value());
    manifest["y_scale"] = kTargetScale;
    manifest["frames"] = total;
    manifest["sources"] = nlohmann::ordered_json::array();

    // Interleave sources frame by frame so any prefix keeps the mix ratio.
    int out = 0;
    for (int t = 0; t < per_source; ++t)
        for (const auto* s : sources) {
            auto src = s->frames.frame(t);
            auto dst = xs.frame(out);
            for (int y = 0; y < uh; ++y)
                for (int x = 0; x < uw; ++x)
                    dst[std::size_t(y) * std::size_t(uw) + std::size_t(x)] =
                        src[std::size_t(y / factor) * std::size_t(first.width) + std::size_t(x / factor)];
            auto ydst = ys.frame(out);
            for (const auto& tg : s->targets[std::size_t(t)])
                ydst[std::size_t(tg.y) * std::size_t(uw) + std::size_t(tg.x)] =
                    std::uint16_t(std::lround(std::clamp(double(tg.value), 0.0, 1.0) * kTargetScale));
            ++out;
        }
    for (const auto* s : sources) {
        nlohmann::ordered_json js;
        js["origin"] = s->origin;
        js["frames_used"] = per_source;
        js["source_rows"] = s->source_rows;
        js["collisions"] = s->collisions;
        js["quality"] = s->quality;
        js["grid_offset"] = {s->codec_grid.dx, s->codec_grid.dy};
        manifest["sources"].push_back(js);
    }

    std::filesystem::create_directories(dir);
    io::write_stack(xs, dir / "x.cstk");
    io::write_stack(ys, dir / "y.cstk");
    std::ofstream mf(dir / "dataset.json", std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw Error("io", "cannot write " + (dir / "dataset.json").string());
}

} // namespace cellstorm::nn
