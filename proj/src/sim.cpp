#include "cellstorm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cellstorm/parallel.hpp"
#include "cellstorm/rng.hpp"

namespace cellstorm::sim {

Structure parse_structure(const std::string& name) {
    if (name == "uniform-random") return Structure::uniform_random;
    if (name == "line-set") return Structure::line_set;
    if (name == "bitmap-mask") return Structure::bitmap_mask;
    throw Error("config", "unknown structure '" + name + "'");
}

std::string to_string(Structure s) {
    switch (s) {
    case Structure::uniform_random: return "uniform-random";
    case Structure::line_set: return "line-set";
    case Structure::bitmap_mask: return "bitmap-mask";
    }
    return "?";
}

void SimScene::validate() const {
    if (!(fov_um > 0.0)) throw Error("config", "simulation.fov_um must be > 0");
    if (!(pixel_nm > 0.0) || !(fps > 0.0)) throw Error("config", "simulation.pixel_nm and fps must be > 0");
    if (!(density > 0.0)) throw Error("config", "simulation.density must be > 0");
    if (!(background_photons >= 0.0)) throw Error("config", "simulation.background_photons must be >= 0");
    if (structure == Structure::line_set && n_lines < 1) throw Error("config", "line-set needs n_lines >= 1");
    if (structure == Structure::bitmap_mask) {
        if (!mask || mask->width <= 0 || mask->height <= 0) throw Error("invalid-input", "bitmap-mask without a mask");
        if (std::none_of(mask->data.begin(), mask->data.end(), [](auto v) { return v != 0; }))
            throw Error("invalid-input", "bitmap mask is empty");
    }
}

int SimScene::width_px() const { return int(std::ceil(fov_um * 1000.0 / pixel_nm - 1e-9)); }

int SimScene::site_count() const { return int(std::lround(density * fov_um * fov_um)); }

void BlinkModel::validate() const {
    if (!(p_on >= 0.0 && p_on <= 1.0)) throw Error("config", "blink.p_on must be in [0,1]");
    if (!(mean_on_frames >= 1.0)) throw Error("config", "blink.mean_on_frames must be >= 1");
    if (!(photons > 0.0)) throw Error("config", "blink.photons must be > 0");
}

void PsfModel::validate() const {
    if (!(sigma_nm > 0.0)) throw Error("config", "psf.sigma_nm must be > 0");
    if (truncation_radius_px && !(*truncation_radius_px > 0.0))
        throw Error("config", "psf.truncation_radius_px must be > 0");
}

double PsfModel::radius_px(double pixel_nm) const {
    return truncation_radius_px ? *truncation_radius_px : 4.0 * sigma_px(pixel_nm);
}

std::vector<Site> generate_sites(const SimScene& scene, std::uint64_t seed) {
    scene.validate();
    auto rng = make_rng(seed, Stream::ground_truth, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double fov_nm = scene.fov_um * 1000.0;
    const int n = scene.site_count();
    std::vector<Site> sites;
    sites.reserve(std::size_t(n));

    switch (scene.structure) {
    case Structure::uniform_random:
        for (int i = 0; i < n; ++i) sites.push_back({unit(rng) * fov_nm, unit(rng) * fov_nm});
        break;
    case Structure::line_set: {
        struct Line { double cx, cy, ux, uy; };
        std::vector<Line> lines;
        for (int l = 0; l < scene.n_lines; ++l) {
            const double a = unit(rng) * std::numbers::pi;
            lines.push_back({unit(rng) * fov_nm, unit(rng) * fov_nm, std::cos(a), std::sin(a)});
        }
        std::uniform_int_distribution<int> pick(0, scene.n_lines - 1);
        while (int(sites.size()) < n) {
            const auto& ln = lines[std::size_t(pick(rng))];
            const double t = (unit(rng) - 0.5) * 2.0 * fov_nm;
            const double x = ln.cx + t * ln.ux, y = ln.cy + t * ln.uy;
            if (x >= 0.0 && x < fov_nm && y >= 0.0 && y < fov_nm) sites.push_back({x, y});
        }
        break;
    }
    case Structure::bitmap_mask: {
        const auto& m = *scene.mask;
        std::vector<std::size_t> support;
        for (std::size_t i = 0; i < m.data.size(); ++i)
            if (m.data[i]) support.push_back(i);
        std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
        const double cw = fov_nm / m.width, ch = fov_nm / m.height;
        for (int i = 0; i < n; ++i) {
            const std::size_t idx = support[pick(rng)];
            const double mx = double(idx % std::size_t(m.width)), my = double(idx / std::size_t(m.width));
            sites.push_back({std::min((mx + unit(rng)) * cw, std::nextafter(fov_nm, 0.0)),
                             std::min((my + unit(rng)) * ch, std::nextafter(fov_nm, 0.0))});
        }
        break;
    }
    }
    return sites;
}

EmitterTable generate_ground_truth(const SimScene& scene, const BlinkModel& blink, int n_frames,
                                   std::uint64_t seed) {
    if (n_frames < 1) throw Error("invalid-input", "n_frames must be >= 1");
    blink.validate();
    const auto sites = generate_sites(scene, seed);
    auto rng = make_rng(seed, Stream::ground_truth, 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::poisson_distribution<long long> emitted(blink.photons);
    const double keep_on = 1.0 - 1.0 / blink.mean_on_frames;

    EmitterTable table;
    std::vector<char> on(sites.size(), 0);
    for (int t = 0; t < n_frames; ++t) {
        for (std::size_t s = 0; s < sites.size(); ++s) {
            const bool continuing = on[s] && keep_on > 0.0 && unit(rng) < keep_on;
            on[s] = continuing || (blink.p_on > 0.0 && unit(rng) < blink.p_on);
            if (!on[s]) continue;
            const auto photons = emitted(rng);
            if (photons <= 0) continue;
            table.push_back({t, sites[s].x_nm, sites[s].y_nm, double(photons), std::int64_t(s)});
        }
    }
    return table;
}

ImageD render_photon_map(std::span<const Emitter> events, const PsfModel& psf, int width, int height,
                         double pixel_nm) {
    psf.validate();
    ImageD map(width, height, 0.0);
    const double sigma = psf.sigma_px(pixel_nm);
    const double radius = psf.radius_px(pixel_nm);
    const double inv = 1.0 / (std::numbers::sqrt2 * sigma);
    std::vector<double> ex, ey;
    for (const auto& e : events) {
        const double cx = e.x_nm / pixel_nm, cy = e.y_nm / pixel_nm;
        const int x0 = std::max(0, int(std::floor(cx - radius)));
        const int x1 = std::min(width - 1, int(std::floor(cx + radius)));
        const int y0 = std::max(0, int(std::floor(cy - radius)));
        const int y1 = std::min(height - 1, int(std::floor(cy + radius)));
        if (x0 > x1 || y0 > y1) continue;
        ex.resize(std::size_t(x1 - x0 + 1));
        ey.resize(std::size_t(y1 - y0 + 1));
        for (int x = x0; x <= x1; ++x)
            ex[std::size_t(x - x0)] = 0.5 * (std::erf((x + 1 - cx) * inv) - std::erf((x - cx) * inv));
        for (int y = y0; y <= y1; ++y)
            ey[std::size_t(y - y0)] = 0.5 * (std::erf((y + 1 - cy) * inv) - std::erf((y - cy) * inv));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                map.at(x, y) += e.photons * ex[std::size_t(x - x0)] * ey[std::size_t(y - y0)];
    }
    return map;
}

std::vector<std::pair<std::size_t, std::size_t>> frame_ranges(const EmitterTable& table, int n_frames) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges(std::size_t(std::max(0, n_frames)), {0, 0});
    std::size_t i = 0;
    for (int t = 0; t < n_frames; ++t) {
        while (i < table.size() && table[i].frame < t) ++i;
        const std::size_t first = i;
        while (i < table.size() && table[i].frame == t) ++i;
        ranges[std::size_t(t)] = {first, i};
    }
    return ranges;
}

SimResult simulate_stack(const SimScene& scene, const BlinkModel& blink, const PsfModel& psf,
                         const camera::CameraModel& cam, const std::optional<codec::CodecConfig>& codec,
                         int n_frames, std::uint64_t seed, int threads) {
    scene.validate();
    psf.validate();
    cam.validate();
    SimResult res;
    res.ground_truth = generate_ground_truth(scene, blink, n_frames, seed);
    const int w = scene.width_px(), h = scene.height_px();
    res.stack = FrameStack::zeros(w, h, n_frames, scene.pixel_nm, scene.fps, cam.bit_depth);
    const auto ranges = frame_ranges(res.ground_truth, n_frames);

    parallel_for(n_frames, threads, [&](int t) {
        const auto [first, last] = ranges[std::size_t(t)];
        std::span<const Emitter> events(res.ground_truth.data() + first, last - first);
        ImageD photons = render_photon_map(events, psf, w, h, scene.pixel_nm);
        if (scene.background_photons > 0.0)
            for (auto& p : photons.data) p += scene.background_photons;
        res.stack.set_frame(t, camera::apply_camera(photons, cam, t, scene.fps, seed));
    });

    if (codec) {
        res.grid = codec::resolve_grid(*codec, seed);
        res.stack = codec::transcode_stack(res.stack, *codec, seed, threads);
    }
    return res;
}

} // namespace cellstorm::sim
