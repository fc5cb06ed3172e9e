#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "cellstorm/sim.hpp"
#include "oracles.hpp"

using namespace cellstorm;

TEST_SUITE("sim") {

TEST_CASE("site count follows density and field area") {
    sim::SimScene scene;
    scene.fov_um = 10.0;
    scene.density = 6.0;
    CHECK(scene.site_count() == 600);
    CHECK(sim::generate_sites(scene, 1).size() == 600);
    scene.fov_um = 6.4;
    CHECK(scene.width_px() == 64);
}

TEST_CASE("sites lie inside the field for every structure") {
    sim::SimScene scene;
    for (auto s : {sim::Structure::uniform_random, sim::Structure::line_set}) {
        scene.structure = s;
        for (const auto& site : sim::generate_sites(scene, 3)) {
            CHECK(site.x_nm >= 0.0);
            CHECK(site.x_nm < 6400.0);
            CHECK(site.y_nm >= 0.0);
            CHECK(site.y_nm < 6400.0);
        }
    }
    scene.structure = sim::Structure::bitmap_mask;
    Image<std::uint8_t> mask(8, 8, 0);
    mask.at(2, 5) = 255;
    scene.mask = mask;
    for (const auto& site : sim::generate_sites(scene, 4)) {
        CHECK(int(site.x_nm / 800.0) == 2);
        CHECK(int(site.y_nm / 800.0) == 5);
    }
    scene.mask = Image<std::uint8_t>(8, 8, 0);
    CHECK_THROWS_AS(sim::generate_sites(scene, 4), Error);
}

TEST_CASE("no activation gives an empty table") {
    sim::BlinkModel blink;
    blink.p_on = 0.0;
    CHECK(sim::generate_ground_truth(sim::SimScene{}, blink, 50, 1).empty());
}

TEST_CASE("event count matches the binomial expectation") {
    sim::SimScene scene;
    sim::BlinkModel blink;
    const int frames = 2000;
    const auto gt = sim::generate_ground_truth(scene, blink, frames, 17);
    const double n = double(frames) * scene.site_count();
    const double mean = n * blink.p_on, sd = std::sqrt(n * blink.p_on * (1 - blink.p_on));
    CHECK(std::abs(double(gt.size()) - mean) < 3 * sd);
    for (std::size_t i = 1; i < gt.size(); ++i) CHECK(gt[i - 1].frame <= gt[i].frame);
}

TEST_CASE("on-times are geometric with the configured mean") {
    sim::SimScene scene;
    sim::BlinkModel blink;
    blink.p_on = 0.01;
    blink.mean_on_frames = 4.0;
    const auto gt = sim::generate_ground_truth(scene, blink, 3000, 8);
    // Count runs of consecutive frames per site id.
    std::map<std::int64_t, std::vector<int>> frames_by_site;
    for (const auto& e : gt) frames_by_site[*e.id].push_back(e.frame);
    long runs = 0, on = 0;
    for (auto& [id, f] : frames_by_site) {
        for (std::size_t i = 0; i < f.size(); ++i)
            if (i == 0 || f[i] != f[i - 1] + 1) ++runs;
        on += long(f.size());
    }
    CHECK(double(on) / double(runs) == doctest::Approx(4.0).epsilon(0.08));
}

TEST_CASE("photon map: pixel integrals, symmetry, normalisation, linearity") {
    sim::PsfModel psf;  // 130 nm
    const double px = 100.0;
    const Emitter centred{0, 10.5 * px, 10.5 * px, 1000.0, std::nullopt};
    const auto map = sim::render_photon_map(std::span(&centred, 1), psf, 21, 21, px);

    double total = std::accumulate(map.data.begin(), map.data.end(), 0.0);
    CHECK(total == doctest::Approx(1000.0).epsilon(1e-3));
    for (int y = 0; y < 21; ++y)
        for (int x = 0; x < 21; ++x) {
            // 90 degree rotation about pixel (10, 10).
            CHECK(map.at(x, y) == doctest::Approx(map.at(20 - y, x)).epsilon(1e-12));
        }
    for (int y = 8; y <= 12; ++y)
        for (int x = 8; x <= 12; ++x)
            CHECK(map.at(x, y) == doctest::Approx(1000.0 * oracle::pixel_mass(10.5, 10.5, 1.3, x, y)).epsilon(1e-9));

    const Emitter other{0, 4.2 * px, 13.7 * px, 300.0, std::nullopt};
    const std::vector<Emitter> both{centred, other};
    const auto sum = sim::render_photon_map(both, psf, 21, 21, px);
    const auto single = sim::render_photon_map(std::span(&other, 1), psf, 21, 21, px);
    for (std::size_t i = 0; i < sum.data.size(); ++i)
        CHECK(sum.data[i] == doctest::Approx(map.data[i] + single.data[i]).epsilon(1e-12));

    CHECK(sim::render_photon_map({}, psf, 5, 5, px).data == std::vector<double>(25, 0.0));
}

TEST_CASE("off-centre emitter matches the quadrature oracle") {
    sim::PsfModel psf;
    psf.sigma_nm = 160.0;
    const Emitter e{0, 733.0, 512.0, 500.0, std::nullopt};
    const auto map = sim::render_photon_map(std::span(&e, 1), psf, 16, 16, 100.0);
    for (int y = 2; y <= 8; ++y)
        for (int x = 4; x <= 10; ++x)
            CHECK(map.at(x, y) == doctest::Approx(500.0 * oracle::pixel_mass(7.33, 5.12, 1.6, x, y)).epsilon(1e-9));
}

TEST_CASE("simulate_stack is deterministic and equals stage-by-stage composition") {
    sim::SimScene scene;
    scene.fov_um = 3.2;
    sim::BlinkModel blink;
    blink.p_on = 0.1;
    sim::PsfModel psf;
    camera::CameraModel cam;
    codec::CodecConfig codec;
    codec.quality = 70;
    codec.random_grid = true;

    const auto a = sim::simulate_stack(scene, blink, psf, cam, codec, 12, 99, 3);
    const auto b = sim::simulate_stack(scene, blink, psf, cam, codec, 12, 99, 1);
    CHECK(a.stack.data == b.stack.data);
    CHECK(a.ground_truth == b.ground_truth);

    const auto gt = sim::generate_ground_truth(scene, blink, 12, 99);
    CHECK(gt == a.ground_truth);
    auto manual = FrameStack::zeros(32, 32, 12, 100.0, scene.fps, 12);
    const auto ranges = sim::frame_ranges(gt, 12);
    for (int t = 0; t < 12; ++t) {
        std::span<const Emitter> ev(gt.data() + ranges[std::size_t(t)].first,
                                    ranges[std::size_t(t)].second - ranges[std::size_t(t)].first);
        manual.set_frame(t, camera::apply_camera(sim::render_photon_map(ev, psf, 32, 32, 100.0), cam, t, scene.fps, 99));
    }
    manual = codec::transcode_stack(manual, codec, 99);
    CHECK(manual.data == a.stack.data);
    CHECK(a.grid == codec::resolve_grid(codec, 99));
}

TEST_CASE("dark simulation stays near the offset") {
    sim::BlinkModel blink;
    blink.p_on = 0.0;
    camera::CameraModel cam;
    const auto r = sim::simulate_stack(sim::SimScene{}, blink, sim::PsfModel{}, cam, std::nullopt, 5, 4);
    CHECK(r.ground_truth.empty());
    for (auto v : r.stack.data) {
        const bool ok = v == 0 || (v >= cam.clip_floor && v <= cam.offset + 6 * cam.read_noise / cam.gain);
        CHECK(ok);
    }
}

TEST_CASE("invalid models are rejected") {
    sim::BlinkModel blink;
    blink.mean_on_frames = 0.5;
    CHECK_THROWS_AS(blink.validate(), Error);
    sim::PsfModel psf;
    psf.sigma_nm = 0.0;
    CHECK_THROWS_AS(psf.validate(), Error);
    CHECK_THROWS_AS(sim::parse_structure("spiral"), Error);
}

}
