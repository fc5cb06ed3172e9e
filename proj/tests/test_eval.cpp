#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "cellstorm/eval.hpp"
#include "support.hpp"

using namespace cellstorm;
using testing::TempDir;

namespace {

Localization loc(int frame, double x, double y) { return {frame, x, y, std::nullopt, std::nullopt, std::nullopt}; }
Emitter em(int frame, double x, double y) { return {frame, x, y, 1000.0, std::nullopt}; }

// Upper tail of the chi-square distribution by direct integration of its density.
double chi2_sf(double x, int dof) {
    const double k = dof / 2.0;
    const double log_norm = -k * std::log(2.0) - std::lgamma(k);
    auto pdf = [&](double t) { return t <= 0.0 ? 0.0 : std::exp(log_norm + (k - 1.0) * std::log(t) - t / 2.0); };
    const int n = 200000;
    const double h = x / n;
    double s = pdf(0.0) + pdf(x);
    for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 ? 4.0 : 2.0);
    return 1.0 - s * h / 3.0;
}

// Points along a few random line segments, each seen `repeats` times with
// isotropic Gaussian jitter.
LocalizationTable jittered_lines(double jitter_nm, std::uint64_t seed, double field_nm = 5000.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1 * field_nm, 0.9 * field_nm), a(0.0, 3.14159265358979);
    std::normal_distribution<double> n(0.0, jitter_nm);
    LocalizationTable t;
    for (int line = 0; line < 12; ++line) {
        const double cx = u(rng), cy = u(rng), th = a(rng);
        for (int i = 0; i < 400; ++i) {
            const double s = (i / 400.0 - 0.5) * 0.5 * field_nm;
            const double x = cx + s * std::cos(th), y = cy + s * std::sin(th);
            if (x < 0 || y < 0 || x >= field_nm || y >= field_nm) continue;
            for (int r = 0; r < 4; ++r) t.push_back(loc(r, x + n(rng), y + n(rng)));
        }
    }
    return t;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("one-sided matching lets a GT event serve several detections") {
    const EmitterTable gt{em(0, 1000, 1000), em(0, 3000, 3000), em(1, 1000, 1000)};
    const LocalizationTable det{loc(0, 1030, 1040), loc(0, 980, 1000), loc(0, 5000, 5000), loc(1, 3000, 3000)};
    const auto r = eval::match_detailed(det, gt);
    CHECK(r.report.gt_count == 3);
    CHECK(r.report.detected_count == 4);
    CHECK(r.report.matched_count == 2);
    CHECK(r.report.unmatched_detections() == 2);  // far away, and wrong frame
    CHECK(r.report.mean_distance_nm == doctest::Approx((50.0 + 20.0) / 2.0));
    CHECK(r.report.rmse_nm == doctest::Approx(std::sqrt((30.0 * 30 + 40 * 40 + 20 * 20) / 4.0)));
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0].gt == 0);
    CHECK(r.pairs[1].gt == 0);

    eval::MatchOptions strict;
    strict.one_to_one = true;
    const auto s = eval::match_detailed(det, gt, strict);
    CHECK(s.report.matched_count == 1);
    CHECK(s.pairs[0].detection == 1);  // closest pair wins
}

TEST_CASE("match radius is inclusive and configurable") {
    const EmitterTable gt{em(0, 0, 0)};
    CHECK(eval::match_to_gt({loc(0, 200, 0)}, gt).matched_count == 1);
    CHECK(eval::match_to_gt({loc(0, 200.001, 0)}, gt).matched_count == 0);
    eval::MatchOptions wide;
    wide.radius_nm = 300.0;
    CHECK(eval::match_to_gt({loc(0, 250, 0)}, gt, wide).matched_count == 1);
    CHECK(eval::match_to_gt({}, gt).matched_fraction() == 0.0);
}

TEST_CASE("grid histogram follows the codec block origin") {
    const LocalizationTable rows{loc(0, 50, 50), loc(0, 150, 50), loc(0, 450, 50), loc(0, 50, 350), loc(0, 950, 750)};
    const auto h = eval::grid_histogram(rows, 100.0);
    CHECK(h[0] == 2);  // pixel column 4 wraps to phase 0
    CHECK(h[1] == 1);
    CHECK(h[12] == 1);
    CHECK(h[13] == 1);

    const auto shifted = eval::grid_histogram({loc(0, 50, 50)}, 100.0, codec::GridOffset{1, 2});
    CHECK(shifted[4 * 2 + 3] == 1);  // (0 - 1) mod 4 = 3, (0 - 2) mod 4 = 2
}

TEST_CASE("grid uniformity statistic") {
    std::array<long, 16> flat;
    flat.fill(10);
    const auto a = eval::grid_uniformity(flat);
    CHECK(a.total == 160);
    CHECK(a.chi_square == doctest::Approx(0.0));
    CHECK(a.p_value == doctest::Approx(1.0));

    std::array<long, 16> alt;
    for (int i = 0; i < 16; ++i) alt[std::size_t(i)] = i % 2 ? 12 : 8;
    const auto b = eval::grid_uniformity(alt);
    CHECK(b.chi_square == doctest::Approx(6.4));
    CHECK(b.p_value == doctest::Approx(chi2_sf(6.4, 15)).epsilon(1e-6));

    std::array<long, 16> peaked{};
    peaked[5] = 16;
    const auto c = eval::grid_uniformity(peaked);
    CHECK(c.chi_square == doctest::Approx(240.0));
    CHECK(c.p_value < 1e-30);

    std::array<long, 16> empty{};
    CHECK(eval::grid_uniformity(empty).p_value == 1.0);
}

TEST_CASE("sweep report shape and CSV") {
    eval::SweepReport r;
    r.methods = {"classic"};
    r.photons = {100, 1000};
    r.qualities = {70, 100};
    for (double p : r.photons)
        for (int q : r.qualities) {
            eval::SweepCell c;
            c.method = "classic";
            c.photons = p;
            c.quality = q;
            c.report.gt_count = 10;
            c.report.matched_count = q == 100 ? 9 : 7;
            c.report.detected_count = 9;
            c.report.mean_distance_nm = 1000.0 / p;
            r.cells.push_back(c);
        }
    CHECK_NOTHROW(r.validate());
    CHECK(r.cell("classic", 1000, 70).report.matched_count == 7);

    const auto csv = eval::sweep_csv(r);
    std::stringstream ss(csv);
    std::string header;
    std::getline(ss, header);
    CHECK(header.rfind("method,photons,quality,gt_count,detected_count,matched_count", 0) == 0);
    int lines = 0;
    for (std::string l; std::getline(ss, l);) lines += !l.empty();
    CHECK(lines == 4);

    const auto plot = nlohmann::json::parse(eval::sweep_plot_json(r));
    CHECK(plot["series"].size() == 2);
    CHECK(plot["series"][0]["matched_count"][1] == 7);

    auto missing = r;
    missing.cells.pop_back();
    try {
        missing.validate();
        FAIL("expected missing cell");
    } catch (const Error& e) {
        CHECK(e.code() == "sweep-missing-cell");
    }
    auto dup = r;
    dup.cells.back() = dup.cells.front();
    CHECK_THROWS_AS(dup.validate(), Error);
}

TEST_CASE("render bins localizations and writes PGM") {
    const eval::RenderGeometry g{100.0, 50.0, 10.0};
    CHECK(g.width_px() == 10);
    CHECK(g.height_px() == 5);
    const auto img = eval::render({loc(0, 5, 5), loc(1, 9.9, 0), loc(0, 95, 45), loc(0, 150, 10), loc(0, -1, 10)}, g);
    CHECK(img.at(0, 0) == 2.0);
    CHECK(img.at(9, 4) == 1.0);
    double total = 0.0;
    for (double v : img.data) total += v;
    CHECK(total == 3.0);

    const auto blurred = eval::render({loc(0, 55, 25)}, g, 15.0);
    double bsum = 0.0;
    for (double v : blurred.data) bsum += v;
    CHECK(bsum == doctest::Approx(1.0).epsilon(0.05));
    CHECK(blurred.at(5, 2) > blurred.at(4, 2));

    TempDir dir("eval");
    eval::write_pgm16(img, dir / "r.pgm");
    const auto bytes = testing::slurp(dir / "r.pgm");
    const std::string head = "P5\n10 5\n65535\n";
    REQUIRE(bytes.size() == head.size() + 100);
    CHECK(bytes.substr(0, head.size()) == head);
    CHECK(std::uint8_t(bytes[head.size()]) == 0);
    CHECK(std::uint8_t(bytes[head.size() + 1]) == 2);  // big-endian 2

    auto fs = FrameStack::zeros(3, 2, 2);
    fs.data = {1, 2, 3, 4, 5, 6, 10, 20, 30, 40, 50, 60};
    const auto wf = eval::widefield(fs);
    CHECK(wf.at(0, 0) == 11.0);
    CHECK(wf.at(2, 1) == 66.0);
}

TEST_CASE("FRC of an image with itself is one on every ring") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageD a(64, 64);
    for (auto& v : a.data) v = u(rng);
    const auto r = eval::frc_images(a, a, 10.0);
    REQUIRE(r.correlation.size() == 33);
    for (double c : r.raw_correlation) CHECK(c == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(r.resolution_nm.has_value());
    CHECK(r.ring_frequencies[32] == doctest::Approx(1.0 / 20.0));

    ImageD b(64, 64);
    for (auto& v : b.data) v = u(rng);
    const auto n = eval::frc_images(a, b, 10.0);
    REQUIRE(n.resolution_nm.has_value());
}

TEST_CASE("FRC resolution worsens with localization jitter") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto fine = eval::frc(jittered_lines(20.0, seed), 10.0, seed, 5000.0);
        const auto coarse = eval::frc(jittered_lines(40.0, seed), 10.0, seed, 5000.0);
        REQUIRE(fine.resolution_nm.has_value());
        REQUIRE(coarse.resolution_nm.has_value());
        CHECK(*fine.resolution_nm < *coarse.resolution_nm);
    }
}

TEST_CASE("FRC needs enough localizations and is seeded") {
    LocalizationTable few(99, loc(0, 10, 10));
    try {
        eval::frc(few, 10.0, 1);
        FAIL("expected insufficient data");
    } catch (const Error& e) {
        CHECK(e.code() == "insufficient-data");
    }
    const auto t = jittered_lines(30.0, 5);
    const auto a = eval::frc(t, 10.0, 9), b = eval::frc(t, 10.0, 9);
    CHECK(a.correlation == b.correlation);
}

}
