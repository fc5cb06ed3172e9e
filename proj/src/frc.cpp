#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <random>

#include <fftw3.h>

#include "cellstorm/eval.hpp"
#include "cellstorm/rng.hpp"

namespace cellstorm::eval {

namespace {

// The FFTW planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>> fft2(const ImageD& img) {
    const int n = img.width;
    std::vector<std::complex<double>> buf(img.data.begin(), img.data.end());
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(n, n, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return buf;
}

} // namespace

FrcResult frc_images(const ImageD& a, const ImageD& b, double px_nm) {
    if (a.width != a.height || a.width != b.width || a.height != b.height)
        throw Error("invalid-input", "FRC needs two equally sized square images");
    if (a.width < 8) throw Error("invalid-input", "FRC image too small");
    const int n = a.width;
    const auto fa = fft2(a), fb = fft2(b);
    const int rings = n / 2 + 1;
    std::vector<double> num(std::size_t(rings), 0.0), pa(std::size_t(rings), 0.0), pb(std::size_t(rings), 0.0);
    for (int ky = 0; ky < n; ++ky) {
        const int fy = ky <= n / 2 ? ky : ky - n;
        for (int kx = 0; kx < n; ++kx) {
            const int fx = kx <= n / 2 ? kx : kx - n;
            const int r = int(std::lround(std::sqrt(double(fx * fx + fy * fy))));
            if (r >= rings) continue;
            const auto& va = fa[std::size_t(ky) * std::size_t(n) + std::size_t(kx)];
            const auto& vb = fb[std::size_t(ky) * std::size_t(n) + std::size_t(kx)];
            num[std::size_t(r)] += (va * std::conj(vb)).real();
            pa[std::size_t(r)] += std::norm(va);
            pb[std::size_t(r)] += std::norm(vb);
        }
    }
    FrcResult res;
    for (int r = 0; r < rings; ++r) {
        const double den = std::sqrt(pa[std::size_t(r)] * pb[std::size_t(r)]);
        res.raw_correlation.push_back(den > 0.0 ? num[std::size_t(r)] / den : 0.0);
        res.ring_frequencies.push_back(r / (n * px_nm));
    }
    // Three-ring moving average.
    for (int r = 0; r < rings; ++r) {
        double s = 0.0;
        int c = 0;
        for (int k = std::max(0, r - 1); k <= std::min(rings - 1, r + 1); ++k, ++c) s += res.raw_correlation[std::size_t(k)];
        res.correlation.push_back(s / c);
    }
    for (int r = 1; r < rings; ++r) {
        const double c1 = res.correlation[std::size_t(r)];
        if (c1 >= kFrcThreshold) continue;
        const double c0 = res.correlation[std::size_t(r - 1)];
        const double f0 = res.ring_frequencies[std::size_t(r - 1)], f1 = res.ring_frequencies[std::size_t(r)];
        double f = f1;
        if (c0 > c1) f = f0 + (c0 - kFrcThreshold) / (c0 - c1) * (f1 - f0);
        if (f > 0.0) res.resolution_nm = 1.0 / f;
        break;
    }
    return res;
}

FrcResult frc(const LocalizationTable& table, double px_nm, std::uint64_t seed, std::optional<double> field_nm) {
    if (table.size() < 100)
        throw Error("insufficient-data", "FRC needs at least 100 localizations, got " + std::to_string(table.size()));
    if (!(px_nm > 0.0)) throw Error("config", "FRC pixel size must be > 0");
    double extent = 0.0;
    if (field_nm) {
        extent = *field_nm;
    } else {
        for (const auto& r : table) extent = std::max({extent, r.x_nm, r.y_nm});
        extent += px_nm;
    }
    int n = std::max(8, int(std::ceil(extent / px_nm)));
    n += n % 2;
    auto rng = make_rng(seed, Stream::frc_split);
    std::bernoulli_distribution coin(0.5);
    LocalizationTable half_a, half_b;
    for (const auto& r : table) (coin(rng) ? half_a : half_b).push_back(r);
    const RenderGeometry geom{n * px_nm, n * px_nm, px_nm};
    return frc_images(render(half_a, geom), render(half_b, geom), px_nm);
}

} // namespace cellstorm::eval
