#include "cellstorm/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellstorm/rng.hpp"

namespace cellstorm::camera {

void CameraModel::validate() const {
    if (!(gain > 0.0)) throw Error("config", "camera.gain must be > 0");
    if (!(read_noise >= 0.0)) throw Error("config", "camera.read_noise must be >= 0");
    if (!(qe > 0.0 && qe <= 1.0)) throw Error("config", "camera.qe must be in (0,1]");
    if (bit_depth < 1 || bit_depth > 16) throw Error("config", "camera.bit_depth must be in [1,16]");
    if (!(clip_floor >= 0.0 && clip_floor < knee && knee <= double(max_adu())))
        throw Error("config", "camera requires 0 <= clip_floor < knee <= 2^bit_depth-1");
    if (!(dip_depth >= 0.0 && dip_depth <= 1.0)) throw Error("config", "camera.dip_depth must be in [0,1]");
    if (!(dip_period_s > 0.0)) throw Error("config", "camera.dip_period_s must be > 0");
}

int CameraModel::dip_period_frames(double fps) const {
    if (dip_depth <= 0.0) return 0;
    return std::max(1, int(std::lround(dip_period_s * fps)));
}

double CameraModel::temporal_factor(int frame_index, double fps) const {
    const double t = frame_index / fps;
    double f = 1.0 - drift_per_s * t;
    const int period = dip_period_frames(fps);
    if (period > 0 && frame_index % period == 0) f *= 1.0 - dip_depth;
    return std::max(0.0, f);
}

CameraModel preset(std::string_view name) {
    CameraModel m;
    if (name == "p9-iso3200" || name == "default") return m;
    if (name == "p9-iso3200-early") {
        m.gain = 0.34;
        m.offset = 4.074;
        m.read_noise = 1.23;
        return m;
    }
    throw Error("config", "unknown camera preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"p9-iso3200", "p9-iso3200-early"}; }

Image<std::uint16_t> apply_camera(const ImageD& photon_map, const CameraModel& model, int frame_index, double fps,
                                  std::uint64_t seed) {
    model.validate();
    auto rng = make_rng(seed, Stream::camera, std::uint64_t(frame_index));
    std::normal_distribution<double> read(0.0, 1.0);
    const double factor = model.temporal_factor(frame_index, fps);
    const double read_adu = model.read_noise / model.gain;
    const double top = double(model.max_adu());

    Image<std::uint16_t> out(photon_map.width, photon_map.height);
    for (std::size_t i = 0; i < photon_map.data.size(); ++i) {
        const double p = photon_map.data[i];
        if (!(p >= 0.0)) throw Error("invalid-input", "negative expected photon count");
        double electrons = 0.0;
        const double mean_e = model.qe * p;
        if (mean_e > 0.0) electrons = double(std::poisson_distribution<long long>(mean_e)(rng));
        double adu = factor * electrons / model.gain + model.offset;
        if (read_adu > 0.0) adu += read_adu * read(rng);
        double v = std::clamp(std::nearbyint(adu), 0.0, top);
        if (v < model.clip_floor) v = 0.0;
        out.data[i] = std::uint16_t(v);
    }
    return out;
}

CalibrationResult calibrate_mean_variance(std::span<const FrameStack> levels, const FrameStack& dark, double knee) {
    if (dark.n_frames < 1 || dark.data.empty()) throw Error("calibration", "dark stack is empty");
    CalibrationResult res;
    res.offset = std::accumulate(dark.data.begin(), dark.data.end(), 0.0) / double(dark.data.size());

    for (const auto& s : levels) {
        if (s.n_frames < 2) throw Error("calibration", "each illumination stack needs >= 2 frames");
        const std::size_t npix = s.frame_size();
        double mean_sum = 0.0, var_sum = 0.0;
        for (std::size_t p = 0; p < npix; ++p) {
            double m = 0.0;
            for (int t = 0; t < s.n_frames; ++t) m += s.data[std::size_t(t) * npix + p];
            m /= s.n_frames;
            double v = 0.0;
            for (int t = 0; t < s.n_frames; ++t) {
                const double d = s.data[std::size_t(t) * npix + p] - m;
                v += d * d;
            }
            mean_sum += m;
            var_sum += v / (s.n_frames - 1);
        }
        MeanVariancePoint pt{mean_sum / double(npix), var_sum / double(npix), false};
        pt.used = pt.mean < knee;
        res.points.push_back(pt);
    }

    std::vector<MeanVariancePoint> used;
    for (const auto& p : res.points)
        if (p.used) used.push_back(p);
    if (used.size() < 2) throw Error("calibration", "fewer than 2 illumination levels below the knee");

    const double n = double(used.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : used) {
        mx += p.mean;
        my += p.variance;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : used) {
        sxx += (p.mean - mx) * (p.mean - mx);
        sxy += (p.mean - mx) * (p.variance - my);
        syy += (p.variance - my) * (p.variance - my);
    }
    if (sxx <= 0.0 || syy <= 0.0 || sxy <= 0.0)
        throw Error("degenerate-fit", "mean-variance points carry no usable slope");
    const double a = sxy / sxx;
    const double b = my - a * mx;

    double ss_res = 0.0;
    for (const auto& p : used) {
        const double r = p.variance - (a * p.mean + b);
        ss_res += r * r;
    }
    res.gain = 1.0 / a;
    res.read_noise = res.gain * std::sqrt(std::max(0.0, b + a * res.offset));
    res.fit_points = int(used.size());
    res.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return res;
}

DriftProfile dark_drift_profile(const FrameStack& stack) {
    if (stack.n_frames < 64) throw Error("invalid-input", "drift profile needs at least 64 frames");
    DriftProfile prof;
    const std::size_t npix = stack.frame_size();
    const int n = stack.n_frames;
    prof.frame_means.resize(std::size_t(n));
    for (int t = 0; t < n; ++t) {
        auto f = stack.frame(t);
        prof.frame_means[std::size_t(t)] = std::accumulate(f.begin(), f.end(), 0.0) / double(npix);
    }

    // Remove the mean and any linear drift before looking for periodicity.
    const double tm = (n - 1) / 2.0;
    double ym = std::accumulate(prof.frame_means.begin(), prof.frame_means.end(), 0.0) / n;
    double stt = 0.0, sty = 0.0;
    for (int t = 0; t < n; ++t) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (prof.frame_means[std::size_t(t)] - ym);
    }
    const double slope = sty / stt;
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) d[std::size_t(t)] = prof.frame_means[std::size_t(t)] - ym - slope * (t - tm);

    const int max_lag = n / 2;
    const double c0 = std::inner_product(d.begin(), d.end(), d.begin(), 0.0);
    prof.autocorrelation.assign(std::size_t(max_lag) + 1, 0.0);
    if (c0 <= 1e-12 * double(n)) return prof;
    for (int k = 0; k <= max_lag; ++k) {
        double c = 0.0;
        for (int t = 0; t + k < n; ++t) c += d[std::size_t(t)] * d[std::size_t(t + k)];
        prof.autocorrelation[std::size_t(k)] = c / c0;
    }

    const double floor = 1.0 / std::sqrt(double(n));
    double best = 3.0 * floor;
    const auto& r = prof.autocorrelation;
    for (int k = 2; k < max_lag; ++k) {
        const auto i = std::size_t(k);
        if (r[i] > r[i - 1] && r[i] >= r[i + 1] && r[i] > best) {
            best = r[i];
            prof.period_frames = k;
        }
    }
    return prof;
}

} // namespace cellstorm::camera
