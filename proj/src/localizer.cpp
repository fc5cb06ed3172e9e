#include "cellstorm/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "cellstorm/parallel.hpp"

namespace cellstorm::localizer {

void LocalizerConfig::validate() const {
    if (!(filter_sigma1 > 0.0 && filter_sigma2 > filter_sigma1))
        throw Error("config", "localizer requires filter_sigma2 > filter_sigma1 > 0");
    if (roi_radius < 2) throw Error("config", "localizer.roi_radius must be >= 2");
    if (max_iters < 1) throw Error("config", "localizer.max_iters must be >= 1");
    if (!(converge_tol > 0.0)) throw Error("config", "localizer.converge_tol must be > 0");
}

const char* to_string(FitStatus s) {
    switch (s) {
    case FitStatus::accepted: return "accepted";
    case FitStatus::near_border: return "near_border";
    case FitStatus::not_converged: return "not_converged";
    case FitStatus::singular: return "singular";
    case FitStatus::low_photons: return "low_photons";
    case FitStatus::bad_sigma: return "bad_sigma";
    case FitStatus::outside_roi: return "outside_roi";
    }
    return "?";
}

ImageD gaussian_blur(const ImageD& img, double sigma) {
    const int r = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(std::size_t(2 * r + 1));
    for (int i = -r; i <= r; ++i) k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    const double norm = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= norm;

    ImageD tmp(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) s += k[std::size_t(i + r)] * img.at(std::clamp(x + i, 0, img.width - 1), y);
            tmp.at(x, y) = s;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) s += k[std::size_t(i + r)] * tmp.at(x, std::clamp(y + i, 0, img.height - 1));
            out.at(x, y) = s;
        }
    return out;
}

ImageD dog_filter(const ImageD& img, double sigma1, double sigma2) {
    ImageD a = gaussian_blur(img, sigma1);
    const ImageD b = gaussian_blur(img, sigma2);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
    return a;
}

std::vector<Peak> detect_candidates(const ImageD& frame, const LocalizerConfig& cfg) {
    cfg.validate();
    if (frame.width < 3 || frame.height < 3) return {};
    const ImageD f = dog_filter(frame, cfg.filter_sigma1, cfg.filter_sigma2);
    const double n = double(f.size());
    const double mean = std::accumulate(f.data.begin(), f.data.end(), 0.0) / n;
    double var = 0.0;
    for (double v : f.data) var += (v - mean) * (v - mean);
    const double threshold = cfg.threshold_k * std::sqrt(var / n);

    std::vector<Peak> peaks;
    for (int y = 1; y < f.height - 1; ++y)
        for (int x = 1; x < f.width - 1; ++x) {
            const double v = f.at(x, y);
            if (!(v > threshold)) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if ((dx || dy) && f.at(x + dx, y + dy) >= v) {
                        is_max = false;
                        break;
                    }
            if (is_max) peaks.push_back({x, y, v});
        }

    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    std::vector<Peak> kept;
    const double r2 = double(cfg.roi_radius) * cfg.roi_radius;
    for (const auto& p : peaks) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Peak& k) {
            const double dx = p.x - k.x, dy = p.y - k.y;
            return dx * dx + dy * dy < r2;
        });
        if (!suppressed) kept.push_back(p);
    }
    std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
    return kept;
}

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

enum Param { kX = 0, kY, kSigma, kAmp, kBg };

struct Roi {
    int x0, y0, size;
    std::vector<double> data;  // photons, row-major
};

// Pixel-integrated 1-D Gaussian over [i, i+1) and its derivatives in the
// centre and the width.
struct Profile {
    std::vector<double> value, d_center, d_sigma;
};

Profile profile(int origin, int size, double center, double sigma) {
    Profile p;
    p.value.resize(std::size_t(size));
    p.d_center.resize(std::size_t(size));
    p.d_sigma.resize(std::size_t(size));
    const double inv = 1.0 / (std::numbers::sqrt2 * sigma);
    const double c_center = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
    const double c_sigma = 1.0 / (std::sqrt(std::numbers::pi) * sigma);
    for (int k = 0; k < size; ++k) {
        const double u0 = (origin + k - center) * inv;
        const double u1 = (origin + k + 1 - center) * inv;
        const double g0 = std::exp(-u0 * u0), g1 = std::exp(-u1 * u1);
        p.value[std::size_t(k)] = 0.5 * (std::erf(u1) - std::erf(u0));
        p.d_center[std::size_t(k)] = -c_center * (g1 - g0);
        p.d_sigma[std::size_t(k)] = -c_sigma * (u1 * g1 - u0 * g0);
    }
    return p;
}

double cost_and_normal(const Roi& roi, const Vec5& p, Mat5* jtj, Vec5* jtr) {
    const auto px = profile(roi.x0, roi.size, p[kX], p[kSigma]);
    const auto py = profile(roi.y0, roi.size, p[kY], p[kSigma]);
    double cost = 0.0;
    if (jtj) {
        jtj->setZero();
        jtr->setZero();
    }
    for (int r = 0; r < roi.size; ++r) {
        const auto ry = std::size_t(r);
        for (int c = 0; c < roi.size; ++c) {
            const auto cx = std::size_t(c);
            const double shape = px.value[cx] * py.value[ry];
            const double model = p[kBg] + p[kAmp] * shape;
            const double res = roi.data[ry * std::size_t(roi.size) + cx] - model;
            cost += res * res;
            if (!jtj) continue;
            Vec5 g;
            g[kX] = p[kAmp] * px.d_center[cx] * py.value[ry];
            g[kY] = p[kAmp] * px.value[cx] * py.d_center[ry];
            g[kSigma] = p[kAmp] * (px.d_sigma[cx] * py.value[ry] + px.value[cx] * py.d_sigma[ry]);
            g[kAmp] = shape;
            g[kBg] = 1.0;
            jtj->noalias() += g * g.transpose();
            *jtr += g * res;
        }
    }
    return cost;
}

} // namespace

FitOutcome fit_gaussian(const ImageD& frame, const Peak& peak, const LocalizerConfig& cfg,
                        const camera::CameraModel& cam, double pixel_nm, int frame_index) {
    FitOutcome out;
    out.row.frame = frame_index;
    const int r = cfg.roi_radius;
    if (peak.x < r || peak.y < r || peak.x + r >= frame.width || peak.y + r >= frame.height) {
        out.status = FitStatus::near_border;
        return out;
    }

    Roi roi{peak.x - r, peak.y - r, 2 * r + 1, {}};
    roi.data.resize(std::size_t(roi.size) * std::size_t(roi.size));
    const double to_photons = cam.gain / cam.qe;
    for (int y = 0; y < roi.size; ++y)
        for (int x = 0; x < roi.size; ++x)
            roi.data[std::size_t(y * roi.size + x)] = (frame.at(roi.x0 + x, roi.y0 + y) - cam.offset) * to_photons;

    // Initial guess: background = ROI minimum, position = intensity centroid.
    const double bg0 = *std::min_element(roi.data.begin(), roi.data.end());
    double sum = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < roi.size; ++y)
        for (int x = 0; x < roi.size; ++x) {
            const double w = roi.data[std::size_t(y * roi.size + x)] - bg0;
            sum += w;
            sx += w * (roi.x0 + x + 0.5);
            sy += w * (roi.y0 + y + 0.5);
        }
    const double sigma0 = cfg.filter_sigma1;
    Vec5 p;
    p << (sum > 0.0 ? sx / sum : peak.x + 0.5), (sum > 0.0 ? sy / sum : peak.y + 0.5), sigma0, sum, bg0;

    Mat5 jtj;
    Vec5 jtr;
    double lambda = 1e-3;
    double cost = cost_and_normal(roi, p, &jtj, &jtr);
    bool converged = false;
    for (int it = 0; it < cfg.max_iters && !converged; ++it) {
        out.iterations = it + 1;
        bool stepped = false;
        while (!stepped) {
            Mat5 a = jtj;
            for (int i = 0; i < 5; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-12);
            Eigen::LDLT<Mat5> solver(a);
            if (solver.info() != Eigen::Success || !solver.isPositive()) {
                out.status = FitStatus::singular;
                return out;
            }
            const Vec5 delta = solver.solve(jtr);
            if (!delta.allFinite()) {
                out.status = FitStatus::singular;
                return out;
            }
            Vec5 trial = p + delta;
            if (trial[kSigma] <= 0.0) trial[kSigma] = 0.5 * p[kSigma];
            const double trial_cost = cost_and_normal(roi, trial, nullptr, nullptr);
            if (trial_cost <= cost) {
                double rel = 0.0;
                for (int i = 0; i < 5; ++i)
                    rel = std::max(rel, std::abs(trial[i] - p[i]) / std::max(std::abs(p[i]), 1.0));
                p = trial;
                cost = cost_and_normal(roi, p, &jtj, &jtr);
                lambda = std::max(lambda / 10.0, 1e-12);
                stepped = true;
                if (rel < cfg.converge_tol) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e10) {
                    // No descent direction left: p is a local minimum.
                    stepped = true;
                    converged = true;
                }
            }
        }
    }
    if (!converged) {
        out.status = FitStatus::not_converged;
        return out;
    }

    out.row.x_nm = p[kX] * pixel_nm;
    out.row.y_nm = p[kY] * pixel_nm;
    out.row.sigma_nm = p[kSigma] * pixel_nm;
    out.row.intensity = p[kAmp];
    out.row.background = p[kBg];

    if (p[kAmp] < cfg.min_photons) {
        out.status = FitStatus::low_photons;
    } else if (p[kSigma] < 0.5 * sigma0 || p[kSigma] > 4.0 * sigma0) {
        out.status = FitStatus::bad_sigma;
    } else if (p[kX] < roi.x0 || p[kX] > roi.x0 + roi.size || p[kY] < roi.y0 || p[kY] > roi.y0 + roi.size) {
        out.status = FitStatus::outside_roi;
    } else {
        out.status = FitStatus::accepted;
    }
    return out;
}

LocalizationTable localize_frame(const ImageD& frame, int frame_index, const LocalizerConfig& cfg,
                                 const camera::CameraModel& cam, double pixel_nm, LocalizeStats* stats) {
    LocalizationTable rows;
    for (const auto& peak : detect_candidates(frame, cfg)) {
        const auto fit = fit_gaussian(frame, peak, cfg, cam, pixel_nm, frame_index);
        if (stats) {
            ++stats->candidates;
            ++stats->by_status[std::size_t(fit.status)];
        }
        if (fit.status == FitStatus::accepted) rows.push_back(fit.row);
    }
    return rows;
}

LocalizationTable localize_stack(const FrameStack& stack, const LocalizerConfig& cfg, const camera::CameraModel& cam,
                                 int threads, LocalizeStats* stats) {
    cfg.validate();
    std::vector<LocalizationTable> per_frame(std::size_t(stack.n_frames));
    std::vector<LocalizeStats> per_stats(std::size_t(stack.n_frames));
    parallel_for(stack.n_frames, threads, [&](int t) {
        per_frame[std::size_t(t)] =
            localize_frame(stack.frame_image(t), t, cfg, cam, stack.pixel_nm, &per_stats[std::size_t(t)]);
    });
    LocalizationTable all;
    for (std::size_t t = 0; t < per_frame.size(); ++t) {
        all.insert(all.end(), per_frame[t].begin(), per_frame[t].end());
        if (stats) {
            stats->candidates += per_stats[t].candidates;
            for (std::size_t k = 0; k < stats->by_status.size(); ++k) stats->by_status[k] += per_stats[t].by_status[k];
        }
    }
    return all;
}

} // namespace cellstorm::localizer
