#pragma once

#include <array>
#include <vector>

#include "cellstorm/camera.hpp"
#include "cellstorm/types.hpp"

namespace cellstorm::localizer {

struct LocalizerConfig {
    double filter_sigma1 = 1.0;  // px
    double filter_sigma2 = 2.0;  // px
    double threshold_k = 3.0;    // multiples of std(filtered frame)
    int roi_radius = 3;          // 3 => 7x7
    int max_iters = 50;
    double converge_tol = 1e-6;
    double min_photons = 30.0;

    void validate() const;
};

struct Peak {
    int x = 0;
    int y = 0;
    double value = 0.0;
};

ImageD gaussian_blur(const ImageD& img, double sigma);
ImageD dog_filter(const ImageD& img, double sigma1, double sigma2);

/// Strict 8-neighbourhood maxima of the DoG-filtered frame above
/// k * std(filtered); of two peaks closer than roi_radius only the brighter
/// survives. Sorted by row, then column.
std::vector<Peak> detect_candidates(const ImageD& frame, const LocalizerConfig& cfg);

enum class FitStatus { accepted, near_border, not_converged, singular, low_photons, bad_sigma, outside_roi };
const char* to_string(FitStatus s);

struct FitOutcome {
    FitStatus status = FitStatus::not_converged;
    Localization row;
    int iterations = 0;
};

/// Levenberg-Marquardt fit of b + A * (pixel-integrated Gaussian) over the
/// ROI around `peak`. `frame` is in ADU; the fit runs in photons.
FitOutcome fit_gaussian(const ImageD& frame, const Peak& peak, const LocalizerConfig& cfg,
                        const camera::CameraModel& cam, double pixel_nm, int frame_index = 0);

struct LocalizeStats {
    std::array<long, 7> by_status{};
    long candidates = 0;
    long count(FitStatus s) const { return by_status[std::size_t(s)]; }
};

LocalizationTable localize_frame(const ImageD& frame, int frame_index, const LocalizerConfig& cfg,
                                 const camera::CameraModel& cam, double pixel_nm, LocalizeStats* stats = nullptr);

LocalizationTable localize_stack(const FrameStack& stack, const LocalizerConfig& cfg, const camera::CameraModel& cam,
                                 int threads = 1, LocalizeStats* stats = nullptr);

} // namespace cellstorm::localizer
