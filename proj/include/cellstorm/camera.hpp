#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellstorm/types.hpp"

namespace cellstorm::camera {

/// Photon-to-ADU chain of the phone sensor + ISP. Defaults are the ISO 3200
/// values of the P9 characterisation.
struct CameraModel {
    double gain = 0.69;       // e-/ADU
    double offset = 4.1;      // ADU
    double read_noise = 2.5;  // e- RMS
    double qe = 0.75;
    double knee = 220.0;      // ADU, end of the linear range
    double clip_floor = 3.0;  // ADU, outputs below this are forced to 0
    int bit_depth = 12;
    double dip_period_s = 1.07;
    double dip_depth = 0.0;
    double drift_per_s = 0.0;

    void validate() const;
    std::uint32_t max_adu() const { return (std::uint32_t{1} << bit_depth) - 1; }

    /// Frames between periodic dips at the given frame rate, 0 if disabled.
    int dip_period_frames(double fps) const;
    /// Multiplicative factor on the signal term for a frame.
    double temporal_factor(int frame_index, double fps) const;
};

/// Named parameter sets: "p9-iso3200" (default) and "p9-iso3200-early".
CameraModel preset(std::string_view name);
std::vector<std::string> preset_names();

/// Draws one ADU frame from an expected-photon map. Deterministic in
/// (seed, frame_index).
Image<std::uint16_t> apply_camera(const ImageD& photon_map, const CameraModel& model, int frame_index, double fps,
                                  std::uint64_t seed);

struct MeanVariancePoint {
    double mean = 0.0;
    double variance = 0.0;
    bool used = false;
};

struct CalibrationResult {
    double gain = 0.0;
    double offset = 0.0;
    double read_noise = 0.0;
    int fit_points = 0;
    double r_squared = 0.0;
    std::vector<MeanVariancePoint> points;
};

/// Photon-transfer calibration: line fit of temporal variance against mean
/// over illumination levels below `knee`.
CalibrationResult calibrate_mean_variance(std::span<const FrameStack> levels, const FrameStack& dark,
                                          double knee = 220.0);

struct DriftProfile {
    std::vector<double> frame_means;
    std::vector<double> autocorrelation;  // normalised, index = lag
    std::optional<int> period_frames;
};

DriftProfile dark_drift_profile(const FrameStack& stack);

} // namespace cellstorm::camera
