#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cellstorm/codec.hpp"
#include "cellstorm/types.hpp"

namespace cellstorm::eval {

struct MatchOptions {
    double radius_nm = 200.0;
    /// Greedy one-to-one assignment instead of the default one-sided nearest
    /// neighbour (where a GT event may serve several detections).
    bool one_to_one = false;
};

struct MatchPair {
    std::size_t detection = 0;
    std::size_t gt = 0;
    double dx_nm = 0.0;
    double dy_nm = 0.0;
    double distance_nm = 0.0;
};

struct MatchReport {
    long matched_count = 0;
    long gt_count = 0;
    long detected_count = 0;
    double mean_distance_nm = 0.0;  // over matches only
    double rmse_nm = 0.0;           // per-axis RMS error over matches
    double radius_nm = 200.0;

    long unmatched_detections() const { return detected_count - matched_count; }
    double matched_fraction() const { return gt_count > 0 ? double(matched_count) / double(gt_count) : 0.0; }
};

struct MatchResult {
    MatchReport report;
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> unmatched;  // detection indices
};

MatchResult match_detailed(const LocalizationTable& detections, const EmitterTable& gt, const MatchOptions& opt = {});
MatchReport match_to_gt(const LocalizationTable& detections, const EmitterTable& gt, const MatchOptions& opt = {});

// ---------------------------------------------------------------------------
// Block-grid periodicity of detections

/// Counts per (column mod 4, row mod 4) cell of the camera pixel holding each
/// row, measured from the codec block origin. Index = 4 * row_phase + col_phase.
std::array<long, 16> grid_histogram(const LocalizationTable& rows, double pixel_nm, codec::GridOffset grid = {});

struct GridTest {
    long total = 0;
    double chi_square = 0.0;
    double p_value = 1.0;  // against a uniform spread over the 16 phases
};

GridTest grid_uniformity(const std::array<long, 16>& counts);

// ---------------------------------------------------------------------------
// Photon x quality sweep

struct SweepCell {
    std::string method;
    double photons = 0.0;
    int quality = 100;
    MatchReport report;
    /// Unmatched detections binned by position inside the 4x4 codec block.
    std::array<long, 16> false_grid_histogram{};
};

struct SweepReport {
    std::vector<std::string> methods;
    std::vector<double> photons;
    std::vector<int> qualities;
    std::vector<SweepCell> cells;

    const SweepCell& cell(const std::string& method, double photons, int quality) const;
    /// Throws Error("sweep-missing-cell") unless every method x photons x
    /// quality combination is present exactly once.
    void validate() const;
};

std::string sweep_csv(const SweepReport& report);
/// Plot-ready series: per method and quality, matched counts (bars) and
/// mean distances (lines) against photons, plus the GT count.
std::string sweep_plot_json(const SweepReport& report);

// ---------------------------------------------------------------------------
// Rendering

struct RenderGeometry {
    double width_nm = 0.0;
    double height_nm = 0.0;
    double px_nm = 10.0;
    int width_px() const;
    int height_px() const;
};

RenderGeometry geometry_for(const FrameStack& stack, double px_nm);

/// 2-D histogram of localizations, optionally Gaussian blurred.
ImageD render(const LocalizationTable& table, const RenderGeometry& geom,
              std::optional<double> blur_sigma_nm = std::nullopt);

/// Sum of all frames (widefield equivalent), in ADU.
ImageD widefield(const FrameStack& stack);

/// Binary 16-bit PGM (P5, big-endian). Images whose values are all integers
/// in [0, 65535] are written as-is; otherwise scaled so the maximum is 65535.
void write_pgm16(const ImageD& image, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Fourier ring correlation

inline constexpr double kFrcThreshold = 1.0 / 7.0;

struct FrcResult {
    std::vector<double> ring_frequencies;  // 1/nm
    std::vector<double> correlation;       // smoothed
    std::vector<double> raw_correlation;
    std::optional<double> resolution_nm;
};

/// FRC of two equally sized square images with pixel size px_nm.
FrcResult frc_images(const ImageD& a, const ImageD& b, double px_nm);

/// Seeded random half split, rendering on a square field covering
/// [0, field_nm)^2 (defaults to the table's extent).
FrcResult frc(const LocalizationTable& table, double px_nm, std::uint64_t seed,
              std::optional<double> field_nm = std::nullopt);

} // namespace cellstorm::eval
