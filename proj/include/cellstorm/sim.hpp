#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cellstorm/camera.hpp"
#include "cellstorm/codec.hpp"
#include "cellstorm/types.hpp"

namespace cellstorm::sim {

enum class Structure { uniform_random, line_set, bitmap_mask };

Structure parse_structure(const std::string& name);
std::string to_string(Structure s);

struct SimScene {
    double fov_um = 6.4;   // square field of view
    double pixel_nm = 100.0;
    double fps = 20.0;
    Structure structure = Structure::uniform_random;
    double density = 6.0;  // sites per um^2
    int n_lines = 6;       // line-set only
    std::optional<Image<std::uint8_t>> mask;  // bitmap-mask only, nonzero = support
    double background_photons = 0.0;          // per pixel per frame

    void validate() const;
    int width_px() const;
    int height_px() const { return width_px(); }
    int site_count() const;
};

struct BlinkModel {
    double p_on = 0.02;
    double mean_on_frames = 1.0;
    double photons = 1000.0;

    void validate() const;
};

struct PsfModel {
    double sigma_nm = 130.0;
    std::optional<double> truncation_radius_px;  // default 4 sigma

    void validate() const;
    double sigma_px(double pixel_nm) const { return sigma_nm / pixel_nm; }
    double radius_px(double pixel_nm) const;
};

struct Site {
    double x_nm = 0.0;
    double y_nm = 0.0;
};

std::vector<Site> generate_sites(const SimScene& scene, std::uint64_t seed);

/// Two-state blinking over the scene's sites. Rows are ordered by frame,
/// then by site id.
EmitterTable generate_ground_truth(const SimScene& scene, const BlinkModel& blink, int n_frames,
                                   std::uint64_t seed);

/// Expected photons per pixel from pixel-integrated Gaussian spots.
ImageD render_photon_map(std::span<const Emitter> events, const PsfModel& psf, int width, int height,
                         double pixel_nm);

struct SimResult {
    FrameStack stack;
    EmitterTable ground_truth;
    codec::GridOffset grid{};  // grid actually used by the codec stage
};

/// GT -> PSF -> camera -> optional codec.
SimResult simulate_stack(const SimScene& scene, const BlinkModel& blink, const PsfModel& psf,
                         const camera::CameraModel& cam, const std::optional<codec::CodecConfig>& codec,
                         int n_frames, std::uint64_t seed, int threads = 1);

/// Index range [first, last) of rows belonging to each frame of a
/// frame-sorted table.
std::vector<std::pair<std::size_t, std::size_t>> frame_ranges(const EmitterTable& table, int n_frames);

} // namespace cellstorm::sim
