#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cellstorm/camera.hpp"
#include "cellstorm/codec.hpp"
#include "cellstorm/localizer.hpp"
#include "cellstorm/sim.hpp"

namespace cellstorm::config {

struct SimulationGroup {
    sim::SimScene scene;
    sim::BlinkModel blink;
    sim::PsfModel psf;
    int frames = 200;
    bool compress = false;  // run the codec stage inside `simulate`
    std::string mask_pgm;   // bitmap-mask structure only
};

struct NnGroup {
    int factor = 5;
    int tile = 0;  // 0 = archive input_size
    int halo = 16;
};

struct EvalGroup {
    double radius_nm = 200.0;
    bool one_to_one = false;
    double render_px_nm = 10.0;
    std::optional<double> blur_nm;
    double frc_px_nm = 10.0;
};

struct DatasetGroup {
    int frames = 100;
    int quality_min = 80;
    int quality_max = 90;
};

/// Everything that can influence an output. Serialised as one JSON document
/// with a group per module.
struct RunConfig {
    std::uint64_t seed = 1;
    camera::CameraModel camera;
    codec::CodecConfig codec;
    SimulationGroup simulation;
    localizer::LocalizerConfig localizer;
    NnGroup nn;
    EvalGroup eval;
    DatasetGroup dataset;

    void validate() const;
};

/// Pretty-printed JSON, keys in declaration order.
std::string to_json(const RunConfig& cfg);

/// Strict parse on top of the defaults: unknown keys raise
/// Error("config-unknown-key"), wrongly typed values Error("config-type").
/// A run manifest is accepted too; its "config" member is used.
RunConfig from_json(const std::string& text);

/// Applies dotted-path overrides such as "camera.gain=0.7". Values are read as
/// JSON when they parse, otherwise as strings.
RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& assignments);

/// Defaults, then the optional file, then overrides.
RunConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& assignments);

} // namespace cellstorm::config
