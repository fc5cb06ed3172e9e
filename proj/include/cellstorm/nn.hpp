#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cellstorm/camera.hpp"
#include "cellstorm/codec.hpp"
#include "cellstorm/sim.hpp"
#include "cellstorm/types.hpp"

namespace cellstorm::nn {

// ---------------------------------------------------------------------------
// Weight archive: manifest.json + weights.bin

enum class LayerKind { conv, leaky_relu, relu, nn_resize, concat_skip, norm_affine, clamp_nonneg };
enum class PaddingMode { zeros, replicate };

LayerKind parse_layer_kind(const std::string& s);
std::string to_string(LayerKind k);

/// One manifest entry. Only the fields relevant to `kind` are meaningful.
struct Layer {
    LayerKind kind = LayerKind::relu;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    PaddingMode padding_mode = PaddingMode::zeros;
    float slope = 0.2f;  // leaky_relu
    int factor = 2;      // nn_resize
    int source = -1;     // concat_skip: index of the layer whose output is appended
    int channels = 0;    // norm_affine
    std::vector<float> weight;  // conv, [out][in][ky][kx]
    std::vector<float> bias;    // conv
    std::vector<float> scale;   // norm_affine
    std::vector<float> shift;   // norm_affine
};

struct WeightArchive {
    int input_channels = 1;
    int input_size = 0;  // training patch size in upsampled pixels, 0 = unknown
    std::vector<Layer> layers;

    /// Number of stride-2 encoder convolutions.
    int depth() const;
    /// Required divisor of the input height and width.
    int size_multiple() const { return 1 << depth(); }
    int output_channels() const;
};

enum class ArchiveErrorKind { io, bad_manifest, shape_mismatch, dangling_skip, truncated_blob };

class ArchiveError : public Error {
public:
    ArchiveError(ArchiveErrorKind kind, const std::string& what);
    ArchiveErrorKind kind() const noexcept { return kind_; }

private:
    ArchiveErrorKind kind_;
};

/// Shape and U-topology check; throws ArchiveError.
void validate_archive(const WeightArchive& archive);

/// `dir` holds manifest.json and the weights file it names.
WeightArchive load_weights(const std::filesystem::path& dir);
void save_weights(const WeightArchive& archive, const std::filesystem::path& dir);

/// Reference generator layout: `levels` stride-2 encoder stages starting at
/// `filters` channels (doubling, capped at 512) and a mirrored
/// resize-convolution decoder. Weights are zero; callers fill them.
WeightArchive reference_unet(int levels, int filters, int input_size = 256,
                             PaddingMode padding = PaddingMode::zeros);

// ---------------------------------------------------------------------------
// Inference

struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // CHW

    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(std::size_t(c) * std::size_t(h) * std::size_t(w), fill) {}
    float& at(int c, int y, int x) { return data[(std::size_t(c) * std::size_t(height) + std::size_t(y)) * std::size_t(width) + std::size_t(x)]; }
    float at(int c, int y, int x) const { return data[(std::size_t(c) * std::size_t(height) + std::size_t(y)) * std::size_t(width) + std::size_t(x)]; }
};

Tensor conv2d(const Tensor& in, const Layer& layer);
Tensor nn_resize(const Tensor& in, int factor);

/// Full forward pass of a multi-channel input.
Tensor forward(const Tensor& input, const WeightArchive& weights);

/// Single-channel convenience wrapper: generated map (first output channel).
ImageF infer(const ImageF& frame, const WeightArchive& weights);

ImageF upsample_nearest(const ImageF& img, int factor);

struct UpsampleGrid {
    int factor = 5;
    void validate() const;
};

/// Pixels above 0.3 * max(map) that are 8-neighbourhood maxima, mapped to nm
/// at (index + 0.5) * pixel_nm / factor. Intensity is the raw map value.
LocalizationTable extract_table(const ImageF& map, const UpsampleGrid& grid, double pixel_nm, int frame_index = 0,
                                double rel_threshold = 0.3);

struct NnLocalizeConfig {
    UpsampleGrid grid{};
    int tile = 0;   // upsampled pixels; 0 = the archive's input_size
    int halo = 16;  // context kept on every internal tile edge
    bool force_tiling = false;
    bool force_whole = false;
};

/// Normalised, upsampled frame ready for the generator.
ImageF prepare_frame(const FrameStack& stack, int t, const UpsampleGrid& grid);

/// Generated map for one prepared frame, tiling when it exceeds the tile
/// size. The returned map has the prepared frame's dimensions.
ImageF generate_map(const ImageF& prepared, const WeightArchive& weights, const NnLocalizeConfig& cfg);

LocalizationTable nn_localize_stack(const FrameStack& stack, const WeightArchive& weights,
                                    const NnLocalizeConfig& cfg, int threads = 1);

// ---------------------------------------------------------------------------
// Training pairs

struct TrainingPair {
    ImageF x;  // upsampled degraded frame in [0,1]
    ImageF y;  // location map, single nonzero pixel per emitter
};

struct SparseTarget {
    int x = 0;
    int y = 0;
    float value = 0.0f;
};

/// Degraded frames plus sparse location maps; pairs are materialised on
/// demand so large datasets stay compact.
struct PairDataset {
    FrameStack frames;  // camera resolution, ADU
    UpsampleGrid grid{};
    std::vector<std::vector<SparseTarget>> targets;  // per frame
    long source_rows = 0;
    long collisions = 0;
    int quality = 100;
    codec::GridOffset codec_grid{};
    std::string origin;  // "simulated" or "localized"

    int size() const { return frames.n_frames; }
    TrainingPair pair(int t) const;
    long nonzero_targets() const;
};

/// Upsampled target pixel of a nm coordinate.
int target_index(double coord_nm, double pixel_nm, int factor);

PairDataset make_pairs_simulated(const sim::SimScene& scene, const sim::BlinkModel& blink, const sim::PsfModel& psf,
                                 const camera::CameraModel& cam, const codec::CodecConfig& codec, int n_frames,
                                 const UpsampleGrid& grid, std::uint64_t seed, std::pair<int, int> quality_range = {80, 90},
                                 int threads = 1);

PairDataset make_pairs_from_localizations(const FrameStack& stack, const LocalizationTable& table,
                                          const UpsampleGrid& grid);

/// Writes x.cstk (upsampled ADU), y.cstk (16-bit, value * 65535) and
/// dataset.json into `dir`. With several sources, equal numbers of frames are
/// taken from each (the 50/50 diet for two sources).
void export_dataset(const std::vector<const PairDataset*>& sources, const std::filesystem::path& dir);

inline constexpr double kTargetScale = 65535.0;

} // namespace cellstorm::nn
