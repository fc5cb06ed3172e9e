#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "cellstorm/types.hpp"

namespace cellstorm::codec {

/// 4x4 integer block, indexed [row][column].
using Block4 = std::array<std::array<std::int32_t, 4>, 4>;

struct GridOffset {
    int dx = 0;
    int dy = 0;
    bool operator==(const GridOffset&) const = default;
};

struct CodecConfig {
    int quality = 70;              // percent, 100 = lossless bypass
    bool random_grid = false;      // one offset per stack drawn from the seed
    GridOffset grid{};             // used when random_grid is false
    std::optional<int> qp_override;

    void validate() const;
    /// Linear map 100% -> QP 0, 0% -> QP 51 unless overridden.
    int qp() const;
    bool bypass() const { return !qp_override && quality >= 100; }
};

/// Quantiser step in orthonormal-coefficient units: 0.625 * 2^(QP/6).
double qstep(int qp);

/// W = Cf X Cf^T with the exact-match core matrix.
Block4 forward_transform4x4(const Block4& block);

/// Decoder butterfly on pre-scaled coefficients (64x fixed point), with the
/// final (x + 32) >> 6 rounding.
Block4 inverse_transform4x4(const Block4& scaled);

/// Z = round(W / (qstep * s_ij)), s_ij = |Cf row i| * |Cf row j|.
Block4 quantize(const Block4& coeffs, double step);

/// Levels back to the 64x pre-scaled domain expected by inverse_transform4x4.
Block4 dequantize(const Block4& levels, double step);

/// The pre-scaled coefficients for an unquantised block, i.e. the input for
/// which inverse_transform4x4 reproduces the original pixels exactly.
Block4 bypass_scale(const Block4& coeffs);

/// Row-norm product s_ij used by the quantiser.
double norm_factor(int row, int col);

GridOffset resolve_grid(const CodecConfig& cfg, std::uint64_t seed);

/// Encode/decode one frame with the block grid shifted by `grid`.
Image<std::uint16_t> transcode_frame(const Image<std::uint16_t>& frame, int bit_depth, int qp, GridOffset grid);

FrameStack transcode_stack(const FrameStack& stack, const CodecConfig& cfg, std::uint64_t seed, int threads = 1);

} // namespace cellstorm::codec
