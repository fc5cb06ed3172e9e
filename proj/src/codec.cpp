#include "cellstorm/codec.hpp"

#include <algorithm>
#include <cmath>

#include "cellstorm/parallel.hpp"
#include "cellstorm/rng.hpp"

namespace cellstorm::codec {

namespace {

// Squared row norms of the forward core matrix: (1,1,1,1) and (2,1,-1,-2).
constexpr double kRowNormSq[4] = {4.0, 10.0, 4.0, 10.0};
// Squared row norms of the inverse matrix: (1,1,1,1) and (1,1/2,-1/2,-1).
constexpr double kInvRowNormSq[4] = {4.0, 2.5, 4.0, 2.5};

void forward_1d(const std::int32_t in[4], std::int32_t out[4]) {
    const std::int32_t s03 = in[0] + in[3], d03 = in[0] - in[3];
    const std::int32_t s12 = in[1] + in[2], d12 = in[1] - in[2];
    out[0] = s03 + s12;
    out[1] = 2 * d03 + d12;
    out[2] = s03 - s12;
    out[3] = d03 - 2 * d12;
}

void inverse_1d(const std::int32_t in[4], std::int32_t out[4]) {
    const std::int32_t e0 = in[0] + in[2];
    const std::int32_t e1 = in[0] - in[2];
    const std::int32_t e2 = (in[1] >> 1) - in[3];
    const std::int32_t e3 = in[1] + (in[3] >> 1);
    out[0] = e0 + e3;
    out[1] = e1 + e2;
    out[2] = e1 - e2;
    out[3] = e0 - e3;
}

} // namespace

void CodecConfig::validate() const {
    if (quality < 0 || quality > 100) throw Error("config", "codec.quality must be in [0,100]");
    if (grid.dx < 0 || grid.dx > 3 || grid.dy < 0 || grid.dy > 3)
        throw Error("config", "codec grid offsets must be in [0,3]");
    if (qp_override && (*qp_override < 0 || *qp_override > 51)) throw Error("config", "codec.qp must be in [0,51]");
}

int CodecConfig::qp() const {
    if (qp_override) return *qp_override;
    return int(std::lround(51.0 * (100 - quality) / 100.0));
}

double qstep(int qp) { return 0.625 * std::pow(2.0, qp / 6.0); }

double norm_factor(int row, int col) { return std::sqrt(kRowNormSq[row] * kRowNormSq[col]); }

Block4 forward_transform4x4(const Block4& x) {
    Block4 tmp{}, w{};
    for (int r = 0; r < 4; ++r) forward_1d(x[r].data(), tmp[r].data());
    for (int c = 0; c < 4; ++c) {
        std::int32_t col[4] = {tmp[0][c], tmp[1][c], tmp[2][c], tmp[3][c]};
        std::int32_t res[4];
        forward_1d(col, res);
        for (int r = 0; r < 4; ++r) w[r][c] = res[r];
    }
    return w;
}

Block4 inverse_transform4x4(const Block4& d) {
    Block4 tmp{}, x{};
    for (int r = 0; r < 4; ++r) inverse_1d(d[r].data(), tmp[r].data());
    for (int c = 0; c < 4; ++c) {
        std::int32_t col[4] = {tmp[0][c], tmp[1][c], tmp[2][c], tmp[3][c]};
        std::int32_t res[4];
        inverse_1d(col, res);
        for (int r = 0; r < 4; ++r) x[r][c] = (res[r] + 32) >> 6;
    }
    return x;
}

Block4 quantize(const Block4& w, double step) {
    Block4 z{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) z[i][j] = std::int32_t(std::lround(w[i][j] / (step * norm_factor(i, j))));
    return z;
}

namespace {

// Orthonormal coefficient -> 64x pre-scaled decoder input.
std::int32_t prescale(double orthonormal, int i, int j) {
    return std::int32_t(std::lround(64.0 * orthonormal / std::sqrt(kInvRowNormSq[i] * kInvRowNormSq[j])));
}

} // namespace

Block4 dequantize(const Block4& z, double step) {
    Block4 d{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) d[i][j] = prescale(z[i][j] * step, i, j);
    return d;
}

Block4 bypass_scale(const Block4& w) {
    Block4 d{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) d[i][j] = prescale(w[i][j] / norm_factor(i, j), i, j);
    return d;
}

GridOffset resolve_grid(const CodecConfig& cfg, std::uint64_t seed) {
    if (!cfg.random_grid) return cfg.grid;
    const std::uint64_t draw = make_rng(seed, Stream::codec)();
    return {int(draw & 3u), int((draw >> 32) & 3u)};
}

Image<std::uint16_t> transcode_frame(const Image<std::uint16_t>& frame, int bit_depth, int qp, GridOffset grid) {
    const double step = qstep(qp);
    const std::int32_t shift = std::int32_t{1} << (bit_depth - 1);
    const std::int32_t top = (std::int32_t{1} << bit_depth) - 1;
    Image<std::uint16_t> out(frame.width, frame.height);

    // Blocks start at dx - 4 when dx > 0 so the leading partial column/row is
    // covered; out-of-frame samples replicate the nearest edge pixel.
    const int x0 = grid.dx > 0 ? grid.dx - 4 : 0;
    const int y0 = grid.dy > 0 ? grid.dy - 4 : 0;
    for (int by = y0; by < frame.height; by += 4) {
        for (int bx = x0; bx < frame.width; bx += 4) {
            Block4 x{};
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) {
                    const int px = std::clamp(bx + c, 0, frame.width - 1);
                    const int py = std::clamp(by + r, 0, frame.height - 1);
                    x[r][c] = std::int32_t(frame.at(px, py)) - shift;
                }
            const Block4 rec = inverse_transform4x4(dequantize(quantize(forward_transform4x4(x), step), step));
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) {
                    const int px = bx + c, py = by + r;
                    if (!out.inside(px, py)) continue;
                    out.at(px, py) = std::uint16_t(std::clamp(rec[r][c] + shift, 0, top));
                }
        }
    }
    return out;
}

FrameStack transcode_stack(const FrameStack& stack, const CodecConfig& cfg, std::uint64_t seed, int threads) {
    cfg.validate();
    if (cfg.bypass()) return stack;
    const GridOffset grid = resolve_grid(cfg, seed);
    const int qp = cfg.qp();
    FrameStack out = stack;
    parallel_for(stack.n_frames, threads, [&](int t) {
        Image<std::uint16_t> f(stack.width, stack.height);
        auto src = stack.frame(t);
        std::copy(src.begin(), src.end(), f.data.begin());
        out.set_frame(t, transcode_frame(f, stack.bit_depth, qp, grid));
    });
    return out;
}

} // namespace cellstorm::codec
