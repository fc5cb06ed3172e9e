#include <algorithm>
#include <cmath>

#include "cellstorm/nn.hpp"
#include "cellstorm/parallel.hpp"

namespace cellstorm::nn {

Tensor conv2d(const Tensor& in, const Layer& l) {
    const int s = l.stride, p = l.padding, k = l.kernel;
    const int oh = (in.height + 2 * p - k) / s + 1;
    const int ow = (in.width + 2 * p - k) / s + 1;
    Tensor out(l.out_channels, oh, ow);
    std::vector<double> acc(std::size_t(oh) * std::size_t(ow));
    const bool replicate = l.padding_mode == PaddingMode::replicate;

    for (int o = 0; o < l.out_channels; ++o) {
        std::fill(acc.begin(), acc.end(), double(l.bias[std::size_t(o)]));
        for (int i = 0; i < l.in_channels; ++i) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double w = l.weight[((std::size_t(o) * std::size_t(l.in_channels) + std::size_t(i)) * std::size_t(k) + std::size_t(ky)) * std::size_t(k) + std::size_t(kx)];
                    if (w == 0.0) continue;
                    // Output columns whose input column lies inside the image.
                    const int ox_lo = std::max(0, (p - kx + s - 1) / s);
                    const int hi_num = in.width - 1 + p - kx;
                    const int ox_hi = hi_num < 0 ? -1 : std::min(ow - 1, hi_num / s);
                    for (int oy = 0; oy < oh; ++oy) {
                        int iy = oy * s - p + ky;
                        if (iy < 0 || iy >= in.height) {
                            if (!replicate) continue;
                            iy = std::clamp(iy, 0, in.height - 1);
                        }
                        const float* row = &in.data[(std::size_t(i) * std::size_t(in.height) + std::size_t(iy)) * std::size_t(in.width)];
                        double* dst = &acc[std::size_t(oy) * std::size_t(ow)];
                        for (int ox = ox_lo; ox <= ox_hi; ++ox) dst[ox] += w * row[ox * s - p + kx];
                        if (replicate) {
                            for (int ox = 0; ox < std::min(ox_lo, ow); ++ox) dst[ox] += w * row[0];
                            for (int ox = std::max(ox_hi + 1, 0); ox < ow; ++ox) dst[ox] += w * row[in.width - 1];
                        }
                    }
                }
            }
        }
        float* dst = &out.data[std::size_t(o) * acc.size()];
        for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = float(acc[j]);
    }
    return out;
}

Tensor nn_resize(const Tensor& in, int factor) {
    Tensor out(in.channels, in.height * factor, in.width * factor);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / factor, x / factor);
    return out;
}

Tensor forward(const Tensor& input, const WeightArchive& weights) {
    if (input.channels != weights.input_channels)
        throw Error("invalid-input", "input has " + std::to_string(input.channels) + " channels, network expects " +
                                         std::to_string(weights.input_channels));
    const int m = weights.size_multiple();
    if (input.height % m != 0 || input.width % m != 0)
        throw Error("invalid-input", "input dimensions " + std::to_string(input.width) + "x" +
                                         std::to_string(input.height) + " must be multiples of " + std::to_string(m));

    std::vector<char> needed(weights.layers.size(), 0);
    for (const auto& l : weights.layers)
        if (l.kind == LayerKind::concat_skip) needed[std::size_t(l.source)] = 1;
    std::vector<Tensor> saved(weights.layers.size());

    Tensor x = input;
    for (std::size_t i = 0; i < weights.layers.size(); ++i) {
        const auto& l = weights.layers[i];
        switch (l.kind) {
        case LayerKind::conv: x = conv2d(x, l); break;
        case LayerKind::leaky_relu:
            for (auto& v : x.data)
                if (v < 0.0f) v *= l.slope;
            break;
        case LayerKind::relu:
        case LayerKind::clamp_nonneg:
            for (auto& v : x.data) v = std::max(v, 0.0f);
            break;
        case LayerKind::norm_affine: {
            const std::size_t plane = std::size_t(x.height) * std::size_t(x.width);
            for (int c = 0; c < x.channels; ++c) {
                const float a = l.scale[std::size_t(c)], b = l.shift[std::size_t(c)];
                float* d = &x.data[std::size_t(c) * plane];
                for (std::size_t j = 0; j < plane; ++j) d[j] = d[j] * a + b;
            }
            break;
        }
        case LayerKind::nn_resize: x = nn_resize(x, l.factor); break;
        case LayerKind::concat_skip: {
            const Tensor& skip = saved[std::size_t(l.source)];
            if (skip.height != x.height || skip.width != x.width)
                throw Error("invalid-input", "skip connection spatial size mismatch");
            x.data.insert(x.data.end(), skip.data.begin(), skip.data.end());
            x.channels += skip.channels;
            break;
        }
        }
        if (needed[i]) saved[i] = x;
    }
    return x;
}

ImageF infer(const ImageF& frame, const WeightArchive& weights) {
    Tensor in(1, frame.height, frame.width);
    in.data = frame.data;
    const Tensor out = forward(in, weights);
    ImageF map(out.width, out.height);
    std::copy(out.data.begin(), out.data.begin() + std::ptrdiff_t(map.size()), map.data.begin());
    return map;
}

ImageF upsample_nearest(const ImageF& img, int factor) {
    ImageF out(img.width * factor, img.height * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(x / factor, y / factor);
    return out;
}

void UpsampleGrid::validate() const {
    if (factor < 1) throw Error("config", "upsample factor must be >= 1");
}

LocalizationTable extract_table(const ImageF& map, const UpsampleGrid& grid, double pixel_nm, int frame_index,
                                double rel_threshold) {
    LocalizationTable rows;
    if (map.data.empty()) return rows;
    const float peak = *std::max_element(map.data.begin(), map.data.end());
    if (!(peak > 0.0f)) return rows;
    const double threshold = rel_threshold * peak;
    const double px = pixel_nm / grid.factor;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            const float v = map.at(x, y);
            if (!(v > threshold)) continue;
            // Ties go to the first pixel in raster order.
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!(dx || dy) || !map.inside(x + dx, y + dy)) continue;
                    const float n = map.at(x + dx, y + dy);
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (n > v || (earlier && n == v)) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) rows.push_back({frame_index, (x + 0.5) * px, (y + 0.5) * px, std::nullopt, double(v), std::nullopt});
        }
    return rows;
}

ImageF prepare_frame(const FrameStack& stack, int t, const UpsampleGrid& grid) {
    ImageF img(stack.width, stack.height);
    const float scale = 1.0f / float(stack.max_value());
    auto f = stack.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) img.data[i] = float(f[i]) * scale;
    return upsample_nearest(img, grid.factor);
}

namespace {

struct Span1D {
    int origin, length, own_lo, own_hi;
};

std::vector<Span1D> tile_axis(int size, int tile, int halo, int multiple) {
    if (size <= tile) return {{0, size, 0, size}};
    const int step = std::max(multiple, ((tile - 2 * halo) / multiple) * multiple);
    std::vector<int> origins;
    for (int o = 0; o + tile < size; o += step) origins.push_back(o);
    if (origins.empty() || origins.back() != size - tile) origins.push_back(size - tile);
    std::vector<Span1D> spans;
    for (std::size_t k = 0; k < origins.size(); ++k) {
        const int lo = k == 0 ? 0 : (origins[k - 1] + tile + origins[k]) / 2;
        const int hi = k + 1 == origins.size() ? size : (origins[k] + tile + origins[k + 1]) / 2;
        spans.push_back({origins[k], tile, lo, hi});
    }
    return spans;
}

} // namespace

ImageF generate_map(const ImageF& prepared, const WeightArchive& weights, const NnLocalizeConfig& cfg) {
    const int m = weights.size_multiple();
    const int hp = (prepared.height + m - 1) / m * m;
    const int wp = (prepared.width + m - 1) / m * m;
    ImageF padded(wp, hp, 0.0f);
    for (int y = 0; y < prepared.height; ++y)
        for (int x = 0; x < prepared.width; ++x) padded.at(x, y) = prepared.at(x, y);

    const int tile = cfg.tile > 0 ? cfg.tile : weights.input_size;
    const bool whole = cfg.force_whole || tile <= 0 || (!cfg.force_tiling && hp <= tile && wp <= tile);
    ImageF full(wp, hp, 0.0f);
    if (whole) {
        full = infer(padded, weights);
    } else {
        if (tile % m != 0 || tile <= 2 * cfg.halo)
            throw Error("config", "tile size " + std::to_string(tile) + " must be a multiple of " + std::to_string(m) +
                                      " and exceed twice the halo");
        for (const auto& ty : tile_axis(hp, tile, cfg.halo, m))
            for (const auto& tx : tile_axis(wp, tile, cfg.halo, m)) {
                ImageF patch(tx.length, ty.length);
                for (int y = 0; y < ty.length; ++y)
                    for (int x = 0; x < tx.length; ++x) patch.at(x, y) = padded.at(tx.origin + x, ty.origin + y);
                const ImageF out = infer(patch, weights);
                for (int y = ty.own_lo; y < ty.own_hi; ++y)
                    for (int x = tx.own_lo; x < tx.own_hi; ++x) full.at(x, y) = out.at(x - tx.origin, y - ty.origin);
            }
    }
    ImageF cropped(prepared.width, prepared.height);
    for (int y = 0; y < prepared.height; ++y)
        for (int x = 0; x < prepared.width; ++x) cropped.at(x, y) = full.at(x, y);
    return cropped;
}

LocalizationTable nn_localize_stack(const FrameStack& stack, const WeightArchive& weights,
                                    const NnLocalizeConfig& cfg, int threads) {
    cfg.grid.validate();
    std::vector<LocalizationTable> per_frame(std::size_t(stack.n_frames));
    parallel_for(stack.n_frames, threads, [&](int t) {
        const ImageF map = generate_map(prepare_frame(stack, t, cfg.grid), weights, cfg);
        per_frame[std::size_t(t)] = extract_table(map, cfg.grid, stack.pixel_nm, t);
    });
    LocalizationTable all;
    for (auto& rows : per_frame) all.insert(all.end(), rows.begin(), rows.end());
    return all;
}

} // namespace cellstorm::nn
