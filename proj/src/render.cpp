#include <algorithm>
#include <cmath>
#include <fstream>

#include "cellstorm/eval.hpp"

namespace cellstorm::eval {

int RenderGeometry::width_px() const { return std::max(1, int(std::ceil(width_nm / px_nm - 1e-9))); }
int RenderGeometry::height_px() const { return std::max(1, int(std::ceil(height_nm / px_nm - 1e-9))); }

RenderGeometry geometry_for(const FrameStack& stack, double px_nm) {
    return {stack.width * stack.pixel_nm, stack.height * stack.pixel_nm, px_nm};
}

namespace {

ImageD blur(const ImageD& img, double sigma_px) {
    const int r = std::max(1, int(std::ceil(4.0 * sigma_px)));
    std::vector<double> k(std::size_t(2 * r + 1));
    double norm = 0.0;
    for (int i = -r; i <= r; ++i) norm += k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
    for (auto& v : k) v /= norm;
    ImageD tmp(img.width, img.height), out(img.width, img.height);
    // Zero outside the field so total mass only leaks at the borders.
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i)
                if (x + i >= 0 && x + i < img.width) s += k[std::size_t(i + r)] * img.at(x + i, y);
            tmp.at(x, y) = s;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i)
                if (y + i >= 0 && y + i < img.height) s += k[std::size_t(i + r)] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    return out;
}

} // namespace

ImageD render(const LocalizationTable& table, const RenderGeometry& geom, std::optional<double> blur_sigma_nm) {
    if (!(geom.px_nm > 0.0)) throw Error("config", "render pixel size must be > 0");
    ImageD img(geom.width_px(), geom.height_px(), 0.0);
    for (const auto& r : table) {
        const int x = int(std::floor(r.x_nm / geom.px_nm));
        const int y = int(std::floor(r.y_nm / geom.px_nm));
        if (img.inside(x, y)) img.at(x, y) += 1.0;
    }
    if (blur_sigma_nm && *blur_sigma_nm > 0.0) return blur(img, *blur_sigma_nm / geom.px_nm);
    return img;
}

ImageD widefield(const FrameStack& stack) {
    ImageD img(stack.width, stack.height, 0.0);
    for (int t = 0; t < stack.n_frames; ++t) {
        auto f = stack.frame(t);
        for (std::size_t i = 0; i < f.size(); ++i) img.data[i] += f[i];
    }
    return img;
}

void write_pgm16(const ImageD& image, const std::filesystem::path& path) {
    double peak = 0.0;
    bool integral = true;
    for (double v : image.data) {
        peak = std::max(peak, v);
        if (v < 0.0 || v != std::floor(v)) integral = false;
    }
    const double scale = (integral && peak <= 65535.0) || peak <= 0.0 ? 1.0 : 65535.0 / peak;
    std::string buf = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n65535\n";
    buf.reserve(buf.size() + image.data.size() * 2);
    for (double v : image.data) {
        const auto q = std::uint16_t(std::clamp(std::lround(v * scale), 0L, 65535L));
        buf.push_back(char(q >> 8));
        buf.push_back(char(q & 0xff));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
}

} // namespace cellstorm::eval
