#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellstorm {

/// Base class for every error raised by the library. `code()` is a short
/// machine-readable tag that the CLI prints verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Dense row-major 2-D array.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, T fill = T{}) : width(w), height(h), data(std::size_t(w) * std::size_t(h), fill) {}

    T& at(int x, int y) { return data[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    const T& at(int x, int y) const { return data[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    std::size_t size() const { return data.size(); }
    bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

using ImageD = Image<double>;
using ImageF = Image<float>;

/// Time series of ADU frames plus the physical metadata needed to turn
/// pixel indices into nanometres.
struct FrameStack {
    int width = 0;
    int height = 0;
    int n_frames = 0;
    double pixel_nm = 100.0;
    double fps = 20.0;
    int bit_depth = 12;
    std::vector<std::uint16_t> data;

    static FrameStack zeros(int width, int height, int n_frames, double pixel_nm = 100.0, double fps = 20.0,
                            int bit_depth = 12);

    std::size_t frame_size() const { return std::size_t(width) * std::size_t(height); }
    std::uint32_t max_value() const { return (std::uint32_t{1} << bit_depth) - 1; }

    std::span<std::uint16_t> frame(int t);
    std::span<const std::uint16_t> frame(int t) const;
    ImageD frame_image(int t) const;
    void set_frame(int t, const Image<std::uint16_t>& img);

    /// Throws Error("invalid-stack") if any invariant is violated.
    void validate() const;
};

struct Emitter {
    int frame = 0;
    double x_nm = 0.0;
    double y_nm = 0.0;
    double photons = 0.0;
    std::optional<std::int64_t> id;

    bool operator==(const Emitter&) const = default;
};
using EmitterTable = std::vector<Emitter>;

struct Localization {
    int frame = 0;
    double x_nm = 0.0;
    double y_nm = 0.0;
    std::optional<double> sigma_nm;
    std::optional<double> intensity;
    std::optional<double> background;

    bool operator==(const Localization&) const = default;
};
using LocalizationTable = std::vector<Localization>;

} // namespace cellstorm
