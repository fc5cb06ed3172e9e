#include "cellstorm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cellstorm {

FrameStack FrameStack::zeros(int width, int height, int n_frames, double pixel_nm, double fps, int bit_depth) {
    FrameStack s;
    s.width = width;
    s.height = height;
    s.n_frames = n_frames;
    s.pixel_nm = pixel_nm;
    s.fps = fps;
    s.bit_depth = bit_depth;
    s.data.assign(std::size_t(width) * std::size_t(height) * std::size_t(n_frames), 0);
    return s;
}

std::span<std::uint16_t> FrameStack::frame(int t) {
    return {data.data() + std::size_t(t) * frame_size(), frame_size()};
}

std::span<const std::uint16_t> FrameStack::frame(int t) const {
    return {data.data() + std::size_t(t) * frame_size(), frame_size()};
}

ImageD FrameStack::frame_image(int t) const {
    ImageD img(width, height);
    auto f = frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) img.data[i] = f[i];
    return img;
}

void FrameStack::set_frame(int t, const Image<std::uint16_t>& img) {
    if (img.width != width || img.height != height) throw Error("invalid-stack", "frame dimensions do not match stack");
    std::copy(img.data.begin(), img.data.end(), frame(t).begin());
}

void FrameStack::validate() const {
    if (width <= 0 || height <= 0 || n_frames < 0) throw Error("invalid-stack", "stack dimensions must be positive");
    if (bit_depth < 1 || bit_depth > 16) throw Error("invalid-stack", "bit_depth must be in [1,16]");
    if (!(pixel_nm > 0.0) || !(fps > 0.0)) throw Error("invalid-stack", "pixel_nm and fps must be positive");
    if (data.size() != frame_size() * std::size_t(n_frames))
        throw Error("invalid-stack", "data length does not match width*height*n_frames");
    const auto limit = max_value();
    for (auto v : data)
        if (v > limit) throw Error("invalid-stack", "pixel value exceeds 2^bit_depth-1");
}

namespace io {

namespace {

const char* kind_code(StackErrorKind k) {
    switch (k) {
    case StackErrorKind::bad_magic: return "stack-bad-magic";
    case StackErrorKind::bad_header: return "stack-bad-header";
    case StackErrorKind::truncated: return "stack-truncated";
    case StackErrorKind::size_mismatch: return "stack-size-mismatch";
    case StackErrorKind::value_range: return "stack-value-range";
    case StackErrorKind::io: return "io";
    }
    return "stack";
}

void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}

} // namespace

StackFormatError::StackFormatError(StackErrorKind kind, const std::string& what)
    : Error(kind_code(kind), what), kind_(kind) {}

TableParseError::TableParseError(std::size_t line, const std::string& what)
    : Error("table-parse", "line " + std::to_string(line) + ": " + what), line_(line) {}

std::string stack_header_json(const FrameStack& stack) {
    nlohmann::ordered_json h;
    h["width"] = stack.width;
    h["height"] = stack.height;
    h["n_frames"] = stack.n_frames;
    h["bit_depth"] = stack.bit_depth;
    h["pixel_nm"] = stack.pixel_nm;
    h["fps"] = stack.fps;
    return h.dump();
}

void write_stack(const FrameStack& stack, const std::filesystem::path& path) {
    const auto limit = stack.max_value();
    for (auto v : stack.data)
        if (v > limit)
            throw StackFormatError(StackErrorKind::value_range,
                                   "pixel value " + std::to_string(v) + " exceeds bit depth " +
                                       std::to_string(stack.bit_depth));
    if (stack.data.size() != stack.frame_size() * std::size_t(stack.n_frames))
        throw StackFormatError(StackErrorKind::size_mismatch, "stack data length does not match its dimensions");

    std::string buf = kStackMagic;
    buf += stack_header_json(stack);
    buf += '\n';
    buf.reserve(buf.size() + stack.data.size() * 2);
    for (auto v : stack.data) put_u16le(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StackFormatError(StackErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw StackFormatError(StackErrorKind::io, "write failed: " + path.string());
}

FrameStack read_stack(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StackFormatError(StackErrorKind::io, "cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t magic_len = std::strlen(kStackMagic);
    if (buf.size() < magic_len || buf.compare(0, magic_len, kStackMagic) != 0)
        throw StackFormatError(StackErrorKind::bad_magic, path.string() + " is not a CSTK1 stack");

    const auto eol = buf.find('\n', magic_len);
    if (eol == std::string::npos) throw StackFormatError(StackErrorKind::bad_header, "missing header line");

    FrameStack s;
    try {
        auto h = nlohmann::json::parse(buf.substr(magic_len, eol - magic_len));
        s.width = h.at("width").get<int>();
        s.height = h.at("height").get<int>();
        s.n_frames = h.at("n_frames").get<int>();
        s.bit_depth = h.at("bit_depth").get<int>();
        s.pixel_nm = h.at("pixel_nm").get<double>();
        s.fps = h.at("fps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw StackFormatError(StackErrorKind::bad_header, std::string("bad header: ") + e.what());
    }
    if (s.width <= 0 || s.height <= 0 || s.n_frames < 0 || s.bit_depth < 1 || s.bit_depth > 16)
        throw StackFormatError(StackErrorKind::bad_header, "header declares invalid dimensions");

    const std::size_t expected = s.frame_size() * std::size_t(s.n_frames) * 2;
    const std::size_t payload = buf.size() - eol - 1;
    if (payload < expected)
        throw StackFormatError(StackErrorKind::truncated, "payload has " + std::to_string(payload) +
                                                              " bytes, header promises " + std::to_string(expected));
    if (payload > expected)
        throw StackFormatError(StackErrorKind::size_mismatch, "payload has " + std::to_string(payload) +
                                                                  " bytes, header declares " + std::to_string(expected));

    s.data.resize(expected / 2);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + eol + 1);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = std::uint16_t(p[2 * i] | (p[2 * i + 1] << 8));
    const auto limit = s.max_value();
    for (auto v : s.data)
        if (v > limit) throw StackFormatError(StackErrorKind::value_range, "payload value exceeds declared bit depth");
    return s;
}

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view field, std::size_t line, const char* column) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        throw TableParseError(line, std::string("non-numeric ") + column + " '" + std::string(field) + "'");
    return v;
}

std::optional<double> parse_opt(std::string_view field, std::size_t line, const char* column) {
    if (field.empty()) return std::nullopt;
    return parse_double(field, line, column);
}

} // namespace

std::string table_to_csv(const LocalizationTable& table) {
    std::string out = kTableHeader;
    out += '\n';
    for (const auto& r : table) {
        out += std::to_string(r.frame + 1);
        out += ',';
        out += format_number(r.x_nm);
        out += ',';
        out += format_number(r.y_nm);
        out += ',';
        out += opt(r.sigma_nm);
        out += ',';
        out += opt(r.intensity);
        out += '\n';
    }
    return out;
}

LocalizationTable table_from_csv(const std::string& text) {
    LocalizationTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != kTableHeader) throw TableParseError(lineno, "unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        auto f = split_commas(line);
        if (f.size() != 5) throw TableParseError(lineno, "expected 5 fields, got " + std::to_string(f.size()));
        int frame = 0;
        auto [ptr, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), frame);
        if (ec != std::errc() || ptr != f[0].data() + f[0].size() || frame < 1)
            throw TableParseError(lineno, "bad frame '" + std::string(f[0]) + "'");
        Localization r;
        r.frame = frame - 1;
        r.x_nm = parse_double(f[1], lineno, "x");
        r.y_nm = parse_double(f[2], lineno, "y");
        r.sigma_nm = parse_opt(f[3], lineno, "sigma");
        r.intensity = parse_opt(f[4], lineno, "intensity");
        table.push_back(r);
    }
    if (lineno == 0) throw TableParseError(1, "empty file");
    return table;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("io", "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

void write_table(const LocalizationTable& table, const std::filesystem::path& path) {
    write_text(path, table_to_csv(table));
}

LocalizationTable read_table(const std::filesystem::path& path) { return table_from_csv(read_text(path)); }

void write_emitters(const EmitterTable& table, const std::filesystem::path& path) {
    LocalizationTable rows;
    rows.reserve(table.size());
    for (const auto& e : table) rows.push_back({e.frame, e.x_nm, e.y_nm, std::nullopt, e.photons, std::nullopt});
    write_table(rows, path);
}

EmitterTable read_emitters(const std::filesystem::path& path) {
    EmitterTable out;
    for (const auto& r : read_table(path)) {
        if (!r.intensity) throw Error("table-parse", "emitter row without photon count");
        out.push_back({r.frame, r.x_nm, r.y_nm, *r.intensity, std::nullopt});
    }
    return out;
}

} // namespace io
} // namespace cellstorm
