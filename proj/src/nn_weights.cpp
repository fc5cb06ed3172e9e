#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cellstorm/nn.hpp"

namespace cellstorm::nn {

namespace {

const char* archive_code(ArchiveErrorKind k) {
    switch (k) {
    case ArchiveErrorKind::io: return "io";
    case ArchiveErrorKind::bad_manifest: return "archive-bad-manifest";
    case ArchiveErrorKind::shape_mismatch: return "archive-shape-mismatch";
    case ArchiveErrorKind::dangling_skip: return "archive-dangling-skip";
    case ArchiveErrorKind::truncated_blob: return "archive-truncated-blob";
    }
    return "archive";
}

constexpr const char* kFormat = "cellstorm-generator";

std::string layer_label(std::size_t i, const Layer& l) { return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")"; }

} // namespace

ArchiveError::ArchiveError(ArchiveErrorKind kind, const std::string& what)
    : Error(archive_code(kind), what), kind_(kind) {}

LayerKind parse_layer_kind(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "leaky_relu") return LayerKind::leaky_relu;
    if (s == "relu") return LayerKind::relu;
    if (s == "nn_resize") return LayerKind::nn_resize;
    if (s == "concat_skip") return LayerKind::concat_skip;
    if (s == "norm_affine") return LayerKind::norm_affine;
    if (s == "clamp_nonneg") return LayerKind::clamp_nonneg;
    throw ArchiveError(ArchiveErrorKind::bad_manifest, "unknown layer kind '" + s + "'");
}

std::string to_string(LayerKind k) {
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::relu: return "relu";
    case LayerKind::nn_resize: return "nn_resize";
    case LayerKind::concat_skip: return "concat_skip";
    case LayerKind::norm_affine: return "norm_affine";
    case LayerKind::clamp_nonneg: return "clamp_nonneg";
    }
    return "?";
}

int WeightArchive::depth() const {
    int d = 0;
    for (const auto& l : layers)
        if (l.kind == LayerKind::conv && l.stride == 2) ++d;
    return d;
}

int WeightArchive::output_channels() const {
    int ch = input_channels;
    std::vector<int> out;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::conv) ch = l.out_channels;
        if (l.kind == LayerKind::concat_skip) ch += out[std::size_t(l.source)];
        out.push_back(ch);
    }
    return ch;
}

void validate_archive(const WeightArchive& a) {
    using K = ArchiveErrorKind;
    if (a.input_channels < 1) throw ArchiveError(K::shape_mismatch, "input_channels must be >= 1");
    std::vector<int> channels, level;
    int ch = a.input_channels, lvl = 0, encoders = 0, decoders = 0;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& l = a.layers[i];
        switch (l.kind) {
        case LayerKind::conv: {
            if (l.in_channels != ch)
                throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " expects " + std::to_string(l.in_channels) +
                                                          " input channels, receives " + std::to_string(ch));
            if (l.out_channels < 1 || l.kernel < 1 || (l.stride != 1 && l.stride != 2))
                throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " has invalid kernel/stride/channels");
            if (l.kernel != 2 * l.padding + l.stride)
                throw ArchiveError(K::shape_mismatch,
                                   layer_label(i, l) + " does not map H to H/stride (needs kernel = 2*padding + stride)");
            const auto wcount = std::size_t(l.out_channels) * std::size_t(l.in_channels) * std::size_t(l.kernel) * std::size_t(l.kernel);
            if (l.weight.size() != wcount || l.bias.size() != std::size_t(l.out_channels))
                throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " tensor sizes do not match its shape");
            ch = l.out_channels;
            if (l.stride == 2) {
                ++lvl;
                ++encoders;
            }
            break;
        }
        case LayerKind::norm_affine:
            if (l.channels != ch || l.scale.size() != std::size_t(ch) || l.shift.size() != std::size_t(ch))
                throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " channel count does not match input");
            break;
        case LayerKind::nn_resize:
            if (l.factor != 2) throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " supports factor 2 only");
            if (--lvl < 0) throw ArchiveError(K::shape_mismatch, layer_label(i, l) + " upsamples above input resolution");
            ++decoders;
            break;
        case LayerKind::concat_skip:
            if (l.source < 0 || std::size_t(l.source) >= i)
                throw ArchiveError(K::dangling_skip, layer_label(i, l) + " references layer " + std::to_string(l.source));
            if (level[std::size_t(l.source)] != lvl)
                throw ArchiveError(K::dangling_skip, layer_label(i, l) + " joins layer " + std::to_string(l.source) +
                                                         " at a different resolution");
            ch += channels[std::size_t(l.source)];
            break;
        case LayerKind::leaky_relu:
        case LayerKind::relu:
        case LayerKind::clamp_nonneg: break;
        }
        channels.push_back(ch);
        level.push_back(lvl);
    }
    if (encoders != decoders || lvl != 0)
        throw ArchiveError(K::shape_mismatch, "encoder count (" + std::to_string(encoders) + ") != decoder count (" +
                                                  std::to_string(decoders) + ")");
}

namespace {

using nlohmann::json;

std::size_t shape_count(const json& shape) {
    std::size_t n = 1;
    for (const auto& d : shape) {
        const auto v = d.get<long long>();
        if (v < 0) throw ArchiveError(ArchiveErrorKind::bad_manifest, "negative tensor dimension");
        n *= std::size_t(v);
    }
    return n;
}

std::vector<float> read_blob(const json& ref, const std::string& blob, const std::string& what) {
    const auto offset = ref.at("offset").get<std::size_t>();
    const std::size_t count = shape_count(ref.at("shape"));
    if (offset > blob.size() || (blob.size() - offset) / 4 < count)
        throw ArchiveError(ArchiveErrorKind::truncated_blob,
                           what + " declares " + std::to_string(count) + " floats at byte " + std::to_string(offset) +
                               ", blob holds " + std::to_string(offset > blob.size() ? 0 : (blob.size() - offset) / 4));
    std::vector<float> out(count);
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + offset);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = std::uint32_t(p[4 * i]) | (std::uint32_t(p[4 * i + 1]) << 8) |
                                   (std::uint32_t(p[4 * i + 2]) << 16) | (std::uint32_t(p[4 * i + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

void check_shape(const json& ref, std::vector<long long> expected, const std::string& what) {
    if (ref.at("shape").get<std::vector<long long>>() != expected)
        throw ArchiveError(ArchiveErrorKind::shape_mismatch, what + " shape does not match the layer parameters");
}

} // namespace

WeightArchive load_weights(const std::filesystem::path& dir) {
    const auto manifest_path = std::filesystem::is_directory(dir) ? dir / "manifest.json" : dir;
    std::ifstream mf(manifest_path);
    if (!mf) throw ArchiveError(ArchiveErrorKind::io, "cannot open " + manifest_path.string());
    WeightArchive a;
    try {
        const json m = json::parse(mf);
        if (m.value("format", std::string()) != kFormat)
            throw ArchiveError(ArchiveErrorKind::bad_manifest, "manifest format is not '" + std::string(kFormat) + "'");
        const auto blob_path = manifest_path.parent_path() / m.value("weights_file", std::string("weights.bin"));
        std::ifstream bf(blob_path, std::ios::binary);
        if (!bf) throw ArchiveError(ArchiveErrorKind::io, "cannot open " + blob_path.string());
        const std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

        a.input_channels = m.value("input_channels", 1);
        a.input_size = m.value("input_size", 0);
        for (const auto& jl : m.at("layers")) {
            Layer l;
            l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
            const std::string label = "layer " + std::to_string(a.layers.size()) + " (" + to_string(l.kind) + ")";
            switch (l.kind) {
            case LayerKind::conv:
                l.in_channels = jl.at("in_channels").get<int>();
                l.out_channels = jl.at("out_channels").get<int>();
                l.kernel = jl.at("kernel").get<int>();
                l.stride = jl.value("stride", 1);
                l.padding = jl.value("padding", 0);
                l.padding_mode = jl.value("padding_mode", std::string("zeros")) == "replicate" ? PaddingMode::replicate
                                                                                                 : PaddingMode::zeros;
                check_shape(jl.at("weight"), {l.out_channels, l.in_channels, l.kernel, l.kernel}, label + " weight");
                check_shape(jl.at("bias"), {l.out_channels}, label + " bias");
                l.weight = read_blob(jl.at("weight"), blob, label + " weight");
                l.bias = read_blob(jl.at("bias"), blob, label + " bias");
                break;
            case LayerKind::norm_affine:
                l.channels = jl.at("channels").get<int>();
                check_shape(jl.at("scale"), {l.channels}, label + " scale");
                check_shape(jl.at("shift"), {l.channels}, label + " shift");
                l.scale = read_blob(jl.at("scale"), blob, label + " scale");
                l.shift = read_blob(jl.at("shift"), blob, label + " shift");
                break;
            case LayerKind::leaky_relu: l.slope = jl.value("slope", 0.2f); break;
            case LayerKind::nn_resize: l.factor = jl.value("factor", 2); break;
            case LayerKind::concat_skip: l.source = jl.at("source").get<int>(); break;
            case LayerKind::relu:
            case LayerKind::clamp_nonneg: break;
            }
            a.layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw ArchiveError(ArchiveErrorKind::bad_manifest, std::string("manifest: ") + e.what());
    }
    validate_archive(a);
    return a;
}

void save_weights(const WeightArchive& a, const std::filesystem::path& dir) {
    validate_archive(a);
    std::filesystem::create_directories(dir);
    std::string blob;
    auto append = [&](const std::vector<float>& v, std::vector<long long> shape) {
        nlohmann::ordered_json ref;
        ref["offset"] = blob.size();
        ref["shape"] = shape;
        for (float f : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b) blob.push_back(char((bits >> (8 * b)) & 0xff));
        }
        return ref;
    };
    nlohmann::ordered_json m;
    m["format"] = kFormat;
    m["version"] = 1;
    m["weights_file"] = "weights.bin";
    m["input_channels"] = a.input_channels;
    m["input_size"] = a.input_size;
    m["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : a.layers) {
        nlohmann::ordered_json jl;
        jl["kind"] = to_string(l.kind);
        switch (l.kind) {
        case LayerKind::conv:
            jl["in_channels"] = l.in_channels;
            jl["out_channels"] = l.out_channels;
            jl["kernel"] = l.kernel;
            jl["stride"] = l.stride;
            jl["padding"] = l.padding;
            jl["padding_mode"] = l.padding_mode == PaddingMode::replicate ? "replicate" : "zeros";
            jl["weight"] = append(l.weight, {l.out_channels, l.in_channels, l.kernel, l.kernel});
            jl["bias"] = append(l.bias, {l.out_channels});
            break;
        case LayerKind::norm_affine:
            jl["channels"] = l.channels;
            jl["scale"] = append(l.scale, {l.channels});
            jl["shift"] = append(l.shift, {l.channels});
            break;
        case LayerKind::leaky_relu: jl["slope"] = l.slope; break;
        case LayerKind::nn_resize: jl["factor"] = l.factor; break;
        case LayerKind::concat_skip: jl["source"] = l.source; break;
        case LayerKind::relu:
        case LayerKind::clamp_nonneg: break;
        }
        m["layers"].push_back(jl);
    }
    std::ofstream bf(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    bf.write(blob.data(), std::streamsize(blob.size()));
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    mf << m.dump(2) << '\n';
    if (!bf || !mf) throw ArchiveError(ArchiveErrorKind::io, "cannot write archive to " + dir.string());
}

WeightArchive reference_unet(int levels, int filters, int input_size, PaddingMode padding) {
    if (levels < 1 || filters < 1) throw Error("config", "reference_unet needs levels >= 1 and filters >= 1");
    WeightArchive a;
    a.input_size = input_size;
    auto conv = [&](int in, int out, int k, int s, int p) {
        Layer l;
        l.kind = LayerKind::conv;
        l.in_channels = in;
        l.out_channels = out;
        l.kernel = k;
        l.stride = s;
        l.padding = p;
        l.padding_mode = padding;
        l.weight.assign(std::size_t(out) * std::size_t(in) * std::size_t(k) * std::size_t(k), 0.0f);
        l.bias.assign(std::size_t(out), 0.0f);
        a.layers.push_back(std::move(l));
    };
    auto norm = [&](int ch) {
        Layer l;
        l.kind = LayerKind::norm_affine;
        l.channels = ch;
        l.scale.assign(std::size_t(ch), 1.0f);
        l.shift.assign(std::size_t(ch), 0.0f);
        a.layers.push_back(std::move(l));
    };
    auto simple = [&](LayerKind k) {
        Layer l;
        l.kind = k;
        a.layers.push_back(std::move(l));
    };

    std::vector<int> enc_channels, enc_output;
    int ch = 1;
    for (int lvl = 0; lvl < levels; ++lvl) {
        const int out = std::min(512, filters << lvl);
        conv(ch, out, 4, 2, 1);
        if (lvl > 0) norm(out);
        simple(LayerKind::leaky_relu);
        enc_channels.push_back(out);
        enc_output.push_back(int(a.layers.size()) - 1);
        ch = out;
    }
    for (int lvl = levels - 1; lvl >= 0; --lvl) {
        simple(LayerKind::nn_resize);
        if (lvl == 0) {
            conv(ch, 1, 3, 1, 1);
            simple(LayerKind::clamp_nonneg);
            break;
        }
        const int out = enc_channels[std::size_t(lvl - 1)];
        conv(ch, out, 3, 1, 1);
        norm(out);
        simple(LayerKind::relu);
        Layer skip;
        skip.kind = LayerKind::concat_skip;
        skip.source = enc_output[std::size_t(lvl - 1)];
        a.layers.push_back(skip);
        ch = out + enc_channels[std::size_t(lvl - 1)];
    }
    validate_archive(a);
    return a;
}

} // namespace cellstorm::nn
