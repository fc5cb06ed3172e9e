#include "cellstorm/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cellstorm::config {

using Json = nlohmann::ordered_json;

namespace {

// Single list of (dotted path, field) bindings shared by the writer and the
// reader so the two can never drift apart.
template <typename C, typename F>
void visit(C& c, F&& f) {
    f("seed", c.seed);
    f("camera.gain", c.camera.gain);
    f("camera.offset", c.camera.offset);
    f("camera.read_noise", c.camera.read_noise);
    f("camera.qe", c.camera.qe);
    f("camera.knee", c.camera.knee);
    f("camera.clip_floor", c.camera.clip_floor);
    f("camera.bit_depth", c.camera.bit_depth);
    f("camera.dip_period_s", c.camera.dip_period_s);
    f("camera.dip_depth", c.camera.dip_depth);
    f("camera.drift_per_s", c.camera.drift_per_s);
    f("codec.quality", c.codec.quality);
    f("codec.random_grid", c.codec.random_grid);
    f("codec.grid", c.codec.grid);
    f("codec.qp", c.codec.qp_override);
    f("simulation.fov_um", c.simulation.scene.fov_um);
    f("simulation.pixel_nm", c.simulation.scene.pixel_nm);
    f("simulation.fps", c.simulation.scene.fps);
    f("simulation.structure", c.simulation.scene.structure);
    f("simulation.density", c.simulation.scene.density);
    f("simulation.n_lines", c.simulation.scene.n_lines);
    f("simulation.mask_pgm", c.simulation.mask_pgm);
    f("simulation.background_photons", c.simulation.scene.background_photons);
    f("simulation.p_on", c.simulation.blink.p_on);
    f("simulation.mean_on_frames", c.simulation.blink.mean_on_frames);
    f("simulation.photons", c.simulation.blink.photons);
    f("simulation.psf_sigma_nm", c.simulation.psf.sigma_nm);
    f("simulation.truncation_radius_px", c.simulation.psf.truncation_radius_px);
    f("simulation.frames", c.simulation.frames);
    f("simulation.compress", c.simulation.compress);
    f("localizer.filter_sigma1", c.localizer.filter_sigma1);
    f("localizer.filter_sigma2", c.localizer.filter_sigma2);
    f("localizer.threshold_k", c.localizer.threshold_k);
    f("localizer.roi_radius", c.localizer.roi_radius);
    f("localizer.max_iters", c.localizer.max_iters);
    f("localizer.converge_tol", c.localizer.converge_tol);
    f("localizer.min_photons", c.localizer.min_photons);
    f("nn.factor", c.nn.factor);
    f("nn.tile", c.nn.tile);
    f("nn.halo", c.nn.halo);
    f("eval.radius_nm", c.eval.radius_nm);
    f("eval.one_to_one", c.eval.one_to_one);
    f("eval.render_px_nm", c.eval.render_px_nm);
    f("eval.blur_nm", c.eval.blur_nm);
    f("eval.frc_px_nm", c.eval.frc_px_nm);
    f("dataset.frames", c.dataset.frames);
    f("dataset.quality_min", c.dataset.quality_min);
    f("dataset.quality_max", c.dataset.quality_max);
}

Json::json_pointer pointer(const std::string& dotted) {
    std::string p;
    std::stringstream ss(dotted);
    for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
    return Json::json_pointer(p);
}

[[noreturn]] void type_error(const std::string& path, const char* expected, const Json& v) {
    throw Error("config-type", "config key '" + path + "' expects " + expected + ", got " + v.dump());
}

// -- writers ---------------------------------------------------------------

Json encode(double v) { return v; }
Json encode(int v) { return v; }
Json encode(std::uint64_t v) { return v; }
Json encode(bool v) { return v; }
Json encode(const std::string& v) { return v; }
Json encode(sim::Structure v) { return sim::to_string(v); }
Json encode(const codec::GridOffset& g) { return Json::array({g.dx, g.dy}); }
template <typename T>
Json encode(const std::optional<T>& v) { return v ? encode(*v) : Json(nullptr); }

// -- readers ---------------------------------------------------------------

void decode(const Json& v, const std::string& path, double& out) {
    if (!v.is_number()) type_error(path, "a number", v);
    out = v.get<double>();
}
void decode(const Json& v, const std::string& path, int& out) {
    if (!v.is_number_integer()) type_error(path, "an integer", v);
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        type_error(path, "a 32-bit integer", v);
    out = int(x);
}
void decode(const Json& v, const std::string& path, std::uint64_t& out) {
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
        type_error(path, "a non-negative integer", v);
    out = v.get<std::uint64_t>();
}
void decode(const Json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) type_error(path, "a boolean", v);
    out = v.get<bool>();
}
void decode(const Json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) type_error(path, "a string", v);
    out = v.get<std::string>();
}
void decode(const Json& v, const std::string& path, sim::Structure& out) {
    if (!v.is_string()) type_error(path, "a structure name", v);
    try {
        out = sim::parse_structure(v.get<std::string>());
    } catch (const Error&) {
        type_error(path, "one of uniform-random, line-set, bitmap-mask", v);
    }
}
void decode(const Json& v, const std::string& path, codec::GridOffset& out) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        type_error(path, "an integer pair [dx, dy]", v);
    out = {v[0].get<int>(), v[1].get<int>()};
}
template <typename T>
void decode(const Json& v, const std::string& path, std::optional<T>& out) {
    if (v.is_null()) {
        out.reset();
        return;
    }
    T inner{};
    decode(v, path, inner);
    out = inner;
}

Json to_document(const RunConfig& cfg) {
    Json doc = Json::object();
    visit(cfg, [&](const char* path, const auto& field) { doc[pointer(path)] = encode(field); });
    return doc;
}

void collect_leaves(const Json& node, const std::string& prefix, std::vector<std::string>& out) {
    if (node.is_object() && !node.empty()) {
        for (const auto& [k, v] : node.items()) collect_leaves(v, prefix.empty() ? k : prefix + "." + k, out);
        return;
    }
    out.push_back(prefix);
}

std::set<std::string> known_paths() {
    std::set<std::string> paths;
    RunConfig dummy;
    visit(dummy, [&](const char* path, auto&) { paths.insert(path); });
    return paths;
}

RunConfig from_document(const Json& doc) {
    if (!doc.is_object()) throw Error("config-type", "config document must be a JSON object");
    const auto known = known_paths();
    std::vector<std::string> leaves;
    collect_leaves(doc, "", leaves);
    for (const auto& leaf : leaves) {
        if (known.count(leaf)) continue;
        // A group given as a scalar is a type error, anything else is unknown.
        bool is_group = false;
        for (const auto& k : known)
            if (k.rfind(leaf + ".", 0) == 0) is_group = true;
        if (is_group) type_error(leaf, "an object", doc.at(pointer(leaf)));
        if (!leaf.empty()) throw Error("config-unknown-key", "unknown config key '" + leaf + "'");
    }
    RunConfig cfg;
    visit(cfg, [&](const char* path, auto& field) {
        const auto ptr = pointer(path);
        if (doc.contains(ptr)) decode(doc.at(ptr), path, field);
    });
    return cfg;
}

Json parse_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error("config-type", origin + " is not valid JSON: " + e.what());
    }
}

} // namespace

void RunConfig::validate() const {
    camera.validate();
    codec.validate();
    simulation.scene.validate();
    simulation.blink.validate();
    simulation.psf.validate();
    localizer.validate();
    if (simulation.frames < 1) throw Error("config", "simulation.frames must be >= 1");
    if (nn.factor < 1 || nn.tile < 0 || nn.halo < 0) throw Error("config", "nn group values out of range");
    if (!(eval.radius_nm > 0.0) || !(eval.render_px_nm > 0.0) || !(eval.frc_px_nm > 0.0))
        throw Error("config", "eval radius and pixel sizes must be > 0");
    if (dataset.frames < 1 || dataset.quality_min < 0 || dataset.quality_max > 100 ||
        dataset.quality_min > dataset.quality_max)
        throw Error("config", "dataset group values out of range");
}

std::string to_json(const RunConfig& cfg) { return to_document(cfg).dump(2); }

RunConfig from_json(const std::string& text) {
    Json doc = parse_text(text, "config");
    if (doc.is_object() && doc.contains("config") && doc.contains("tool")) doc = doc["config"];
    return from_document(doc);
}

RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& assignments) {
    if (assignments.empty()) return base;
    Json doc = to_document(base);
    const auto known = known_paths();
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("usage", "override '" + a + "' is not key=value");
        const std::string key = a.substr(0, eq), raw = a.substr(eq + 1);
        if (!known.count(key)) throw Error("config-unknown-key", "unknown config key '" + key + "'");
        Json value = Json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        doc[pointer(key)] = value;
    }
    return from_document(doc);
}

RunConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& assignments) {
    RunConfig cfg;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error("missing-input", "cannot open config " + file->string());
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = from_json(ss.str());
    }
    return with_overrides(cfg, assignments);
}

} // namespace cellstorm::config
