#include <doctest.h>

#include <functional>

#include <json.hpp>

#include "cellstorm/config.hpp"
#include "support.hpp"

using namespace cellstorm;
using config::RunConfig;

namespace {

std::string error_code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("defaults serialise and parse back unchanged") {
    RunConfig a;
    a.seed = 42;
    a.camera.gain = 0.5;
    a.codec.qp_override = 20;
    a.codec.grid = {1, 3};
    a.simulation.scene.structure = sim::Structure::line_set;
    a.simulation.psf.truncation_radius_px = 3.5;
    a.eval.blur_nm = 12.0;
    const auto text = config::to_json(a);
    const auto b = config::from_json(text);
    CHECK(config::to_json(b) == text);
    CHECK(b.seed == 42);
    CHECK(b.codec.qp_override == 20);
    CHECK(b.codec.grid.dy == 3);
    CHECK(b.simulation.scene.structure == sim::Structure::line_set);

    const auto doc = nlohmann::json::parse(text);
    for (const char* group : {"camera", "codec", "simulation", "localizer", "nn", "eval", "dataset"})
        CHECK(doc.contains(group));
}

TEST_CASE("partial documents fill in defaults") {
    const auto c = config::from_json(R"({"camera":{"gain":0.9},"seed":3})");
    CHECK(c.camera.gain == 0.9);
    CHECK(c.camera.offset == RunConfig{}.camera.offset);
    CHECK(c.seed == 3);
    CHECK(config::from_json("{}").localizer.threshold_k == RunConfig{}.localizer.threshold_k);
}

TEST_CASE("unknown keys and wrong types are rejected") {
    CHECK(error_code_of([] { config::from_json(R"({"camera":{"gian":0.9}})"); }) == "config-unknown-key");
    CHECK(error_code_of([] { config::from_json(R"({"extra":1})"); }) == "config-unknown-key");
    CHECK(error_code_of([] { config::from_json(R"({"camera":{"gain":"high"}})"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json(R"({"camera":3})"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json(R"({"codec":{"quality":70.5}})"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json(R"({"codec":{"grid":[1]}})"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json(R"({"simulation":{"structure":"spiral"}})"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json("[1,2]"); }) == "config-type");
    CHECK(error_code_of([] { config::from_json("{not json"); }) == "config-type");
}

TEST_CASE("dotted overrides") {
    const auto c = config::with_overrides(RunConfig{}, {"camera.gain=0.7", "simulation.structure=line-set",
                                                        "codec.qp=null", "codec.grid=[2,1]", "eval.one_to_one=true"});
    CHECK(c.camera.gain == 0.7);
    CHECK(c.simulation.scene.structure == sim::Structure::line_set);
    CHECK_FALSE(c.codec.qp_override.has_value());
    CHECK(c.codec.grid.dx == 2);
    CHECK(c.eval.one_to_one);
    CHECK(error_code_of([] { config::with_overrides(RunConfig{}, {"camera.nope=1"}); }) == "config-unknown-key");
    CHECK(error_code_of([] { config::with_overrides(RunConfig{}, {"camera.gain"}); }) == "usage");
    CHECK(error_code_of([] { config::with_overrides(RunConfig{}, {"camera.gain=fast"}); }) == "config-type");
}

TEST_CASE("files, manifests and validation") {
    testing::TempDir dir("config");
    testing::spit(dir / "c.json", R"({"localizer":{"roi_radius":4}})");
    const auto c = config::load(dir / "c.json", {"seed=9"});
    CHECK(c.localizer.roi_radius == 4);
    CHECK(c.seed == 9);
    CHECK(error_code_of([&] { config::load(dir / "missing.json", {}); }) == "missing-input");

    nlohmann::json manifest;
    manifest["tool"] = "cellstorm";
    manifest["command"] = "simulate";
    manifest["config"] = nlohmann::json::parse(config::to_json(c));
    CHECK(config::from_json(manifest.dump()).localizer.roi_radius == 4);

    RunConfig bad;
    bad.dataset.quality_min = 95;
    CHECK_THROWS_AS(bad.validate(), Error);
    RunConfig bad_frames;
    bad_frames.simulation.frames = 0;
    CHECK_THROWS_AS(bad_frames.validate(), Error);
    CHECK_NOTHROW(RunConfig{}.validate());
}

}
