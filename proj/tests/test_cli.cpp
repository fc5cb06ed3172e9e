#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "cellstorm/cli.hpp"
#include "cellstorm/codec.hpp"
#include "cellstorm/io.hpp"
#include "cellstorm/localizer.hpp"
#include "cellstorm/sim.hpp"
#include "support.hpp"

using namespace cellstorm;
using testing::TempDir;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome cli_run(std::vector<std::string> args) {
    args.insert(args.begin(), "cellstorm");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

// Small, fast scene shared by the pipeline tests.
const std::vector<std::string> kSmall{"--set", "simulation.fov_um=1.6", "simulation.frames=20", "simulation.p_on=0.1",
                                      "--threads", "2"};

std::vector<std::string> with_small(std::vector<std::string> args) {
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    return args;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate is reproducible byte for byte") {
    TempDir dir("cli");
    const auto out = (dir / "a.cstk").string();
    REQUIRE(cli_run(with_small({"simulate", "--seed", "7", "--out", out})).code == 0);
    const auto stack1 = testing::slurp(out), gt1 = testing::slurp(dir / "a_gt.csv"),
               man1 = testing::slurp(dir / "a.manifest.json");
    REQUIRE(cli_run(with_small({"simulate", "--seed", "7", "--out", out})).code == 0);
    CHECK(testing::slurp(out) == stack1);
    CHECK(testing::slurp(dir / "a_gt.csv") == gt1);
    CHECK(testing::slurp(dir / "a.manifest.json") == man1);
    REQUIRE(cli_run(with_small({"simulate", "--seed", "8", "--out", out})).code == 0);
    CHECK(testing::slurp(out) != stack1);

    const auto m = nlohmann::json::parse(man1);
    CHECK(m["command"] == "simulate");
    CHECK(m["seed"] == 7);
    CHECK(m["outputs"].size() == 2);
    CHECK(m["config"]["simulation"]["fov_um"] == 1.6);
    CHECK(man1.find("time") == std::string::npos);
}

TEST_CASE("usage errors and exit codes") {
    TempDir dir("cli");
    const auto r1 = cli_run({"infer", "--in", "x.cstk", "--out", "y.csv"});
    CHECK(r1.code == 2);
    CHECK(count_lines(r1.err) == 1);
    CHECK(r1.err.rfind("error: code=usage message=", 0) == 0);
    CHECK(r1.err.find("--weights") != std::string::npos);

    CHECK(cli_run({"simulate", "--out", "a.cstk", "--bogus"}).code == 2);
    CHECK(cli_run({"nonsense"}).code == 2);
    CHECK(cli_run({}).code == 2);
    CHECK(cli_run({"compress", "--in", "a", "--out", "b", "--grid-offset", "1;2"}).code == 2);

    const auto missing = cli_run({"localize", "--in", (dir / "none.cstk").string(), "--out", (dir / "t.csv").string()});
    CHECK(missing.code == 3);
    CHECK(missing.err.rfind("error: code=missing-input", 0) == 0);
    CHECK(count_lines(missing.err) == 1);

    testing::spit(dir / "bad.json", R"({"camera":{"gain":"fast"}})");
    const auto cfg = cli_run({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "a.cstk").string()});
    CHECK(cfg.code == 4);
    CHECK(cfg.err.rfind("error: code=config-type", 0) == 0);
    CHECK(cli_run({"simulate", "--set", "camera.nope=1", "--out", (dir / "a.cstk").string()}).code == 4);
    CHECK(cli_run({"simulate", "--set", "camera.gain=-1", "--out", (dir / "a.cstk").string()}).code == 4);

    testing::spit(dir / "junk.cstk", "not a stack at all");
    const auto junk = cli_run({"localize", "--in", (dir / "junk.cstk").string(), "--out", (dir / "t.csv").string()});
    CHECK(junk.code == 5);
    CHECK(count_lines(junk.err) == 1);

    CHECK(cli_run({"--help"}).code == 0);
}

TEST_CASE("file stages equal in-process composition") {
    TempDir dir("cli");
    const auto raw = (dir / "raw.cstk").string(), coded = (dir / "coded.cstk").string(),
               table = (dir / "t.csv").string();
    REQUIRE(cli_run(with_small({"simulate", "--seed", "3", "--out", raw})).code == 0);
    REQUIRE(cli_run(with_small({"compress", "--seed", "3", "--quality", "70", "--grid-offset", "random", "--in", raw,
                                "--out", coded}))
                .code == 0);
    REQUIRE(cli_run(with_small({"localize", "--in", coded, "--out", table})).code == 0);

    sim::SimScene scene;
    scene.fov_um = 1.6;
    sim::BlinkModel blink;
    blink.p_on = 0.1;
    const camera::CameraModel cam;
    const auto s = sim::simulate_stack(scene, blink, sim::PsfModel{}, cam, std::nullopt, 20, 3);
    codec::CodecConfig cc;
    cc.quality = 70;
    cc.random_grid = true;
    const auto c = codec::transcode_stack(s.stack, cc, 3);
    const auto t = localizer::localize_stack(c, localizer::LocalizerConfig{}, cam);

    CHECK(io::read_stack(raw).data == s.stack.data);
    auto gt = s.ground_truth;
    for (auto& e : gt) e.id.reset();  // site ids are not part of the CSV
    CHECK(io::read_emitters(dir / "raw_gt.csv") == gt);
    CHECK(io::read_stack(coded).data == c.data);
    CHECK(testing::slurp(table) == io::table_to_csv(t));
    CHECK(!t.empty());

    // One-pass simulate with the codec matches the two-stage file pipeline.
    const auto fused = (dir / "fused.cstk").string();
    REQUIRE(cli_run(with_small({"simulate", "--seed", "3", "--quality", "70", "--set", "codec.random_grid=true",
                                "--out", fused}))
                .code == 0);
    CHECK(io::read_stack(fused).data == c.data);
}

TEST_CASE("a manifest regenerates its run") {
    TempDir dir("cli");
    const auto a = (dir / "a.cstk").string(), b = (dir / "b.cstk").string();
    REQUIRE(cli_run(with_small({"simulate", "--seed", "11", "--set", "camera.gain=0.8", "--out", a})).code == 0);
    REQUIRE(cli_run({"simulate", "--config", (dir / "a.manifest.json").string(), "--out", b, "--threads", "1"}).code == 0);
    CHECK(testing::slurp(a) == testing::slurp(b));
}

TEST_CASE("eval, frc, render and dataset commands") {
    TempDir dir("cli");
    const auto stack = (dir / "s.cstk").string(), table = (dir / "t.csv").string();
    REQUIRE(cli_run({"simulate", "--seed", "2", "--out", stack, "--set", "simulation.fov_um=3.2",
                     "simulation.frames=100", "simulation.p_on=0.1"})
                .code == 0);
    REQUIRE(cli_run({"localize", "--in", stack, "--out", table}).code == 0);

    const auto ev = cli_run({"eval", "--table", table, "--gt", (dir / "s_gt.csv").string(), "--out",
                             (dir / "report.json").string()});
    REQUIRE(ev.code == 0);
    const auto rep = nlohmann::json::parse(testing::slurp(dir / "report.json"));
    CHECK(rep["matched_count"].get<long>() > 0);
    CHECK(std::filesystem::exists(dir / "report.csv"));

    const auto fr = cli_run({"frc", "--table", table, "--out", (dir / "frc.json").string(), "--field-nm", "3200"});
    CHECK(fr.code == 0);
    CHECK(std::filesystem::exists(dir / "frc.csv"));

    REQUIRE(cli_run({"render", "--table", table, "--stack", stack, "--out", (dir / "sr.pgm").string()}).code == 0);
    CHECK(testing::slurp(dir / "sr.pgm").rfind("P5\n320 320\n65535\n", 0) == 0);
    REQUIRE(cli_run({"render", "--widefield", stack, "--out", (dir / "wf.pgm").string()}).code == 0);
    CHECK(testing::slurp(dir / "wf.pgm").rfind("P5\n32 32\n", 0) == 0);

    const auto ds = (dir / "ds").string();
    REQUIRE(cli_run({"make-dataset", "--out", ds, "--frames", "4", "--stack", stack, "--table", table, "--set",
                     "simulation.fov_um=3.2", "--factor", "2"})
                .code == 0);
    CHECK(io::read_stack(dir / "ds/x.cstk").n_frames == 8);
    CHECK(std::filesystem::exists(dir / "ds/manifest.json"));

    const auto inf = cli_run({"infer", "--in", stack, "--weights", testing::fixture("unet_tiny").string(), "--out",
                              (dir / "nn.csv").string(), "--factor", "2"});
    CHECK(inf.code == 0);
    CHECK(std::filesystem::exists(dir / "nn.manifest.json"));
}

TEST_CASE("sweep writes the full grid") {
    TempDir dir("cli");
    const auto r = cli_run({"sweep", "--out-dir", (dir / "sw").string(), "--frames", "10", "--set",
                            "simulation.fov_um=1.6", "--threads", "2"});
    REQUIRE(r.code == 0);
    const auto csv = testing::slurp(dir / "sw/sweep.csv");
    CHECK(count_lines(csv) == 1 + 16);
    const auto plot = nlohmann::json::parse(testing::slurp(dir / "sw/sweep_plot.json"));
    CHECK(plot["series"].size() == 4);
    CHECK(std::filesystem::exists(dir / "sw/manifest.json"));
}

TEST_CASE("installed binary reports exit codes") {
    const std::string bin = CELLSTORM_CLI_PATH;
    const int ok = std::system((bin + " --version > /dev/null").c_str());
    CHECK(WEXITSTATUS(ok) == 0);
    const int usage = std::system((bin + " infer --in a --out b 2> /dev/null").c_str());
    CHECK(WEXITSTATUS(usage) == 2);
}

}
