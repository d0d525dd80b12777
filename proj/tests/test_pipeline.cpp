#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "netdyn/common.hpp"
#include "netdyn/pipeline.hpp"

using namespace netdyn;
namespace fs = std::filesystem;

namespace {

std::string small_epi_config() {
    // epidemic at desk scale with the exact sparse library; fast and accurate
    return R"({
      "seed": 11,
      "topology": {"type": "er", "n": 10, "p": 0.3},
      "dynamics": {"model": "epi", "t_end": 2.0},
      "preprocess": {"s_steps": 80, "select": false},
      "decoupler": {"hidden": 24, "epochs": 250, "patience": 250, "lr": 0.006},
      "symreg": {
        "backend": "sparse",
        "self_library": ["1", "x1", "x1*x1"],
        "inter_library": ["x2", "x1*x2", "x1"],
        "threshold": 0.05,
        "n_raw": 2000, "k": 128
      },
      "evaluation": {
        "library_self": ["1", "x1", "x1*x1"],
        "library_inter": ["x2", "x1*x2", "x1"],
        "true_self_coeffs": [0, -1, 0],
        "true_inter_coeffs": [1, -1, 0]
      },
      "termination": {"max_rounds": 1, "r2_min": 0.95}
    })";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fresh_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("netdyn_pipe_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("strict config validation rejects unknown keys") {
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"sede": 1})"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"topology": {"type": "er", "n": 5,
        "p": 0.1, "extra": true}})"),
                    ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text("not json"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"dynamics": {"model": "warp"}})"),
                    ConfigError);
}

TEST_CASE("missing topology file fails before any computation") {
    auto cfg_text = R"({"topology": {"type": "file", "path": "/nonexistent/net.txt"}})";
    CHECK_THROWS_AS(PipelineConfig::from_json_text(cfg_text), ConfigError);
}

TEST_CASE("max_rounds zero stops after the simulation artifacts") {
    auto cfg = PipelineConfig::from_json_text(small_epi_config());
    cfg.termination.max_rounds = 0;
    const auto dir = fresh_dir("rounds0");
    run_pipeline(cfg, dir);
    CHECK(fs::exists(fs::path(dir) / "trajectory.csv"));
    CHECK(fs::exists(fs::path(dir) / "topology.txt"));
    CHECK(!fs::exists(fs::path(dir) / "decoupler.json"));
    CHECK(!fs::exists(fs::path(dir) / "discovered.json"));
    CHECK(fs::exists(fs::path(dir) / "report.json"));  // partial report still emitted
}

TEST_CASE("end-to-end epidemic run discovers the generating form") {
    auto cfg = PipelineConfig::from_json_text(small_epi_config());
    const auto dir = fresh_dir("epi");
    auto result = run_pipeline(cfg, dir);
    CHECK(result.metrics.r2 > 0.95);
    REQUIRE(result.metrics.recall.has_value());
    CHECK(*result.metrics.recall == 1.0);
    REQUIRE(result.metrics.precision.has_value());
    CHECK(*result.metrics.precision == 1.0);
    for (const char* artifact :
         {"topology.txt", "trajectory.csv", "trajectory_meta.json", "interval.json",
          "training.csv", "decoupler.json", "train_log.csv", "discovered.json",
          "prediction.csv", "metrics.json", "ned.csv", "comparison.csv", "report.json",
          "report.txt"})
        CHECK(fs::exists(fs::path(dir) / artifact));
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
    auto cfg = PipelineConfig::from_json_text(small_epi_config());
    const auto dir1 = fresh_dir("det1");
    const auto dir2 = fresh_dir("det2");
    run_pipeline(cfg, dir1);
    run_pipeline(cfg, dir2);
    for (const char* artifact : {"trajectory.csv", "training.csv", "decoupler.json",
                                 "discovered.json", "metrics.json", "prediction.csv"}) {
        CHECK(slurp(fs::path(dir1) / artifact) == slurp(fs::path(dir2) / artifact));
    }
}

TEST_CASE("resume reuses artifacts and reproduces the uninterrupted run") {
    auto cfg = PipelineConfig::from_json_text(small_epi_config());
    const auto full_dir = fresh_dir("full");
    run_pipeline(cfg, full_dir);

    const auto staged_dir = fresh_dir("staged");
    run_pipeline(cfg, staged_dir, false, Stage::Train);   // stop after training
    run_pipeline(cfg, staged_dir, true, Stage::Report);   // resume to the end
    for (const char* artifact :
         {"decoupler.json", "discovered.json", "metrics.json", "prediction.csv"})
        CHECK(slurp(fs::path(full_dir) / artifact) == slurp(fs::path(staged_dir) / artifact));
}

TEST_CASE("report emission is idempotent and tolerates empty directories") {
    const auto dir = fresh_dir("empty");
    emit_report(dir);
    CHECK(fs::exists(fs::path(dir) / "report.json"));
    auto first = slurp(fs::path(dir) / "report.json");
    CHECK(first.find("missing_artifacts") != std::string::npos);
    CHECK(first.find("trajectory_meta.json") != std::string::npos);
    emit_report(dir);
    CHECK(slurp(fs::path(dir) / "report.json") == first);
}

TEST_CASE("seed splitting is stable and collision-free across stages") {
    std::set<uint64_t> seen;
    for (const char* tag : {"topology", "simulate", "noise", "eta", "interval", "split"})
        seen.insert(split_seed(42, tag));
    CHECK(seen.size() == 6);
    CHECK(split_seed(42, "simulate") == split_seed(42, "simulate"));
    CHECK(split_seed(42, "simulate") != split_seed(43, "simulate"));
}

}  // TEST_SUITE
