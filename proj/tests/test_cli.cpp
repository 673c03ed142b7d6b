// Tests for the experiment layer and the command-line tool: config parsing
// and hashing, the learn/filter/stability/bench commands' outputs and their
// byte-level determinism, and the binary's exit codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "psdf/experiment.hpp"
#include "psdf/metrics.hpp"
#include "psdf/serialize.hpp"

using namespace psdf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("psdf_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small, fast configuration: explicit anchor/sample counts skip the
// epsilon schedule.
std::string small_config(const std::string& out, const std::string& extra = "") {
  std::ostringstream j;
  j << "{\"scenario\":\"lg1d\",\"methods\":[\"psd\"],\"steps\":5,\"seeds\":[1],"
    << "\"out\":\"" << out << "\",\"n\":200,\"m\":8,\"lambda\":1e-6,\"oracle_grid\":128"
    << extra << "}";
  return j.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PSDF_CLI_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config: parsing, validation, and canonical hashing") {
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(small_config("runs/x"));
  CHECK(cfg.scenario == "lg1d");
  CHECK(cfg.steps == 5);
  CHECK(cfg.explicit_learn);
  CHECK(cfg.learn_m == 8);
  CHECK(cfg.config_hash != 0);

  // Key order and whitespace do not change the identity of a run.
  const std::string reordered =
      "{\"methods\":[\"psd\"], \"steps\":5, \"scenario\":\"lg1d\", \"seeds\":[1],"
      "\"n\":200, \"m\":8, \"lambda\":1e-6, \"oracle_grid\":128, \"out\":\"runs/x\"}";
  CHECK(ExperimentConfig::from_json_text(reordered).config_hash == cfg.config_hash);
  const std::string changed = small_config("runs/x", ",\"steps_note\":0");
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(changed), ConfigError);  // unknown key
  CHECK(ExperimentConfig::from_json_text(small_config("runs/y")).config_hash != cfg.config_hash);

  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{\"scenario\":\"nope\"}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(small_config("runs/x", ",\"steps\":0")),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(small_config("runs/x", ",\"epsilon\":1.5")),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text("{\"scenario\":\"lg1d\",\"methods\":[\"psd\",\"woo\"]}"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      "{\"scenario\":\"bimodal1d\",\"methods\":[\"kalman\"]}"),
                  ConfigError);  // kalman needs a linear-Gaussian scenario
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json at all"), ConfigError);
}

TEST_CASE("cmd_learn: model files round-trip bit-exactly") {
  const fs::path out = fresh_dir("learn");
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(small_config(out.string()));
  cmd_learn(cfg);

  for (const char* stem : {"q_seed1.model", "g_seed1.model", "prior_seed1.model"}) {
    const std::string text = read_file((out / stem).string());
    const GaussianPsdModel m = gaussian_psd_from_text(text);
    CHECK(to_text(m) == text);
    CHECK(m.order() >= 1);
  }
  const std::string report = read_file((out / "learn_report.csv").string());
  CHECK(report.rfind("# config_hash=", 0) == 0);
  const auto rows = csv_rows(report);
  REQUIRE(rows.size() == 2);  // header + one seed
  CHECK(rows[1][0] == "1");
  // Sup errors of the learned kernels are recorded as finite numbers.
  CHECK(std::isfinite(std::stod(rows[1][5])));
  CHECK(std::isfinite(std::stod(rows[1][6])));
  CHECK(fs::exists(out / "timings.csv"));
}

TEST_CASE("cmd_filter: traces carry finite oracle distances and re-run byte-identical") {
  const fs::path out = fresh_dir("filter");
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(
      small_config(out.string(), ",\"methods\":[\"psd\",\"grid\"]"));
  cmd_filter(cfg);

  const std::string psd_first = read_file((out / "filter_psd_seed1.csv").string());
  const std::string grid_first = read_file((out / "filter_grid_seed1.csv").string());
  const std::string traj = read_file((out / "trajectory_seed1.csv").string());
  CHECK(psd_first.rfind("# config_hash=", 0) == 0);
  CHECK(traj.rfind("# config_hash=", 0) == 0);
  CHECK(traj.find("\nt,") != std::string::npos);

  const auto rows = csv_rows(psd_first);
  REQUIRE(rows.size() == 1 + 5);  // header + steps
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][1] == "psd");
    const double z = std::stod(rows[i][3]);
    const double tv = std::stod(rows[i][4]);
    CHECK(z > 0.0);
    CHECK(std::isfinite(tv));
    CHECK(tv >= 0.0);
    CHECK(tv <= 2.0);
  }

  cmd_filter(cfg);  // same config, same directory: identical artifacts
  CHECK(read_file((out / "filter_psd_seed1.csv").string()) == psd_first);
  CHECK(read_file((out / "filter_grid_seed1.csv").string()) == grid_first);
  CHECK(read_file((out / "trajectory_seed1.csv").string()) == traj);
}

TEST_CASE("cmd_filter: posterior snapshots are written on the requested stride") {
  const fs::path out = fresh_dir("snap");
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(
      small_config(out.string(), ",\"snapshot_stride\":2"));
  cmd_filter(cfg);
  CHECK(fs::exists(out / "filter_psd_seed1_step2.model"));
  CHECK(fs::exists(out / "filter_psd_seed1_step4.model"));
  CHECK(!fs::exists(out / "filter_psd_seed1_step3.model"));
  const GaussianPsdModel snap =
      gaussian_psd_from_text(read_file((out / "filter_psd_seed1_step2.model").string()));
  CHECK(snap.order() >= 1);
}

TEST_CASE("cmd_stability: identical initializations stay identical; summary is consistent") {
  const fs::path out = fresh_dir("stab");
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(
      small_config(out.string(), ",\"stability_inits\":[0.4,0.4],\"steps\":6"));
  cmd_stability(cfg);

  const auto rows = csv_rows(read_file((out / "stability_seed1.csv").string()));
  REQUIRE(rows.size() == 1 + 6);
  for (size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][1]) <= 1e-10);

  const auto sum = csv_rows(read_file((out / "stability_summary.csv").string()));
  REQUIRE(sum.size() == 2);
  const double sigma = std::stod(sum[1][1]);
  const double bound = std::stod(sum[1][2]);
  const double slack = std::stod(sum[1][4]);
  CHECK(sigma > 0.0);
  CHECK(sigma <= 1.0);
  CHECK(bound == doctest::Approx(birkhoff_bound(sigma)).epsilon(1e-12));
  CHECK(slack <= 1e-9);
}

TEST_CASE("cmd_bench: summary rows per method and deterministic output") {
  const fs::path out = fresh_dir("bench");
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(
      small_config(out.string(), ",\"methods\":[\"psd\",\"grid\",\"kalman\"]"));
  cmd_bench(cfg);

  const std::string first = read_file((out / "bench.csv").string());
  const auto rows = csv_rows(first);
  REQUIRE(rows.size() == 1 + 3);  // header + one row per method
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][3]) >= 0.0);  // max_tv
    CHECK(std::isfinite(std::stod(rows[i][4])));
    CHECK(std::stod(rows[i][5]) > 0.0);  // mean_z
  }
  CHECK(fs::exists(out / "timings.csv"));
  cmd_bench(cfg);
  CHECK(read_file((out / "bench.csv").string()) == first);
}

TEST_CASE("cli binary: exit codes distinguish success from config errors") {
  const fs::path out = fresh_dir("exit");
  const fs::path good = out / "good.json";
  const fs::path bad = out / "bad.json";
  write_file(good.string(), small_config((out / "run").string()));
  write_file(bad.string(), "{\"scenario\":\"not-a-scenario\"}");

  CHECK(run_cli("filter --config " + good.string()) == 0);
  CHECK(fs::exists(out / "run" / "filter_psd_seed1.csv"));
  CHECK(run_cli("filter --config " + bad.string()) == 2);
  CHECK(run_cli("filter --config " + (out / "missing.json").string()) == 2);
  // Command-line overrides land in the effective config and its hash.
  CHECK(run_cli("filter --config " + good.string() + " --out " + (out / "run2").string() +
                " --seeds 1") == 0);
  CHECK(fs::exists(out / "run2" / "filter_psd_seed1.csv"));
}
