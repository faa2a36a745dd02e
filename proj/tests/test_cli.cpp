#include <catch2/catch_amalgamated.hpp>

#include "dcf/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dcf;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: --help enumerates every config key") {
  const auto res = run({"--help"});
  REQUIRE(res.code == 0);
  for (const auto& key : scenario::config_keys())
    REQUIRE(res.out.find(key.key) != std::string::npos);
  for (const char* verb : {"run", "bench", "stats", "plot", "validate"})
    REQUIRE(res.out.find(verb) != std::string::npos);
}

TEST_CASE("cli: unknown verbs and keys are rejected") {
  REQUIRE(run({"frobnicate"}).code != 0);
  const auto res = run({"validate", "--set", "bogus.key=1"});
  REQUIRE(res.code == 4);
  REQUIRE(res.err.find("unknown config key") != std::string::npos);
}

TEST_CASE("cli: short benchmark run writes the artifacts it names") {
  const auto dir = fresh_dir("dcf_cli_run");
  const auto res = run({"run", "--benchmark", "--set", "steps=6", "--seed", "9",
                        "--log-messages", "-o", dir.string()});
  REQUIRE(res.code == 0);

  // Every artifact named on stdout exists.
  std::istringstream lines(res.out);
  std::string line;
  int named = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("wrote ", 0) == 0) {
      ++named;
      REQUIRE(std::filesystem::exists(line.substr(6)));
    }
  }
  REQUIRE(named == 4);  // trajectory, timing, manifest, messages

  // Seed and override echoed in the manifest.
  std::ifstream mf(dir / "manifest.json");
  nlohmann::json j;
  mf >> j;
  REQUIRE(j["seed"] == 9);
  REQUIRE(j["config"]["steps"] == "6");
  REQUIRE(j["config"]["links.seed"] == "9");
}

TEST_CASE("cli: exit code 2 when the iteration cap is hit") {
  const auto dir = fresh_dir("dcf_cli_cap");
  const auto res = run({"bench", "--set", "steps=2", "--set", "solver.p_max=1", "-o",
                        dir.string()});
  REQUIRE(res.code == 2);
}

TEST_CASE("cli: stats summarizes, flags the budget and is idempotent") {
  const auto dir = fresh_dir("dcf_cli_stats");
  const auto timing = dir / "timing.csv";
  {
    std::ofstream out(timing);
    out << scenario::kTimingHeader << "\n";
    for (int k = 0; k < 10; ++k)
      for (int a = 1; a <= 2; ++a)
        out << k << "," << a << "," << 0.001 * (k + a) << "," << 7 << "\n";
  }
  const auto res = run({"stats", timing.string(), "-o", dir.string()});
  REQUIRE(res.code == 0);
  REQUIRE(res.out.find("pooled") != std::string::npos);
  REQUIRE(res.out.find("budget: PASS") != std::string::npos);
  REQUIRE(std::filesystem::exists(dir / "summary.json"));
  const auto again = run({"stats", timing.string(), "-o", dir.string()});
  REQUIRE(again.out == res.out);

  // Malformed and empty inputs are rejected with a line number / nonzero exit.
  const auto bad = dir / "bad.csv";
  {
    std::ofstream out(bad);
    out << scenario::kTimingHeader << "\n1,2\n";
  }
  const auto bad_res = run({"stats", bad.string()});
  REQUIRE(bad_res.code == 1);
  REQUIRE(bad_res.err.find(":2:") != std::string::npos);

  const auto empty = dir / "empty.csv";
  { std::ofstream out(empty); }
  REQUIRE(run({"stats", empty.string()}).code != 0);
}

TEST_CASE("cli: plot emits polylines and svg from a run artifact") {
  const auto dir = fresh_dir("dcf_cli_plot");
  REQUIRE(run({"bench", "--set", "steps=4", "-o", dir.string()}).code == 0);
  const auto res =
      run({"plot", (dir / "trajectory.csv").string(), "--benchmark", "-o", dir.string()});
  REQUIRE(res.code == 0);
  REQUIRE(std::filesystem::exists(dir / "trajectories.svg"));
  for (int a = 1; a <= 4; ++a)
    REQUIRE(std::filesystem::exists(dir / ("agent_" + std::to_string(a) + ".txt")));
}

TEST_CASE("cli: validate prints derived data and rejects unsafe configs") {
  const auto res = run({"validate", "--benchmark"});
  REQUIRE(res.code == 0);
  REQUIRE(res.out.find("constraint rows per agent: 18") != std::string::npos);
  REQUIRE(res.out.find("pair 1-2") != std::string::npos);
  REQUIRE(res.out.find("config ok") != std::string::npos);
  const auto again = run({"validate", "--benchmark"});
  REQUIRE(again.out == res.out);  // deterministic

  const auto dir = fresh_dir("dcf_cli_validate");
  const auto cfg = dir / "unsafe.cfg";
  {
    std::ofstream out(cfg);
    out << "n_agents = 2\nstart.1 = 0 0\ntarget.1 = 1 0\nstart.2 = 0.1 0\ntarget.2 = -1 0\n";
  }
  const auto bad = run({"validate", "-c", cfg.string()});
  REQUIRE(bad.code == 4);
  REQUIRE(bad.err.find("agents 1 and 2") != std::string::npos);
}

TEST_CASE("cli: run without a config source is a config error") {
  const auto res = run({"run"});
  REQUIRE(res.code == 4);
  REQUIRE(res.err.find("--config FILE or --benchmark") != std::string::npos);
}
