#pragma once

#include "dcf/export.hpp"
#include "dcf/runtime.hpp"
#include "dcf/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace dcf::cli {

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw scenario::ConfigError("cannot read config file '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline std::string config_keys_help() {
  std::ostringstream out;
  out << "Config keys (file and --set):\n";
  for (const auto& k : scenario::config_keys())
    out << "  " << k.key << "  -  " << k.what << "\n";
  return out.str();
}

/// File document, then --set overrides, then --seed.
inline scenario::ScenarioConfig assemble_config(const std::string& config_path,
                                                const std::vector<std::string>& sets,
                                                const std::optional<std::uint64_t>& seed) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = scenario::parse_kv(detail::read_file(config_path));
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw scenario::ConfigError("--set expects key=value, got '" + s + "'");
    auto key = scenario::detail::trim(s.substr(0, eq));
    auto val = scenario::detail::trim(s.substr(eq + 1));
    kv[key] = val;
  }
  if (seed) kv["links.seed"] = std::to_string(*seed);
  return scenario::from_map(std::move(kv));
}

inline void print_summary(std::ostream& out, const std::string& label,
                          const stats::Summary& s) {
  using scenario::detail::fmt;
  out << label << ": median " << fmt(s.median * 1e3) << " ms, q1 " << fmt(s.q1 * 1e3)
      << " ms, q3 " << fmt(s.q3 * 1e3) << " ms, iqr " << fmt(s.iqr * 1e3) << " ms, kept "
      << s.kept << ", removed " << s.removed.size() << "\n";
}

}  // namespace detail

/// Entry point shared by the binary and the tests.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dcf - single-workstation emulation of distributed multi-robot control"};
  app.require_subcommand(1);
  app.footer(detail::config_keys_help());

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string outdir = ".";
  bool use_benchmark = false;
  bool log_messages = false;
  std::string input_file;

  auto add_config_opts = [&](CLI::App* cmd, bool with_run_opts) {
    cmd->add_option("-c,--config", config_path, "scenario config file");
    cmd->add_flag("--benchmark", use_benchmark, "use the built-in position-swap benchmark");
    cmd->add_option("--set", sets, "override a config key, key=value (repeatable)");
    cmd->add_option("--seed", seed, "override links.seed");
    if (with_run_opts) {
      cmd->add_option("-o,--out", outdir, "output directory");
      cmd->add_flag("--log-messages", log_messages, "write messages.jsonl (one line per message)");
    }
  };

  auto* cmd_run = app.add_subcommand("run", "run a mission and write its artifacts");
  add_config_opts(cmd_run, true);
  auto* cmd_bench = app.add_subcommand("bench", "run the position-swap benchmark");
  add_config_opts(cmd_bench, true);
  auto* cmd_stats = app.add_subcommand("stats", "summarize a timing.csv");
  cmd_stats->add_option("timing", input_file, "timing.csv produced by run")->required();
  cmd_stats->add_option("-o,--out", outdir, "output directory for summary.json");
  auto* cmd_plot = app.add_subcommand("plot", "emit per-agent polylines and an SVG");
  cmd_plot->add_option("trajectory", input_file, "trajectory.csv produced by run")->required();
  add_config_opts(cmd_plot, false);
  cmd_plot->add_option("-o,--out", outdir, "output directory for plot files");
  auto* cmd_validate = app.add_subcommand("validate", "check a config and print derived data");
  add_config_opts(cmd_validate, false);

  std::vector<const char*> argv;
  argv.push_back("dcf");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  namespace fs = std::filesystem;
  try {
    if (cmd_run->parsed() || cmd_bench->parsed()) {
      if (cmd_bench->parsed()) use_benchmark = true;
      if (!use_benchmark && config_path.empty())
        throw scenario::ConfigError("run: pass --config FILE or --benchmark");
      const auto c = detail::assemble_config(use_benchmark ? "" : config_path, sets, seed);

      runtime::MissionOptions opts;
      opts.log_messages = log_messages;
      const auto res = runtime::run_mission(c, opts);

      fs::create_directories(outdir);
      const auto traj_path = (fs::path(outdir) / "trajectory.csv").string();
      const auto timing_path = (fs::path(outdir) / "timing.csv").string();
      const auto manifest_path = (fs::path(outdir) / "manifest.json").string();
      scenario::write_trajectory_csv(traj_path, res.trajectory);
      scenario::write_timing_csv(timing_path, res.timing);
      scenario::write_manifest(manifest_path, c, static_cast<int>(res.status), res.bandwidth);
      out << "wrote " << traj_path << "\n";
      out << "wrote " << timing_path << "\n";
      out << "wrote " << manifest_path << "\n";
      if (log_messages) {
        const auto msg_path = (fs::path(outdir) / "messages.jsonl").string();
        scenario::write_message_log(msg_path, res.messages);
        out << "wrote " << msg_path << "\n";
      }
      out << "steps " << res.steps_executed << ", "
          << (res.all_arrived ? "all agents arrived" : "not all agents arrived") << ", status "
          << static_cast<int>(res.status) << "\n";
      return static_cast<int>(res.status);
    }

    if (cmd_stats->parsed()) {
      const auto log = scenario::read_timing_csv(input_file);
      if (log.rows.empty()) throw scenario::IoError(input_file + ": no timing records");
      std::map<int, std::vector<double>> per_agent;
      std::vector<double> pooled;
      for (const auto& r : log.rows) {
        per_agent[r.agent].push_back(r.seconds);
        pooled.push_back(r.seconds);
      }
      nlohmann::json j;
      for (const auto& [agent, secs] : per_agent) {
        const auto s = stats::timing_summary(secs);
        detail::print_summary(out, "agent " + std::to_string(agent + 1), s);
        j["agents"][std::to_string(agent + 1)] = {{"median_s", s.median},
                                                  {"q1_s", s.q1},
                                                  {"q3_s", s.q3},
                                                  {"iqr_s", s.iqr},
                                                  {"kept", s.kept},
                                                  {"removed", s.removed}};
      }
      const auto pooled_summary = stats::timing_summary(pooled);
      detail::print_summary(out, "pooled", pooled_summary);
      const bool budget_ok = pooled_summary.median < 0.2;
      out << "budget: " << (budget_ok ? "PASS" : "FAIL") << " (pooled median "
          << scenario::detail::fmt(pooled_summary.median * 1e3) << " ms vs 200 ms)\n";
      j["pooled"] = {{"median_s", pooled_summary.median},
                     {"q1_s", pooled_summary.q1},
                     {"q3_s", pooled_summary.q3},
                     {"iqr_s", pooled_summary.iqr},
                     {"kept", pooled_summary.kept},
                     {"removed", pooled_summary.removed},
                     {"budget_pass", budget_ok}};
      fs::create_directories(outdir);
      const auto summary_path = (fs::path(outdir) / "summary.json").string();
      std::ofstream js(summary_path, std::ios::binary);
      js << j.dump(2) << "\n";
      out << "wrote " << summary_path << "\n";
      return 0;
    }

    if (cmd_plot->parsed()) {
      const auto c = detail::assemble_config(use_benchmark ? "" : config_path, sets, seed);
      const auto log = scenario::read_trajectory_csv(input_file);
      const auto files = scenario::write_plot_data(outdir, c, log);
      for (const auto& f : files) out << "wrote " << f << "\n";
      return 0;
    }

    if (cmd_validate->parsed()) {
      const auto c = detail::assemble_config(use_benchmark ? "" : config_path, sets, seed);
      const auto sc = scenario::make_static(c);
      using scenario::detail::fmt;
      out << "agents: " << c.n_agents << ", horizon: " << c.horizon << ", ts: " << fmt(c.ts)
          << " s\n";
      out << "topology: " << comms::to_string(c.topology_kind) << ", edges "
          << sc.topo.edge_count << ", diameter " << sc.topo.diameter << "\n";
      const int m = (c.n_agents * (c.n_agents - 1) / 2) * c.horizon;
      out << "constraint rows per agent: " << m << "\n";
      out << "terminal weight P (from the Riccati equation):\n";
      for (int r = 0; r < 4; ++r) {
        out << "  ";
        for (int cc = 0; cc < 4; ++cc) out << fmt(sc.cost.P(r, cc)) << (cc < 3 ? " " : "\n");
      }
      out << "initial pairwise barrier values:\n";
      for (int i = 0; i < c.n_agents; ++i)
        for (int j = i + 1; j < c.n_agents; ++j)
          out << "  pair " << i + 1 << "-" << j + 1 << ": h = "
              << fmt(safety::barrier_value(c.start[i] - c.start[j], c.cbf)) << "\n";
      out << "config ok\n";
      return 0;
    }
  } catch (const scenario::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 4;
  } catch (const scenario::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 1;
  } catch (const comms::FabricTimeout& e) {
    err << "timeout: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace dcf::cli
