// Runs the built-in four-agent position swap and writes its artifacts to
// ./swap_out: trajectory.csv, timing.csv, manifest.json and the plot files.

#include "dcf/export.hpp"
#include "dcf/runtime.hpp"
#include "dcf/stats.hpp"

#include <cstdio>
#include <filesystem>

int main() {
  using namespace dcf;
  std::filesystem::create_directories("swap_out");
  const auto config = scenario::benchmark_position_swap();
  const auto result = runtime::run_mission(config);

  std::printf("mission: %d steps, %s, status %d\n", result.steps_executed,
              result.all_arrived ? "all agents arrived" : "agents still en route",
              static_cast<int>(result.status));

  const auto audit = scenario::audit_trajectory(config, result.trajectory);
  std::printf("safety:  min pairwise barrier %.4f, decrement failures %ld/%ld\n",
              audit.min_barrier, audit.decrement_failures, audit.decrement_checks);

  std::vector<double> seconds;
  for (const auto& row : result.timing.rows) seconds.push_back(row.seconds);
  const auto summary = stats::timing_summary(seconds);
  std::printf("timing:  median %.2f ms per solve (q1 %.2f, q3 %.2f)\n", summary.median * 1e3,
              summary.q1 * 1e3, summary.q3 * 1e3);

  scenario::write_trajectory_csv("swap_out/trajectory.csv", result.trajectory);
  scenario::write_timing_csv("swap_out/timing.csv", result.timing);
  scenario::write_manifest("swap_out/manifest.json", config,
                           static_cast<int>(result.status), result.bandwidth);
  const auto files = scenario::write_plot_data("swap_out", config, result.trajectory);
  std::printf("wrote swap_out/ (%zu plot files)\n", files.size());
  return static_cast<int>(result.status);
}
