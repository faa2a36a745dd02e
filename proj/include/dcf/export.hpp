#pragma once

#include "dcf/comms.hpp"
#include "dcf/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dcf::scenario {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream in(line);
  while (std::getline(in, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace detail

inline constexpr const char* kTrajectoryHeader =
    "step,agent,px,py,vx,vy,ax,ay,min_barrier,inner_iters,converged";
inline constexpr const char* kTimingHeader = "step,agent,seconds,inner_iters";

inline void write_trajectory_csv(const std::string& path, const TrajectoryLog& log) {
  auto out = detail::open_out(path);
  out << kTrajectoryHeader << "\n";
  for (const auto& r : log.records) {
    using detail::fmt;
    out << r.step << "," << r.agent + 1 << "," << fmt(r.p.x()) << "," << fmt(r.p.y()) << ","
        << fmt(r.v.x()) << "," << fmt(r.v.y()) << "," << fmt(r.a.x()) << "," << fmt(r.a.y())
        << "," << fmt(r.min_barrier) << "," << r.inner_iters << "," << (r.converged ? 1 : 0)
        << "\n";
  }
}

inline TrajectoryLog read_trajectory_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTrajectoryHeader)
    throw IoError(path + ":1: expected header '" + std::string(kTrajectoryHeader) + "'");
  TrajectoryLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 11)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 11 fields, got " +
                    std::to_string(f.size()));
    try {
      TrajRecord r;
      r.step = std::stoi(f[0]);
      r.agent = std::stoi(f[1]) - 1;
      r.p = {std::stod(f[2]), std::stod(f[3])};
      r.v = {std::stod(f[4]), std::stod(f[5])};
      r.a = {std::stod(f[6]), std::stod(f[7])};
      r.min_barrier = std::stod(f[8]);
      r.inner_iters = std::stoi(f[9]);
      r.converged = std::stoi(f[10]) != 0;
      log.records.push_back(r);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed record");
    }
  }
  return log;
}

inline void write_timing_csv(const std::string& path, const TimingLog& log) {
  auto out = detail::open_out(path);
  out << kTimingHeader << "\n";
  for (const auto& r : log.rows)
    out << r.step << "," << r.agent + 1 << "," << detail::fmt(r.seconds) << "," << r.inner_iters
        << "\n";
}

inline TimingLog read_timing_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTimingHeader)
    throw IoError(path + ":1: expected header '" + std::string(kTimingHeader) + "'");
  TimingLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 4)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                    std::to_string(f.size()));
    try {
      StepTiming r;
      r.step = std::stoi(f[0]);
      r.agent = std::stoi(f[1]) - 1;
      r.seconds = std::stod(f[2]);
      r.inner_iters = std::stoi(f[3]);
      log.rows.push_back(r);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed record");
    }
  }
  return log;
}

/// Run manifest: full config echo, seed, exit status and per-link traffic.
inline void write_manifest(const std::string& path, const ScenarioConfig& c, int exit_status,
                           const std::map<std::pair<int, int>, comms::LinkStats>& bandwidth) {
  nlohmann::json j;
  j["version"] = "0.1.0";
  j["seed"] = c.seed;
  j["exit_status"] = exit_status;
  j["config_text"] = to_text(c);
  nlohmann::json cfg;
  for (const auto& [k, v] : parse_kv(to_text(c))) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::json bw = nlohmann::json::array();
  for (const auto& [link, st] : bandwidth) {
    bw.push_back({{"from", link.first + 1},
                  {"to", link.second + 1},
                  {"messages_attempted", st.attempted},
                  {"messages_delivered", st.delivered},
                  {"bytes_delivered", st.bytes_delivered}});
  }
  j["bandwidth"] = bw;
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

/// JSON lines, one per attempted message.
inline void write_message_log(const std::string& path,
                              const std::vector<comms::MessageEvent>& events) {
  auto out = detail::open_out(path);
  for (const auto& ev : events) {
    nlohmann::json j{{"round", ev.round},
                     {"from", ev.from + 1},
                     {"to", ev.to + 1},
                     {"delivered", ev.delivered},
                     {"bytes", ev.bytes}};
    out << j.dump() << "\n";
  }
}

/// Per-agent polyline files (x y per line) plus a static SVG of the plane:
/// trajectories, square start markers, end circles and the norm-1 safety
/// diamond around each endpoint.
inline std::vector<std::string> write_plot_data(const std::string& outdir,
                                                const ScenarioConfig& c,
                                                const TrajectoryLog& log) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<std::string> files;
  const int n = c.n_agents;
  std::vector<std::vector<model::Vec2>> paths(n);
  for (const auto& r : log.records) paths[r.agent].push_back(r.p);

  for (int a = 0; a < n; ++a) {
    const std::string path = (fs::path(outdir) / ("agent_" + std::to_string(a + 1) + ".txt")).string();
    auto out = detail::open_out(path);
    for (const auto& p : paths[a]) out << detail::fmt(p.x()) << " " << detail::fmt(p.y()) << "\n";
    files.push_back(path);
  }

  // Bounding box over everything drawn.
  double lo_x = -1, hi_x = 1, lo_y = -1, hi_y = 1;
  auto grow = [&](const model::Vec2& p, double mx, double my) {
    lo_x = std::min(lo_x, p.x() - mx);
    hi_x = std::max(hi_x, p.x() + mx);
    lo_y = std::min(lo_y, p.y() - my);
    hi_y = std::max(hi_y, p.y() + my);
  };
  for (int a = 0; a < n; ++a) {
    for (const auto& p : paths[a]) grow(p, 0.1, 0.1);
    if (!paths[a].empty()) grow(paths[a].back(), c.cbf.r1, c.cbf.r2);
  }

  const double W = 640, H = 640;
  const double span_x = hi_x - lo_x, span_y = hi_y - lo_y;
  auto X = [&](double x) { return (x - lo_x) / span_x * (W - 40) + 20; };
  auto Y = [&](double y) { return H - ((y - lo_y) / span_y * (H - 40) + 20); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  const std::string svg_path = (fs::path(outdir) / "trajectories.svg").string();
  auto svg = detail::open_out(svg_path);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int a = 0; a < n; ++a) {
    if (paths[a].empty()) continue;
    const char* color = palette[a % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : paths[a]) svg << X(p.x()) << "," << Y(p.y()) << " ";
    svg << "\"/>\n";
    const auto& s = paths[a].front();
    const auto& e = paths[a].back();
    svg << "<rect x=\"" << X(s.x()) - 4 << "\" y=\"" << Y(s.y()) - 4
        << "\" width=\"8\" height=\"8\" fill=\"" << color << "\"/>\n";
    svg << "<circle cx=\"" << X(e.x()) << "\" cy=\"" << Y(e.y())
        << "\" r=\"5\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    // Norm-1 safety diamond around the endpoint.
    svg << "<polygon fill=\"none\" stroke=\"" << color
        << "\" stroke-dasharray=\"4 3\" stroke-width=\"1\" points=\""
        << X(e.x() + c.cbf.r1) << "," << Y(e.y()) << " " << X(e.x()) << "," << Y(e.y() + c.cbf.r2)
        << " " << X(e.x() - c.cbf.r1) << "," << Y(e.y()) << " " << X(e.x()) << ","
        << Y(e.y() - c.cbf.r2) << "\"/>\n";
  }
  svg << "</svg>\n";
  files.push_back(svg_path);
  return files;
}

}  // namespace dcf::scenario
