#pragma once

#include "dcf/comms.hpp"
#include "dcf/game.hpp"
#include "dcf/model.hpp"
#include "dcf/safety.hpp"
#include "dcf/solver.hpp"

#include <charconv>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcf::scenario {

using model::Vec2;
using model::Vec4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full experiment description. The defaults are the four-agent position
/// swap: agents start on the axis points of a unit diamond and trade places
/// through the middle while a fleet term holds the centroid at the origin.
struct ScenarioConfig {
  int n_agents = 4;
  double ts = 0.2;
  int horizon = 3;
  int steps = 150;
  std::vector<Vec2> start = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  std::vector<Vec2> target = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};
  Vec2 po = Vec2::Zero();
  double pa = 1.0;
  Vec4 q_diag = Vec4(5, 5, 5, 5);
  Vec2 r_diag = Vec2(2, 2);
  double beta = 1.5;
  safety::CbfParams cbf{0.5, 0.25, 0.1};
  double a_max = 2.0;
  solver::SolverParams solver;
  double solver_margin = 1e-3;  // constraint tightening absorbing solver tolerance
  comms::TopologyKind topology_kind = comms::TopologyKind::fully_connected;
  int hub = 0;                              // star center, 0-based internally
  std::vector<std::pair<int, int>> edges;   // mesh adjacency, 0-based
  int link_delay = 0;
  double link_drop = 0.0;
  std::uint64_t seed = 1;
  double arrival_pos_tol = 0.05;
  double arrival_vel_tol = 0.05;
  double barrier_timeout = 30.0;
};

struct ConfigKey {
  const char* key;
  const char* what;
};

/// Every accepted configuration key. `start.<i>` / `target.<i>` take one
/// 1-based index per agent.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"n_agents", "number of agents"},
      {"ts", "sample time [s]"},
      {"horizon", "prediction horizon H [steps]"},
      {"steps", "maximum mission steps"},
      {"start.<i>", "initial position of agent i, \"x y\" [m]"},
      {"target.<i>", "target position of agent i, \"x y\" [m]"},
      {"po", "common fleet target, \"x y\" [m]"},
      {"pa", "fleet (centroid) weight"},
      {"cost.q", "running state weight diagonal, 4 values"},
      {"cost.r", "running input weight diagonal, 2 values"},
      {"cost.beta", "terminal weight scale"},
      {"cbf.r1", "unsafe radius along x [m]"},
      {"cbf.r2", "unsafe radius along y [m]"},
      {"cbf.gamma", "barrier decrement rate, in (0, 1]"},
      {"a_max", "per-axis acceleration bound [m/s^2]"},
      {"solver.alpha_p", "primal step size"},
      {"solver.alpha_d", "dual step size"},
      {"solver.eps", "stopping threshold"},
      {"solver.p_max", "inner-iteration cap"},
      {"solver.warm_start", "shift previous solution (true/false)"},
      {"solver.margin", "constraint tightening absorbing solver tolerance"},
      {"topology.kind", "fully_connected | ring | star | mesh"},
      {"topology.hub", "star hub agent, 1-based"},
      {"topology.edges", "mesh edge list, e.g. \"1-2,2-3,3-1\""},
      {"links.delay", "link delay [exchange rounds]"},
      {"links.drop_prob", "per-message drop probability"},
      {"links.seed", "seed for all emulated randomness"},
      {"arrival.pos_tol", "arrival position tolerance [m]"},
      {"arrival.vel_tol", "arrival velocity tolerance [m/s]"},
      {"runtime.barrier_timeout", "rendezvous timeout [s]"},
  };
  return keys;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("invalid value for key '" + key + "': '" + v + "' is not a number");
  }
}

inline long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("invalid value for key '" + key + "': '" + v + "' is not an integer");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("invalid value for key '" + key + "': expected true/false");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& v,
                                         std::size_t count) {
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(key, tok));
  if (out.size() != count)
    throw ConfigError("invalid value for key '" + key + "': expected " +
                      std::to_string(count) + " numbers");
  return out;
}

inline Vec2 parse_vec2(const std::string& key, const std::string& v) {
  const auto d = parse_doubles(key, v, 2);
  return Vec2(d[0], d[1]);
}

}  // namespace detail

/// Parses the flat key=value document format. '#' starts a comment; keys may
/// not repeat.
inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

inline void validate(const ScenarioConfig& c);

/// Builds a config from parsed keys, applying the benchmark defaults for
/// everything absent, then validates.
inline ScenarioConfig from_map(std::map<std::string, std::string> kv) {
  using namespace detail;
  ScenarioConfig c;

  auto take = [&kv](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("n_agents")) c.n_agents = static_cast<int>(parse_int("n_agents", *v));
  if (auto v = take("ts")) c.ts = parse_double("ts", *v);
  if (auto v = take("horizon")) c.horizon = static_cast<int>(parse_int("horizon", *v));
  if (auto v = take("steps")) c.steps = static_cast<int>(parse_int("steps", *v));
  if (auto v = take("po")) c.po = parse_vec2("po", *v);
  if (auto v = take("pa")) c.pa = parse_double("pa", *v);
  if (auto v = take("cost.q")) {
    const auto d = parse_doubles("cost.q", *v, 4);
    c.q_diag = Vec4(d[0], d[1], d[2], d[3]);
  }
  if (auto v = take("cost.r")) {
    const auto d = parse_doubles("cost.r", *v, 2);
    c.r_diag = Vec2(d[0], d[1]);
  }
  if (auto v = take("cost.beta")) c.beta = parse_double("cost.beta", *v);
  if (auto v = take("cbf.r1")) c.cbf.r1 = parse_double("cbf.r1", *v);
  if (auto v = take("cbf.r2")) c.cbf.r2 = parse_double("cbf.r2", *v);
  if (auto v = take("cbf.gamma")) c.cbf.gamma = parse_double("cbf.gamma", *v);
  if (auto v = take("a_max")) c.a_max = parse_double("a_max", *v);
  if (auto v = take("solver.alpha_p")) c.solver.alpha_p = parse_double("solver.alpha_p", *v);
  if (auto v = take("solver.alpha_d")) c.solver.alpha_d = parse_double("solver.alpha_d", *v);
  if (auto v = take("solver.eps")) c.solver.eps = parse_double("solver.eps", *v);
  if (auto v = take("solver.p_max")) c.solver.p_max = static_cast<int>(parse_int("solver.p_max", *v));
  if (auto v = take("solver.warm_start")) c.solver.warm_start = parse_bool("solver.warm_start", *v);
  if (auto v = take("solver.margin")) c.solver_margin = parse_double("solver.margin", *v);

  bool hub_given = false;
  bool edges_given = false;
  if (auto v = take("topology.kind")) {
    if (*v == "fully_connected") c.topology_kind = comms::TopologyKind::fully_connected;
    else if (*v == "ring") c.topology_kind = comms::TopologyKind::ring;
    else if (*v == "star") c.topology_kind = comms::TopologyKind::star;
    else if (*v == "mesh") c.topology_kind = comms::TopologyKind::mesh;
    else throw ConfigError("invalid value for key 'topology.kind': '" + *v + "'");
  }
  if (auto v = take("topology.hub")) {
    hub_given = true;
    c.hub = static_cast<int>(parse_int("topology.hub", *v)) - 1;
  }
  if (auto v = take("topology.edges")) {
    edges_given = true;
    c.edges.clear();
    std::istringstream in(*v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      const auto dash = tok.find('-');
      if (dash == std::string::npos)
        throw ConfigError("invalid value for key 'topology.edges': expected \"i-j\" entries");
      const int a = static_cast<int>(parse_int("topology.edges", trim(tok.substr(0, dash)))) - 1;
      const int b = static_cast<int>(parse_int("topology.edges", trim(tok.substr(dash + 1)))) - 1;
      c.edges.emplace_back(a, b);
    }
  }
  if (auto v = take("links.delay")) c.link_delay = static_cast<int>(parse_int("links.delay", *v));
  if (auto v = take("links.drop_prob")) c.link_drop = parse_double("links.drop_prob", *v);
  if (auto v = take("links.seed"))
    c.seed = static_cast<std::uint64_t>(parse_int("links.seed", *v));
  if (auto v = take("arrival.pos_tol")) c.arrival_pos_tol = parse_double("arrival.pos_tol", *v);
  if (auto v = take("arrival.vel_tol")) c.arrival_vel_tol = parse_double("arrival.vel_tol", *v);
  if (auto v = take("runtime.barrier_timeout"))
    c.barrier_timeout = parse_double("runtime.barrier_timeout", *v);

  // Per-agent positions. Either none are given (benchmark defaults, which
  // exist for the four-agent fleet only) or all of them are.
  bool any_pos = false;
  for (const auto& [key, val] : kv)
    if (key.rfind("start.", 0) == 0 || key.rfind("target.", 0) == 0) any_pos = true;
  if (any_pos) {
    c.start.assign(c.n_agents, Vec2::Zero());
    c.target.assign(c.n_agents, Vec2::Zero());
    for (int i = 1; i <= c.n_agents; ++i) {
      const std::string sk = "start." + std::to_string(i);
      const std::string tk = "target." + std::to_string(i);
      auto sv = take(sk.c_str());
      auto tv = take(tk.c_str());
      if (!sv) throw ConfigError("missing key '" + sk + "' (required for n_agents = " +
                                 std::to_string(c.n_agents) + ")");
      if (!tv) throw ConfigError("missing key '" + tk + "' (required for n_agents = " +
                                 std::to_string(c.n_agents) + ")");
      c.start[i - 1] = parse_vec2(sk, *sv);
      c.target[i - 1] = parse_vec2(tk, *tv);
    }
  } else if (c.n_agents != 4) {
    throw ConfigError("n_agents = " + std::to_string(c.n_agents) +
                      " requires explicit start.<i> and target.<i> keys");
  }

  if (hub_given && c.topology_kind != comms::TopologyKind::star)
    throw ConfigError("key 'topology.hub' only applies to topology.kind = star");
  if (edges_given && c.topology_kind != comms::TopologyKind::mesh)
    throw ConfigError("key 'topology.edges' only applies to topology.kind = mesh");

  if (!kv.empty()) throw ConfigError("unknown config key: '" + kv.begin()->first + "'");

  validate(c);
  return c;
}

inline ScenarioConfig load_config(const std::string& text) { return from_map(parse_kv(text)); }

/// The four-agent position-swap benchmark: defaults, validated.
inline ScenarioConfig benchmark_position_swap() {
  ScenarioConfig c;
  validate(c);
  return c;
}

inline comms::Topology build_topology(const ScenarioConfig& c) {
  if (c.topology_kind == comms::TopologyKind::mesh) {
    Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(c.n_agents, c.n_agents);
    for (const auto& [a, b] : c.edges) {
      if (a < 0 || b < 0 || a >= c.n_agents || b >= c.n_agents || a == b)
        throw ConfigError("topology.edges: edge " + std::to_string(a + 1) + "-" +
                          std::to_string(b + 1) + " is out of range");
      adj(a, b) = adj(b, a) = 1;
    }
    try {
      return comms::build_custom_topology(adj);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("topology.edges: ") + e.what());
    }
  }
  try {
    return comms::build_topology(c.topology_kind, c.n_agents, c.hub);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
}

inline void validate(const ScenarioConfig& c) {
  if (c.n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (!(c.ts > 0)) throw ConfigError("ts must be > 0");
  if (c.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (c.steps < 1) throw ConfigError("steps must be >= 1");
  if (static_cast<int>(c.start.size()) != c.n_agents ||
      static_cast<int>(c.target.size()) != c.n_agents)
    throw ConfigError("start/target count does not match n_agents = " +
                      std::to_string(c.n_agents));
  if (!(c.pa >= 0)) throw ConfigError("pa must be >= 0");
  if (c.q_diag.minCoeff() < 0) throw ConfigError("cost.q entries must be >= 0");
  if (c.r_diag.minCoeff() <= 0) throw ConfigError("cost.r entries must be > 0");
  if (!(c.beta > 0)) throw ConfigError("cost.beta must be > 0");
  if (!(c.cbf.r1 > 0) || !(c.cbf.r2 > 0)) throw ConfigError("cbf radii must be > 0");
  if (!(c.cbf.gamma > 0) || c.cbf.gamma > 1) throw ConfigError("cbf.gamma must be in (0, 1]");
  if (!(c.a_max > 0)) throw ConfigError("a_max must be > 0");
  if (!(c.solver.alpha_p > 0) || !(c.solver.alpha_d > 0))
    throw ConfigError("solver step sizes must be > 0");
  if (!(c.solver.eps > 0)) throw ConfigError("solver.eps must be > 0");
  if (c.solver.p_max < 1) throw ConfigError("solver.p_max must be >= 1");
  if (c.solver_margin < 0) throw ConfigError("solver.margin must be >= 0");
  if (c.link_delay < 0) throw ConfigError("links.delay must be >= 0");
  if (c.link_drop < 0 || c.link_drop > 1)
    throw ConfigError("links.drop_prob must be in [0, 1]");
  if (!(c.arrival_pos_tol > 0) || !(c.arrival_vel_tol > 0))
    throw ConfigError("arrival tolerances must be > 0");
  if (!(c.barrier_timeout > 0)) throw ConfigError("runtime.barrier_timeout must be > 0");

  build_topology(c);  // connectivity, hub range, edge sanity

  // Initial-safety pre-check: every pair must start outside the unsafe set.
  for (int i = 0; i < c.n_agents; ++i)
    for (int j = i + 1; j < c.n_agents; ++j) {
      const double h = safety::barrier_value(c.start[i] - c.start[j], c.cbf);
      if (h < 0)
        throw ConfigError("initial safety violation: agents " + std::to_string(i + 1) +
                          " and " + std::to_string(j + 1) +
                          " start inside the unsafe set (h = " + detail::fmt(h) + ")");
    }
}

/// Canonical full-text form; load_config(to_text(c)) reproduces c.
inline std::string to_text(const ScenarioConfig& c) {
  using detail::fmt;
  std::ostringstream out;
  out << "n_agents = " << c.n_agents << "\n";
  out << "ts = " << fmt(c.ts) << "\n";
  out << "horizon = " << c.horizon << "\n";
  out << "steps = " << c.steps << "\n";
  for (int i = 0; i < c.n_agents; ++i) {
    out << "start." << i + 1 << " = " << fmt(c.start[i].x()) << " " << fmt(c.start[i].y()) << "\n";
    out << "target." << i + 1 << " = " << fmt(c.target[i].x()) << " " << fmt(c.target[i].y())
        << "\n";
  }
  out << "po = " << fmt(c.po.x()) << " " << fmt(c.po.y()) << "\n";
  out << "pa = " << fmt(c.pa) << "\n";
  out << "cost.q = " << fmt(c.q_diag(0)) << " " << fmt(c.q_diag(1)) << " " << fmt(c.q_diag(2))
      << " " << fmt(c.q_diag(3)) << "\n";
  out << "cost.r = " << fmt(c.r_diag(0)) << " " << fmt(c.r_diag(1)) << "\n";
  out << "cost.beta = " << fmt(c.beta) << "\n";
  out << "cbf.r1 = " << fmt(c.cbf.r1) << "\n";
  out << "cbf.r2 = " << fmt(c.cbf.r2) << "\n";
  out << "cbf.gamma = " << fmt(c.cbf.gamma) << "\n";
  out << "a_max = " << fmt(c.a_max) << "\n";
  out << "solver.alpha_p = " << fmt(c.solver.alpha_p) << "\n";
  out << "solver.alpha_d = " << fmt(c.solver.alpha_d) << "\n";
  out << "solver.eps = " << fmt(c.solver.eps) << "\n";
  out << "solver.p_max = " << c.solver.p_max << "\n";
  out << "solver.warm_start = " << (c.solver.warm_start ? "true" : "false") << "\n";
  out << "solver.margin = " << fmt(c.solver_margin) << "\n";
  out << "topology.kind = " << comms::to_string(c.topology_kind) << "\n";
  if (c.topology_kind == comms::TopologyKind::star)
    out << "topology.hub = " << c.hub + 1 << "\n";
  if (c.topology_kind == comms::TopologyKind::mesh) {
    out << "topology.edges = ";
    for (std::size_t e = 0; e < c.edges.size(); ++e) {
      if (e) out << ",";
      out << c.edges[e].first + 1 << "-" << c.edges[e].second + 1;
    }
    out << "\n";
  }
  out << "links.delay = " << c.link_delay << "\n";
  out << "links.drop_prob = " << fmt(c.link_drop) << "\n";
  out << "links.seed = " << c.seed << "\n";
  out << "arrival.pos_tol = " << fmt(c.arrival_pos_tol) << "\n";
  out << "arrival.vel_tol = " << fmt(c.arrival_vel_tol) << "\n";
  out << "runtime.barrier_timeout = " << fmt(c.barrier_timeout) << "\n";
  return out.str();
}

/// Scenario-constant data shared by every worker.
struct StaticContext {
  model::AgentModel plant;
  model::HorizonMap hmap;
  game::CostParams cost;
  comms::Topology topo;
  Eigen::MatrixXd weights;
};

inline StaticContext make_static(const ScenarioConfig& c) {
  StaticContext sc;
  sc.plant = model::discretize(c.ts, c.a_max);
  sc.hmap = model::make_horizon_map(sc.plant, c.horizon);
  sc.cost.Q = c.q_diag.asDiagonal();
  sc.cost.R = c.r_diag.asDiagonal();
  sc.cost.P = model::solve_dare(sc.plant.Ad, sc.plant.Bd, sc.cost.Q, sc.cost.R);
  sc.cost.beta = c.beta;
  sc.cost.pa = c.pa;
  sc.cost.po = c.po;
  sc.cost.n_agents = c.n_agents;
  sc.topo = build_topology(c);
  sc.weights = comms::metropolis_weights(sc.topo);
  return sc;
}

/// One agent's view of another agent's state, as disseminated over the
/// fabric. `stamp` is the mission step the measurement belongs to.
struct Snapshot {
  int stamp = -1;
  model::AgentState state;
};

/// Assembles agent `id`'s local problem for one receding-horizon step from
/// its snapshot table: orthant signs fixed at the measured relative
/// positions, decrement rows for every pair, constants tightened by the
/// solver margin so a tolerance-converged solve still satisfies the exact
/// conditions.
inline solver::LocalProblem build_local_problem(const StaticContext& sc,
                                                const ScenarioConfig& c,
                                                const std::vector<Snapshot>& table, int id) {
  std::vector<safety::TaggedPairRows> pairs;
  std::vector<Vec4> e0(c.n_agents);
  for (int i = 0; i < c.n_agents; ++i)
    e0[i] = model::to_error(table[i].state, c.target[i]).e;
  for (int i = 0; i < c.n_agents; ++i)
    for (int j = i + 1; j < c.n_agents; ++j) {
      const auto signs = safety::fix_orthant(table[i].state, table[j].state);
      auto rows = safety::assemble_pair_constraints(sc.hmap, e0[i], e0[j], signs, c.cbf,
                                                    c.target[i], c.target[j]);
      for (auto& row : rows) row.rhs -= c.solver_margin;
      safety::normalize_rows(rows);
      pairs.push_back({i, j, std::move(rows)});
    }
  auto blocks = safety::split_blocks(pairs, c.n_agents);

  solver::LocalProblem p;
  p.agent = id;
  p.n_agents = c.n_agents;
  p.diameter = sc.topo.diameter;
  p.hmap = sc.hmap;
  p.cost = sc.cost;
  p.e0 = e0[id];
  p.target = c.target[id];
  p.phi = game::phi_map(sc.hmap, p.e0, p.target);
  p.block = std::move(blocks[id]);
  p.a_max = c.a_max;
  p.weight_row = sc.weights.row(id);
  p.neighbours = sc.topo.neighbours[id];
  return p;
}

inline bool arrived(const ScenarioConfig& c, const model::AgentState& z, const Vec2& target) {
  return (z.p - target).norm() <= c.arrival_pos_tol && z.v.norm() <= c.arrival_vel_tol;
}

// ---------------------------------------------------------------------------
// Logs and post-hoc audits.

struct TrajRecord {
  int step = 0;
  int agent = 0;  // 0-based in memory, 1-based in files
  Vec2 p = Vec2::Zero();
  Vec2 v = Vec2::Zero();
  Vec2 a = Vec2::Zero();
  double min_barrier = 0.0;
  int inner_iters = 0;
  bool converged = false;
};

struct TrajectoryLog {
  std::vector<TrajRecord> records;  // sorted by (step, agent)
};

struct StepTiming {
  int step = 0;
  int agent = 0;
  double seconds = 0.0;
  int inner_iters = 0;
};

struct TimingLog {
  std::vector<StepTiming> rows;
};

/// Positions per step from a trajectory log, plus the one-step continuation
/// of the final records (needed to audit the last applied controls).
inline std::vector<std::vector<model::AgentState>> replay_states(const ScenarioConfig& c,
                                                                 const TrajectoryLog& log) {
  if (log.records.empty()) return {};
  const int n = c.n_agents;
  const int steps = log.records.back().step + 1;
  if (log.records.size() != static_cast<std::size_t>(steps) * n)
    throw std::invalid_argument("replay_states: log is not one record per agent per step");
  std::vector<std::vector<model::AgentState>> states(steps + 1,
                                                     std::vector<model::AgentState>(n));
  const auto plant = model::discretize(c.ts, c.a_max);
  for (const auto& r : log.records)
    states[r.step][r.agent] = model::AgentState{r.p, r.v, r.step};
  for (int a = 0; a < n; ++a) {
    const auto& last = log.records[static_cast<std::size_t>(steps - 1) * n + a];
    states[steps][a] = model::step(plant, states[steps - 1][a], last.a);
  }
  return states;
}

/// Fills each record's min_barrier with the smallest barrier value over the
/// pairs that involve the record's agent, at that step's logged positions.
inline void annotate_min_barrier(const ScenarioConfig& c, TrajectoryLog& log) {
  if (log.records.empty() || c.n_agents < 2) {
    for (auto& r : log.records) r.min_barrier = std::numeric_limits<double>::infinity();
    return;
  }
  const auto states = replay_states(c, log);
  for (auto& r : log.records) {
    double h_min = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c.n_agents; ++j) {
      if (j == r.agent) continue;
      h_min = std::min(h_min, safety::barrier_value(
                                  states[r.step][r.agent].p - states[r.step][j].p, c.cbf));
    }
    r.min_barrier = h_min;
  }
}

struct BarrierAudit {
  double min_barrier = std::numeric_limits<double>::infinity();
  std::vector<safety::SafeSetCheck> unsafe_samples;  // barrier < 0
  long decrement_checks = 0;
  long decrement_failures = 0;
  long failures_with_both_converged = 0;
  std::vector<safety::SafeSetCheck> decrement_failure_samples;
};

/// Walks every pair and step of a finished run: barrier nonnegativity and
/// the per-step decrement condition, with failures cross-referenced against
/// the solver convergence flags of the two agents involved.
inline BarrierAudit audit_trajectory(const ScenarioConfig& c, const TrajectoryLog& log) {
  BarrierAudit audit;
  if (log.records.empty() || c.n_agents < 2) return audit;
  const auto states = replay_states(c, log);
  const int n = c.n_agents;
  const int steps = static_cast<int>(states.size()) - 1;

  std::vector<std::vector<bool>> converged(steps, std::vector<bool>(n, false));
  for (const auto& r : log.records) converged[r.step][r.agent] = r.converged;

  for (int k = 0; k <= steps; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double h = safety::barrier_value(states[k][i].p - states[k][j].p, c.cbf);
        audit.min_barrier = std::min(audit.min_barrier, h);
        if (h < 0) audit.unsafe_samples.push_back({i, j, k, h});
      }

  for (int k = 0; k < steps; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double h_now = safety::barrier_value(states[k][i].p - states[k][j].p, c.cbf);
        const double h_next =
            safety::barrier_value(states[k + 1][i].p - states[k + 1][j].p, c.cbf);
        ++audit.decrement_checks;
        if (!safety::decrement_satisfied(h_next, h_now, c.cbf.gamma)) {
          ++audit.decrement_failures;
          if (converged[k][i] && converged[k][j]) ++audit.failures_with_both_converged;
          audit.decrement_failure_samples.push_back({i, j, k, h_next - h_now + c.cbf.gamma * h_now});
        }
      }
  return audit;
}

}  // namespace dcf::scenario
