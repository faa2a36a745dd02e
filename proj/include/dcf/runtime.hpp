#pragma once

#include "dcf/comms.hpp"
#include "dcf/scenario.hpp"
#include "dcf/solver.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

namespace dcf::runtime {

using model::Vec2;
using scenario::StepTiming;

enum class MissionStatus : int {
  ok = 0,
  solver_cap = 2,       // some inner solve hit the iteration cap
  barrier_timeout = 3,  // a rendezvous or barrier timed out
  config_error = 4,
};

/// Boundary between the controller and whatever produces the next measured
/// state: the built-in discrete model, or an external implementation
/// (higher-fidelity simulator, hardware bridge) supplied as a callback.
struct PlantSeam {
  virtual ~PlantSeam() = default;
  virtual model::AgentState step(const model::AgentModel& m, const model::AgentState& z,
                                 const Vec2& a) = 0;
};

struct SimpleModelSeam final : PlantSeam {
  model::AgentState step(const model::AgentModel& m, const model::AgentState& z,
                         const Vec2& a) override {
    return model::step(m, z, a);
  }
};

/// External seam: the callback owns the plant. The default callback loops
/// straight back through the discrete model, which documents the contract
/// and doubles as a stub for integration tests.
struct CallbackSeam final : PlantSeam {
  using Fn = std::function<model::AgentState(const model::AgentModel&, const model::AgentState&,
                                             const Vec2&)>;
  explicit CallbackSeam(Fn fn = {}) : fn_(std::move(fn)) {}
  model::AgentState step(const model::AgentModel& m, const model::AgentState& z,
                         const Vec2& a) override {
    if (fn_) return fn_(m, z, a);
    return model::step(m, z, a);
  }

 private:
  Fn fn_;
};

/// Everything a worker owns. Workers never touch another worker's context;
/// assert_owned() trips on any cross-thread access.
struct WorkerContext {
  int id = 0;
  std::thread::id owner;
  model::AgentModel plant_model;
  model::AgentState state;
  Vec2 target = Vec2::Zero();
  std::vector<scenario::Snapshot> table;
  Eigen::VectorXd u_prev;
  bool have_prev = false;
  std::vector<scenario::TrajRecord> traj;
  std::vector<StepTiming> timing;

  void assert_owned() const {
    if (std::this_thread::get_id() != owner)
      throw std::logic_error("WorkerContext: cross-context access from a foreign thread");
  }
};

struct MissionOptions {
  bool log_messages = false;
  std::function<std::unique_ptr<PlantSeam>(int)> seam_factory;  // default: SimpleModelSeam
  std::function<void(int agent, int step, int round, const solver::SolverLocalState&)>
      solver_observer;
};

struct MissionResult {
  scenario::TrajectoryLog trajectory;
  scenario::TimingLog timing;
  std::vector<comms::MessageEvent> messages;
  std::map<std::pair<int, int>, comms::LinkStats> bandwidth;
  MissionStatus status = MissionStatus::ok;
  int steps_executed = 0;
  bool all_arrived = false;
};

namespace detail {

constexpr int kSnapshotPhase = 0;
constexpr int kSolvePhase = 1;

inline comms::Payload encode_table(const std::vector<scenario::Snapshot>& table) {
  comms::Payload p;
  p.data.reserve(table.size() * 5);
  for (const auto& s : table) {
    p.data.push_back(static_cast<double>(s.stamp));
    p.data.push_back(s.state.p.x());
    p.data.push_back(s.state.p.y());
    p.data.push_back(s.state.v.x());
    p.data.push_back(s.state.v.y());
  }
  return p;
}

/// Keep the freshest view of every agent.
inline void merge_table(std::vector<scenario::Snapshot>& table, const comms::Payload& p) {
  const int n = static_cast<int>(table.size());
  if (p.data.size() != static_cast<std::size_t>(n) * 5)
    throw std::invalid_argument("merge_table: bad snapshot payload size");
  for (int i = 0; i < n; ++i) {
    const int stamp = static_cast<int>(p.data[5 * i]);
    if (stamp > table[i].stamp) {
      table[i].stamp = stamp;
      table[i].state.p = {p.data[5 * i + 1], p.data[5 * i + 2]};
      table[i].state.v = {p.data[5 * i + 3], p.data[5 * i + 4]};
      table[i].state.k = stamp;
    }
  }
}

inline comms::Payload encode_msg(const solver::RoundMsg& msg) {
  comms::Payload p;
  p.data.reserve(2 + msg.y.size() + msg.lambda.size() + msg.flood.size());
  p.data.push_back(msg.s(0));
  p.data.push_back(msg.s(1));
  for (int i = 0; i < msg.y.size(); ++i) p.data.push_back(msg.y(i));
  for (int i = 0; i < msg.lambda.size(); ++i) p.data.push_back(msg.lambda(i));
  for (auto f : msg.flood) p.data.push_back(f ? 1.0 : 0.0);
  return p;
}

inline solver::RoundMsg decode_msg(const comms::Payload& p, int m, int flood_levels) {
  if (p.data.size() != static_cast<std::size_t>(2 + 2 * m + flood_levels))
    throw std::invalid_argument("decode_msg: bad solver payload size");
  solver::RoundMsg msg;
  msg.s.resize(2);
  msg.s << p.data[0], p.data[1];
  msg.y.resize(m);
  msg.lambda.resize(m);
  for (int i = 0; i < m; ++i) msg.y(i) = p.data[2 + i];
  for (int i = 0; i < m; ++i) msg.lambda(i) = p.data[2 + m + i];
  msg.flood.resize(flood_levels);
  for (int i = 0; i < flood_levels; ++i)
    msg.flood[i] = p.data[2 + 2 * m + i] != 0.0 ? 1 : 0;
  return msg;
}

}  // namespace detail

/// Wall-clock duration of one optimization phase, monotonic clock.
class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

/// Spawns one long-lived worker per agent and runs the receding-horizon
/// mission in lockstep: disseminate state snapshots, assemble and solve the
/// local problem (timed), apply the first control through the plant seam,
/// log, then rendezvous on the arrival decision. Workers share nothing but
/// the fabric.
inline MissionResult run_mission(const scenario::ScenarioConfig& c,
                                 const MissionOptions& opts = {}) {
  scenario::validate(c);
  const auto sc = scenario::make_static(c);
  const int n = c.n_agents;
  const int D = sc.topo.diameter;
  const int m = (n * (n - 1) / 2) * c.horizon;

  comms::LinkModel links = comms::LinkModel::uniform(n, c.link_delay, c.link_drop, c.seed);
  comms::Fabric fabric(sc.topo, links, c.barrier_timeout);
  fabric.set_message_logging(opts.log_messages);

  std::vector<WorkerContext> contexts(n);
  for (int i = 0; i < n; ++i) {
    auto& ctx = contexts[i];
    ctx.id = i;
    ctx.plant_model = sc.plant;
    ctx.state = model::AgentState{c.start[i], Vec2::Zero(), 0};
    ctx.target = c.target[i];
    ctx.table.resize(n);
    for (int j = 0; j < n; ++j) ctx.table[j] = {0, model::AgentState{c.start[j], Vec2::Zero(), 0}};
  }

  std::atomic<bool> timed_out{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker_main = [&](int id) {
    auto& ctx = contexts[id];
    ctx.owner = std::this_thread::get_id();
    std::unique_ptr<PlantSeam> seam =
        opts.seam_factory ? opts.seam_factory(id) : std::make_unique<SimpleModelSeam>();
    for (int k = 0; k < c.steps; ++k) {
      ctx.assert_owned();
      // Step 1: send the fresh measurement through the fabric and relay the
      // table for diameter-many rounds so every constraint pair is covered.
      ctx.table[id] = {k, ctx.state};
      for (int r = 0; r < D; ++r) {
        auto got = fabric.exchange(id, {detail::kSnapshotPhase, 0}, k * D + r,
                                   detail::encode_table(ctx.table));
        for (const auto& [from, payload] : got) detail::merge_table(ctx.table, payload);
      }

      // Step 2: the optimization phase, timed. Constraint assembly is part
      // of the measured region.
      Stopwatch watch;
      const auto prob = scenario::build_local_problem(sc, c, ctx.table, id);
      auto st = solver::init_local(
          (c.solver.warm_start && ctx.have_prev) ? &ctx.u_prev : nullptr, prob);
      auto xchg = [&](int round, const solver::RoundMsg& msg) {
        auto raw = fabric.exchange(id, {detail::kSolvePhase, k}, round, detail::encode_msg(msg));
        std::map<int, solver::RoundMsg> out;
        for (const auto& [j, payload] : raw)
          out.emplace(j, detail::decode_msg(payload, m, D));
        return out;
      };
      std::function<void(int, const solver::SolverLocalState&)> obs;
      if (opts.solver_observer)
        obs = [&, k](int round, const solver::SolverLocalState& s) {
          opts.solver_observer(id, k, round, s);
        };
      const auto res = solver::inner_loop(prob, st, c.solver, xchg, obs);
      const double secs = watch.seconds();
      fabric.leave(id, {detail::kSolvePhase, k});

      // Step 3: apply the first control and measure.
      const Vec2 a = res.u.head<2>();
      const auto next = seam->step(ctx.plant_model, ctx.state, a);

      // Step 4: log against the pre-step state.
      ctx.traj.push_back({k, id, ctx.state.p, ctx.state.v, a, 0.0, res.iterations, res.converged});
      ctx.timing.push_back({k, id, secs, res.iterations});

      // Step 5: commit and decide, in lockstep, whether the fleet is done.
      std::uint32_t flags = scenario::arrived(c, next, ctx.target) ? 1u : 0u;
      const auto agg = fabric.barrier(id, static_cast<std::uint64_t>(k), flags);
      ctx.state = next;
      ctx.u_prev = res.u;
      ctx.have_prev = true;
      if (agg.all_and & 1u) break;
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(n);
  for (int i = 0; i < n; ++i) {
    workers.emplace_back([&, i] {
      try {
        worker_main(i);
      } catch (const comms::FabricTimeout&) {
        timed_out = true;
      } catch (const comms::FabricAborted&) {
        // Secondary failure; the primary cause is recorded elsewhere.
      } catch (...) {
        {
          std::lock_guard lk(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
        fabric.abort("worker failure");
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);

  MissionResult out;
  for (const auto& ctx : contexts) {
    out.trajectory.records.insert(out.trajectory.records.end(), ctx.traj.begin(), ctx.traj.end());
    out.timing.rows.insert(out.timing.rows.end(), ctx.timing.begin(), ctx.timing.end());
  }
  std::sort(out.trajectory.records.begin(), out.trajectory.records.end(),
            [](const auto& a, const auto& b) {
              return std::tie(a.step, a.agent) < std::tie(b.step, b.agent);
            });
  std::sort(out.timing.rows.begin(), out.timing.rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.step, a.agent) < std::tie(b.step, b.agent);
  });
  out.messages = fabric.message_log();
  out.bandwidth = fabric.link_stats();

  if (timed_out) {
    out.status = MissionStatus::barrier_timeout;
  } else {
    // Partial logs can be ragged only after an abort; here every worker ran
    // the same number of steps.
    out.steps_executed =
        out.trajectory.records.empty() ? 0 : out.trajectory.records.back().step + 1;
    scenario::annotate_min_barrier(c, out.trajectory);
    bool cap_hit = false;
    for (const auto& r : out.trajectory.records)
      if (!r.converged) cap_hit = true;
    out.status = cap_hit ? MissionStatus::solver_cap : MissionStatus::ok;
    if (out.steps_executed > 0) {
      const auto states = scenario::replay_states(c, out.trajectory);
      out.all_arrived = true;
      for (int i = 0; i < n; ++i)
        out.all_arrived =
            out.all_arrived && scenario::arrived(c, states.back()[i], c.target[i]);
    }
  }
  return out;
}

}  // namespace dcf::runtime
