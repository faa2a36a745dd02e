#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dcf::comms {

enum class TopologyKind { fully_connected, ring, star, mesh };

inline const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::fully_connected: return "fully_connected";
    case TopologyKind::ring: return "ring";
    case TopologyKind::star: return "star";
    case TopologyKind::mesh: return "mesh";
  }
  return "?";
}

struct Topology {
  int n = 0;
  TopologyKind kind = TopologyKind::fully_connected;
  Eigen::MatrixXi adjacency;                 // symmetric 0/1, zero diagonal
  std::vector<std::vector<int>> neighbours;  // sorted per agent
  int diameter = 0;
  int edge_count = 0;
};

namespace detail {

inline void finalize_topology(Topology& t) {
  const int n = t.n;
  t.neighbours.assign(n, {});
  t.edge_count = 0;
  for (int i = 0; i < n; ++i) {
    if (t.adjacency(i, i) != 0)
      throw std::invalid_argument("topology: self loops are not allowed");
    for (int j = 0; j < n; ++j) {
      if (t.adjacency(i, j) != t.adjacency(j, i))
        throw std::invalid_argument("topology: adjacency must be symmetric");
      if (i != j && t.adjacency(i, j) != 0) {
        t.neighbours[i].push_back(j);
        if (i < j) ++t.edge_count;
      }
    }
  }
  // BFS from every node: connectivity and diameter.
  int diameter = 0;
  for (int src = 0; src < n; ++src) {
    std::vector<int> dist(n, -1);
    std::vector<int> queue{src};
    dist[src] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const int v = queue[qi];
      for (int w : t.neighbours[v])
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
    }
    for (int v = 0; v < n; ++v) {
      if (dist[v] < 0) throw std::invalid_argument("topology: graph must be connected");
      diameter = std::max(diameter, dist[v]);
    }
  }
  t.diameter = diameter;
}

}  // namespace detail

inline Topology build_topology(TopologyKind kind, int n, int hub = 0) {
  if (n < 1) throw std::invalid_argument("build_topology: need at least one agent");
  Topology t;
  t.n = n;
  t.kind = kind;
  t.adjacency = Eigen::MatrixXi::Zero(n, n);
  switch (kind) {
    case TopologyKind::fully_connected:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) t.adjacency(i, j) = 1;
      break;
    case TopologyKind::ring:
      for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        if (i != j) {
          t.adjacency(i, j) = 1;
          t.adjacency(j, i) = 1;
        }
      }
      break;
    case TopologyKind::star:
      if (hub < 0 || hub >= n)
        throw std::invalid_argument("build_topology: star hub out of range");
      for (int i = 0; i < n; ++i)
        if (i != hub) {
          t.adjacency(hub, i) = 1;
          t.adjacency(i, hub) = 1;
        }
      break;
    case TopologyKind::mesh:
      throw std::invalid_argument("build_topology: mesh requires an explicit adjacency");
  }
  detail::finalize_topology(t);
  return t;
}

inline Topology build_custom_topology(const Eigen::MatrixXi& adjacency) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() < 1)
    throw std::invalid_argument("build_custom_topology: adjacency must be square");
  Topology t;
  t.n = static_cast<int>(adjacency.rows());
  t.kind = TopologyKind::mesh;
  t.adjacency = adjacency;
  detail::finalize_topology(t);
  return t;
}

/// Metropolis weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges, with the
/// diagonal absorbing the remainder. Doubly stochastic and computable from
/// local degrees only.
inline Eigen::MatrixXd metropolis_weights(const Topology& t) {
  const int n = t.n;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double deg_i = static_cast<double>(t.neighbours[i].size());
    double off = 0.0;
    for (int j : t.neighbours[i]) {
      const double deg_j = static_cast<double>(t.neighbours[j].size());
      W(i, j) = 1.0 / (1.0 + std::max(deg_i, deg_j));
      off += W(i, j);
    }
    W(i, i) = 1.0 - off;
  }
  return W;
}

/// Per-directed-link imperfection model. Delays are whole exchange rounds;
/// drops are Bernoulli with a deterministic per-(round, link) draw derived
/// from the seed. Data sent at round 0 of a phase is delivered reliably so a
/// hold-last fallback always exists.
struct LinkModel {
  Eigen::MatrixXi delay;
  Eigen::MatrixXd drop;
  std::uint64_t seed = 0;

  static LinkModel uniform(int n, int delay_rounds, double drop_prob, std::uint64_t seed) {
    if (delay_rounds < 0) throw std::invalid_argument("link model: delay must be >= 0");
    if (drop_prob < 0.0 || drop_prob > 1.0)
      throw std::invalid_argument("link model: drop probability must be in [0, 1]");
    LinkModel lm;
    lm.delay = Eigen::MatrixXi::Constant(n, n, delay_rounds);
    lm.drop = Eigen::MatrixXd::Constant(n, n, drop_prob);
    lm.seed = seed;
    return lm;
  }
  static LinkModel ideal(int n) { return uniform(n, 0, 0.0, 0); }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic uniform draw in [0, 1) keyed on the seed and message identity.
inline double unit_draw(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                        std::uint64_t c, std::uint64_t d, std::uint64_t e) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  h = mix64(h ^ d);
  h = mix64(h ^ e);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

struct Payload {
  std::vector<double> data;
  std::size_t bytes() const { return data.size() * sizeof(double); }
};

struct MessageEvent {
  long round = 0;  // global exchange-round sequence number
  int from = 0;    // 0-based agent ids
  int to = 0;
  bool delivered = false;
  std::size_t bytes = 0;
};

struct LinkStats {
  long attempted = 0;
  long delivered = 0;
  std::size_t bytes_delivered = 0;
};

struct FabricAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FabricTimeout : FabricAborted {
  using FabricAborted::FabricAborted;
};
struct ProtocolError : FabricAborted {
  using FabricAborted::FabricAborted;
};

/// Identifies one lockstep exchange sequence. Rounds, drop fallbacks and the
/// reliable round-0 rule are scoped to a phase.
struct PhaseId {
  int kind = 0;
  int step = 0;
  auto operator<=>(const PhaseId&) const = default;
};

/// The only cross-worker channel. exchange() is a per-round rendezvous: it
/// blocks until every active agent of the phase has deposited its payload,
/// then releases all of them with their neighbours' payloads as filtered by
/// the link model. barrier() is the mission-level synchronization point and
/// aggregates a small flag word across workers.
class Fabric {
 public:
  Fabric(Topology topo, LinkModel links, double timeout_seconds = 30.0)
      : topo_(std::move(topo)), links_(std::move(links)), timeout_(timeout_seconds) {
    if (links_.delay.rows() != topo_.n || links_.drop.rows() != topo_.n)
      throw std::invalid_argument("fabric: link model size does not match topology");
    max_delay_ = topo_.n > 0 ? links_.delay.maxCoeff() : 0;
  }

  void set_message_logging(bool on) {
    std::lock_guard lk(mu_);
    log_messages_ = on;
  }

  std::map<int, Payload> exchange(int agent, PhaseId phase, int round, Payload payload) {
    std::unique_lock lk(mu_);
    throw_if_fatal();
    Phase& ph = phase_for(phase);
    if (!ph.active.count(agent))
      fatal_protocol("exchange: agent " + std::to_string(agent + 1) + " is not active in the phase");
    if (round != ph.current_round)
      fatal_protocol("exchange: round mismatch (agent " + std::to_string(agent + 1) +
                     " sent round " + std::to_string(round) + ", phase expects " +
                     std::to_string(ph.current_round) + ")");
    if (ph.deposits.count(agent))
      fatal_protocol("exchange: duplicate deposit in one round");

    ph.history[agent][round] = std::move(payload);
    ph.deposits.insert(agent);
    if (all_deposited(ph)) {
      release_round(phase, ph);
    } else {
      const auto deadline = std::chrono::steady_clock::now() +
                            std::chrono::duration<double>(timeout_);
      while (ph.completed_round < round && !fatal_) {
        if (cv_.wait_until(lk, deadline) == std::cv_status::timeout && ph.completed_round < round) {
          fatal_ = true;
          fatal_timeout_ = true;
          reason_ = "exchange: rendezvous timeout";
          cv_.notify_all();
          break;
        }
      }
      throw_if_fatal();
    }

    auto it = ph.ready.find(round);
    if (it == ph.ready.end() || !it->second.count(agent))
      fatal_protocol("exchange: missing delivery");  // not reachable
    std::map<int, Payload> out = std::move(it->second[agent]);
    it->second.erase(agent);
    if (it->second.empty()) ph.ready.erase(it);
    return out;
  }

  /// Announce that the agent makes no further deposits in this phase. Its
  /// last payload keeps serving as the hold-last value for its neighbours.
  void leave(int agent, PhaseId phase) {
    std::lock_guard lk(mu_);
    if (fatal_) return;
    auto pit = phases_.find(phase);
    if (pit == phases_.end()) return;
    Phase& ph = pit->second;
    ph.active.erase(agent);
    if (!ph.active.empty() && all_deposited(ph)) release_round(phase, ph);
    if (ph.active.empty() && ph.ready.empty()) phases_.erase(pit);
    cv_.notify_all();
  }

  struct BarrierOut {
    std::uint32_t all_and = 0;
    std::uint32_t any_or = 0;
  };

  BarrierOut barrier(int agent, std::uint64_t id, std::uint32_t flags = 0) {
    std::unique_lock lk(mu_);
    throw_if_fatal();
    (void)agent;
    if (barrier_count_ == 0) {
      barrier_id_ = id;
      and_acc_ = ~0u;
      or_acc_ = 0u;
    } else if (id != barrier_id_) {
      fatal_protocol("barrier: id mismatch (" + std::to_string(id) + " vs " +
                     std::to_string(barrier_id_) + ")");
    }
    and_acc_ &= flags;
    or_acc_ |= flags;
    ++barrier_count_;
    const std::uint64_t my_gen = barrier_gen_;
    if (barrier_count_ == topo_.n) {
      barrier_result_ = {and_acc_, or_acc_};
      barrier_count_ = 0;
      ++barrier_gen_;
      cv_.notify_all();
      return barrier_result_;
    }
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_);
    while (barrier_gen_ == my_gen && !fatal_) {
      if (cv_.wait_until(lk, deadline) == std::cv_status::timeout && barrier_gen_ == my_gen) {
        fatal_ = true;
        fatal_timeout_ = true;
        reason_ = "barrier: timeout";
        cv_.notify_all();
        break;
      }
    }
    throw_if_fatal();
    return barrier_result_;
  }

  void abort(const std::string& reason) {
    std::lock_guard lk(mu_);
    if (!fatal_) {
      fatal_ = true;
      reason_ = reason;
    }
    cv_.notify_all();
  }

  bool aborted() const {
    std::lock_guard lk(mu_);
    return fatal_;
  }

  std::map<std::pair<int, int>, LinkStats> link_stats() const {
    std::lock_guard lk(mu_);
    return stats_;
  }

  std::vector<MessageEvent> message_log() const {
    std::lock_guard lk(mu_);
    return events_;
  }

  long rounds_released() const {
    std::lock_guard lk(mu_);
    return global_round_;
  }

  const Topology& topology() const { return topo_; }

 private:
  struct Phase {
    int current_round = 0;
    int completed_round = -1;
    std::set<int> active;
    std::set<int> deposits;
    std::map<int, std::map<int, Payload>> history;           // sender -> round -> payload
    std::map<std::pair<int, int>, Payload> last_rx;          // (from, to) -> payload
    std::map<int, std::map<int, std::map<int, Payload>>> ready;  // round -> receiver -> from
  };

  Phase& phase_for(const PhaseId& id) {
    auto it = phases_.find(id);
    if (it == phases_.end()) {
      Phase ph;
      for (int i = 0; i < topo_.n; ++i) ph.active.insert(i);
      it = phases_.emplace(id, std::move(ph)).first;
    }
    return it->second;
  }

  bool all_deposited(const Phase& ph) const {
    for (int a : ph.active)
      if (!ph.deposits.count(a)) return false;
    return true;
  }

  // Called with the lock held once every active agent has deposited.
  void release_round(const PhaseId& id, Phase& ph) {
    const int r = ph.current_round;
    auto& slot = ph.ready[r];
    for (int t : ph.active) {
      auto& inbox = slot[t];
      for (int s : topo_.neighbours[t]) {
        auto hist_it = ph.history.find(s);
        if (hist_it == ph.history.end()) continue;  // sender never deposited
        const auto& hist = hist_it->second;
        int sent_round = r - links_.delay(s, t);
        if (sent_round < 0) sent_round = 0;
        auto sent_it = hist.find(sent_round);
        if (sent_it == hist.end()) {
          // Sender already left; fall back to the last received value.
          auto lr = ph.last_rx.find({s, t});
          if (lr != ph.last_rx.end()) inbox[s] = lr->second;
          continue;
        }
        bool delivered = true;
        if (sent_round > 0) {
          const double draw = detail::unit_draw(
              links_.seed, static_cast<std::uint64_t>(id.kind) + 1,
              static_cast<std::uint64_t>(id.step) + 1, static_cast<std::uint64_t>(r),
              static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(t));
          delivered = draw >= links_.drop(s, t);
        }
        auto& st = stats_[{s, t}];
        ++st.attempted;
        if (delivered) {
          ++st.delivered;
          st.bytes_delivered += sent_it->second.bytes();
          ph.last_rx[{s, t}] = sent_it->second;
          inbox[s] = sent_it->second;
        } else {
          auto lr = ph.last_rx.find({s, t});
          if (lr != ph.last_rx.end()) inbox[s] = lr->second;
        }
        if (log_messages_)
          events_.push_back({global_round_, s, t, delivered, sent_it->second.bytes()});
      }
    }
    // Prune history beyond the longest delay.
    const int keep_from = r - max_delay_ - 1;
    for (auto& [sender, hist] : ph.history)
      while (!hist.empty() && hist.begin()->first < keep_from) hist.erase(hist.begin());
    ph.deposits.clear();
    ph.completed_round = r;
    ++ph.current_round;
    ++global_round_;
    cv_.notify_all();
  }

  void throw_if_fatal() const {
    if (!fatal_) return;
    if (fatal_timeout_) throw FabricTimeout(reason_);
    if (fatal_protocol_) throw ProtocolError(reason_);
    throw FabricAborted(reason_);
  }

  [[noreturn]] void fatal_protocol(const std::string& msg) {
    fatal_ = true;
    fatal_protocol_ = true;
    reason_ = msg;
    cv_.notify_all();
    throw ProtocolError(msg);
  }

  Topology topo_;
  LinkModel links_;
  double timeout_;
  int max_delay_ = 0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<PhaseId, Phase> phases_;
  std::map<std::pair<int, int>, LinkStats> stats_;
  std::vector<MessageEvent> events_;
  bool log_messages_ = false;
  long global_round_ = 0;

  std::uint64_t barrier_id_ = 0;
  int barrier_count_ = 0;
  std::uint64_t barrier_gen_ = 0;
  BarrierOut barrier_result_;
  std::uint32_t and_acc_ = ~0u;
  std::uint32_t or_acc_ = 0u;

  bool fatal_ = false;
  bool fatal_timeout_ = false;
  bool fatal_protocol_ = false;
  std::string reason_;
};

}  // namespace dcf::comms
