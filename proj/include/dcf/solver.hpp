#pragma once

#include "dcf/game.hpp"
#include "dcf/model.hpp"
#include "dcf/safety.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

namespace dcf::solver {

using model::Vec2;
using model::Vec4;

struct SolverParams {
  double alpha_p = 0.05;   // primal step size
  double alpha_d = 1.0;    // dual step size (rows are normalized)
  double eps = 1e-4;       // stopping threshold on max(primal, dual) change
  int p_max = 2000;        // inner-iteration cap
  bool warm_start = true;
};

/// Everything one agent needs to run its side of one receding-horizon solve.
struct LocalProblem {
  int agent = 0;
  int n_agents = 1;
  int diameter = 0;                 // of the communication graph
  model::HorizonMap hmap;
  game::CostParams cost;
  game::PhiMap phi;
  Vec4 e0 = Vec4::Zero();
  Vec2 target = Vec2::Zero();
  safety::CoupledConstraintBlock block;
  double a_max = 2.0;
  Eigen::VectorXd weight_row;       // consensus weights, size n_agents
  std::vector<int> neighbours;
};

/// Per-agent iterate of the inner loop. `s` tracks the fleet average of the
/// phi maps, `y` the fleet average of the local constraint values
/// g_i(u_i) = A_i u_i - b_i. `flood` holds the partial all-converged ANDs
/// used for distributed termination: flood[d] is the AND of the local
/// convergence flags over the d-hop ball, d rounds ago.
struct SolverLocalState {
  Eigen::VectorXd u;
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  Eigen::VectorXd lambda;
  int iter = 0;
  bool converged_local = false;
  int flag_age = 0;  // consecutive rounds with every observed flag true
  std::vector<std::uint8_t> flood;
};

/// One round's neighbour broadcast.
struct RoundMsg {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  Eigen::VectorXd lambda;
  std::vector<std::uint8_t> flood;
};

inline RoundMsg make_msg(const SolverLocalState& st) {
  return RoundMsg{st.s, st.y, st.lambda, st.flood};
}

inline Eigen::VectorXd local_constraint_value(const LocalProblem& prob,
                                              const Eigen::VectorXd& u) {
  if (prob.block.A.rows() == 0) return Eigen::VectorXd();
  return prob.block.A * u - prob.block.b;
}

/// Fresh state: warm start shifts the previous solution by one step with the
/// last step repeated; trackers start at the agent's own local values, the
/// dual at zero.
inline SolverLocalState init_local(const Eigen::VectorXd* u_prev, const LocalProblem& prob) {
  const int nu = 2 * prob.hmap.H;
  SolverLocalState st;
  if (u_prev != nullptr) {
    if (u_prev->size() != nu)
      throw std::invalid_argument("init_local: previous decision has wrong length");
    st.u.resize(nu);
    st.u.head(nu - 2) = u_prev->tail(nu - 2);
    st.u.tail<2>() = u_prev->tail<2>();
  } else {
    st.u = Eigen::VectorXd::Zero(nu);
  }
  if (prob.block.A.rows() > 0 && prob.block.A.cols() != nu)
    throw std::invalid_argument("init_local: constraint block width mismatch");
  st.s = prob.phi.M * st.u + prob.phi.c;
  st.y = local_constraint_value(prob, st.u);
  st.lambda = Eigen::VectorXd::Zero(st.y.size());
  st.flood.assign(static_cast<std::size_t>(std::max(prob.diameter, 0)), 0);
  return st;
}

inline bool check_stop(double u_diff, double lambda_diff, double eps) {
  return std::max(u_diff, lambda_diff) < eps;
}

/// Projected pseudo-gradient step with the dual pressure A' lambda.
inline Eigen::VectorXd primal_step(const LocalProblem& prob, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& sigma_tracker,
                                   const Eigen::VectorXd& lambda, const SolverParams& par) {
  Eigen::VectorXd grad =
      game::pseudo_gradient(prob.hmap, prob.e0, u, sigma_tracker.head<2>(), prob.cost, prob.phi);
  if (prob.block.A.rows() > 0) grad += prob.block.A.transpose() * lambda;
  return game::project_box(u - par.alpha_p * grad, prob.a_max);
}

/// Dynamic-average consensus update: mix the neighbourhood trackers with a
/// doubly stochastic weight row, then add the innovation of the local value.
inline Eigen::VectorXd tracker_update(double own_weight, const Eigen::VectorXd& own_tracker,
                                      const std::vector<double>& nb_weights,
                                      const std::vector<const Eigen::VectorXd*>& nb_trackers,
                                      const Eigen::VectorXd& local_new,
                                      const Eigen::VectorXd& local_old) {
  if (nb_weights.size() != nb_trackers.size())
    throw std::invalid_argument("tracker_update: weights and trackers disagree");
  double wsum = own_weight;
  for (double w : nb_weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("tracker_update: weight row does not sum to 1");
  Eigen::VectorXd t = own_weight * own_tracker;
  for (std::size_t k = 0; k < nb_trackers.size(); ++k) {
    if (nb_trackers[k]->size() != own_tracker.size())
      throw std::invalid_argument("tracker_update: tracker dimension mismatch");
    t += nb_weights[k] * (*nb_trackers[k]);
  }
  return t + (local_new - local_old);
}

/// Consensus-projected dual ascent. N * y estimates the total constraint
/// value, so the dual climbs while the coupled constraint is violated.
inline Eigen::VectorXd dual_step(double own_weight, const Eigen::VectorXd& own_lambda,
                                 const std::vector<double>& nb_weights,
                                 const std::vector<const Eigen::VectorXd*>& nb_lambdas,
                                 const Eigen::VectorXd& y_new, double alpha_d, int n_agents) {
  Eigen::VectorXd lam = own_weight * own_lambda;
  for (std::size_t k = 0; k < nb_lambdas.size(); ++k) lam += nb_weights[k] * (*nb_lambdas[k]);
  lam += alpha_d * static_cast<double>(n_agents) * y_new;
  return lam.cwiseMax(0.0);
}

struct RoundOutcome {
  double u_diff = 0.0;
  double lambda_diff = 0.0;
  bool converged_now = false;
  bool stop = false;
};

/// One synchronous round: primal update, both tracker updates, dual update,
/// then the termination flood. `received` must hold a message from every
/// neighbour (the fabric guarantees this under any drop pattern).
inline RoundOutcome solver_round(const LocalProblem& prob, SolverLocalState& st,
                                 const SolverParams& par,
                                 const std::map<int, RoundMsg>& received) {
  const int D = prob.diameter;
  const double w_own = prob.weight_row(prob.agent);

  std::vector<double> wnb;
  std::vector<const Eigen::VectorXd*> s_nb, y_nb, l_nb;
  std::vector<const std::vector<std::uint8_t>*> flood_nb;
  wnb.reserve(prob.neighbours.size());
  for (int j : prob.neighbours) {
    auto it = received.find(j);
    if (it == received.end())
      throw std::invalid_argument("solver_round: missing message from neighbour " +
                                  std::to_string(j + 1));
    wnb.push_back(prob.weight_row(j));
    s_nb.push_back(&it->second.s);
    y_nb.push_back(&it->second.y);
    l_nb.push_back(&it->second.lambda);
    flood_nb.push_back(&it->second.flood);
  }

  // Termination check from the pre-update flood levels: the top level holds
  // the global AND of the convergence flags from `diameter` rounds ago.
  RoundOutcome out;
  if (D > 0) {
    bool all_top = st.flood[D - 1] != 0;
    for (const auto* f : flood_nb) all_top = all_top && ((*f)[D - 1] != 0);
    out.stop = all_top;
  }

  const Eigen::VectorXd u_new = primal_step(prob, st.u, st.s, st.lambda, par);

  const Eigen::VectorXd phi_old = prob.phi.M * st.u + prob.phi.c;
  const Eigen::VectorXd phi_new = prob.phi.M * u_new + prob.phi.c;
  const Eigen::VectorXd g_old = local_constraint_value(prob, st.u);
  const Eigen::VectorXd g_new = local_constraint_value(prob, u_new);

  const Eigen::VectorXd s_new = tracker_update(w_own, st.s, wnb, s_nb, phi_new, phi_old);
  Eigen::VectorXd y_new, lam_new;
  if (st.y.size() > 0) {
    y_new = tracker_update(w_own, st.y, wnb, y_nb, g_new, g_old);
    lam_new = dual_step(w_own, st.lambda, wnb, l_nb, y_new, par.alpha_d, prob.n_agents);
    out.lambda_diff = (lam_new - st.lambda).cwiseAbs().maxCoeff();
  } else {
    y_new = st.y;
    lam_new = st.lambda;
  }
  out.u_diff = (u_new - st.u).cwiseAbs().maxCoeff();
  out.converged_now = check_stop(out.u_diff, out.lambda_diff, par.eps);
  if (D == 0) out.stop = out.converged_now;

  // Shift the flood levels one hop outward.
  std::vector<std::uint8_t> flood_new(st.flood.size(), 0);
  if (D > 0) {
    flood_new[0] = out.converged_now ? 1 : 0;
    for (int d = 1; d < D; ++d) {
      bool acc = st.flood[d - 1] != 0;
      for (const auto* f : flood_nb) acc = acc && ((*f)[d - 1] != 0);
      flood_new[d] = acc ? 1 : 0;
    }
  }

  bool all_seen = out.converged_now;
  for (const auto* f : flood_nb) all_seen = all_seen && (f->empty() || (*f)[0] != 0);

  st.u = u_new;
  st.s = s_new;
  st.y = y_new;
  st.lambda = lam_new;
  st.flood = std::move(flood_new);
  st.converged_local = out.converged_now;
  st.flag_age = all_seen ? st.flag_age + 1 : 0;
  ++st.iter;
  return out;
}

struct InnerResult {
  Eigen::VectorXd u;
  int iterations = 0;
  bool converged = false;
};

/// Runs synchronous rounds until the flooded all-converged signal fires or
/// the iteration cap is hit. `xchg(round, msg)` must block until every peer
/// of the round has deposited and return the neighbours' messages.
template <class XchgFn>
InnerResult inner_loop(const LocalProblem& prob, SolverLocalState& st, const SolverParams& par,
                       XchgFn&& xchg,
                       const std::function<void(int, const SolverLocalState&)>& observer = {}) {
  if (par.p_max < 1) throw std::invalid_argument("inner_loop: p_max must be >= 1");
  InnerResult res;
  for (int p = 1; p <= par.p_max; ++p) {
    const std::map<int, RoundMsg> received = xchg(p - 1, make_msg(st));
    const RoundOutcome out = solver_round(prob, st, par, received);
    if (observer) observer(p, st);
    if (out.stop) {
      res.converged = true;
      break;
    }
  }
  res.u = st.u;
  res.iterations = st.iter;
  return res;
}

}  // namespace dcf::solver
