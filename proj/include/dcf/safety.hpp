#pragma once

#include "dcf/model.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace dcf::safety {

using model::HorizonMap;
using model::Vec2;
using model::Vec4;

/// Norm-1 (diamond) unsafe region and decrement rate of the discrete-time
/// exponential barrier condition h[k+1] - h[k] >= -gamma h[k].
struct CbfParams {
  double r1 = 0.5;    // unsafe radius along x [m]
  double r2 = 0.25;   // unsafe radius along y [m]
  double gamma = 0.1; // decrement rate, in (0, 1]
};

/// h(dp) = |dp_x|/r1 + |dp_y|/r2 - 1. Nonnegative outside the diamond.
inline double barrier_value(const Vec2& dp, const CbfParams& p) {
  return std::abs(dp.x()) / p.r1 + std::abs(dp.y()) / p.r2 - 1.0;
}

inline bool decrement_satisfied(double h_next, double h_now, double gamma) {
  return h_next - h_now >= -gamma * h_now;
}

/// Branch of each absolute value, fixed at a linearization point. With the
/// signs held, the barrier is affine in the relative position and never
/// exceeds the true barrier.
struct OrthantSigns {
  double sx = 1.0;
  double sy = 1.0;
};

inline OrthantSigns fix_orthant(const Vec2& p_i, const Vec2& p_j) {
  const Vec2 dp = p_i - p_j;
  OrthantSigns s;
  s.sx = dp.x() < 0.0 ? -1.0 : 1.0;  // ties resolve to +1
  s.sy = dp.y() < 0.0 ? -1.0 : 1.0;
  return s;
}

inline OrthantSigns fix_orthant(const model::AgentState& zi, const model::AgentState& zj) {
  return fix_orthant(zi.p, zj.p);
}

/// Sign-fixed barrier; equals barrier_value whenever dp lies in the orthant
/// the signs were fixed on.
inline double barrier_linear(const Vec2& dp, const OrthantSigns& s, const CbfParams& p) {
  return s.sx * dp.x() / p.r1 + s.sy * dp.y() / p.r2 - 1.0;
}

/// One horizon row of the pairwise decrement condition, written as
///   on_ui . u_i + on_uj . u_j <= rhs.
struct PairRow {
  Eigen::RowVectorXd on_ui;
  Eigen::RowVectorXd on_uj;
  double rhs = 0.0;
};

/// Linear rows enforcing h[k+1] >= (1 - gamma) h[k], k = 0..H-1, for one
/// ordered pair (i, j). Positions over the horizon are affine in the two
/// decisions through the rollout sensitivities; the barrier is affine under
/// the fixed signs. Stationary reference positions come from the zero-input
/// rollout of each agent's current error state.
inline std::vector<PairRow> assemble_pair_constraints(
    const HorizonMap& hm, const Vec4& e_i0, const Vec4& e_j0, const OrthantSigns& signs,
    const CbfParams& cbf, const Vec2& target_i, const Vec2& target_j) {
  const int H = hm.H;
  const Eigen::RowVector2d w(signs.sx / cbf.r1, signs.sy / cbf.r2);

  // dq[l]: relative position at step l under zero input.
  std::vector<Vec2> dq(H + 1);
  for (int l = 0; l <= H; ++l) {
    const Vec2 qi = target_i + (hm.Apow[l] * e_i0).head<2>();
    const Vec2 qj = target_j + (hm.Apow[l] * e_j0).head<2>();
    dq[l] = qi - qj;
  }

  std::vector<PairRow> rows(H);
  const double keep = 1.0 - cbf.gamma;
  for (int k = 0; k < H; ++k) {
    const Eigen::Matrix<double, 2, Eigen::Dynamic> Tk = hm.S[k].topRows<2>();
    const Eigen::Matrix<double, 2, Eigen::Dynamic> Tk1 = hm.S[k + 1].topRows<2>();
    const Eigen::RowVectorXd coeff = w * (Tk1 - keep * Tk);
    rows[k].on_ui = -coeff;
    rows[k].on_uj = coeff;
    rows[k].rhs = w.dot(dq[k + 1] - keep * dq[k]) - cbf.gamma;
  }
  return rows;
}

/// Scales each row to unit joint-coefficient norm. Preserves the feasible
/// set while keeping the dual iteration well conditioned regardless of how
/// small the input-to-position sensitivities are.
inline void normalize_rows(std::vector<PairRow>& rows) {
  for (auto& row : rows) {
    const double norm = std::sqrt(row.on_ui.squaredNorm() + row.on_uj.squaredNorm());
    if (norm > 0.0) {
      row.on_ui /= norm;
      row.on_uj /= norm;
      row.rhs /= norm;
    }
  }
}

struct RowTag {
  int i = 0;  // pair members, 0-based, i < j
  int j = 0;
  int k = 0;  // horizon step of the decrement condition
};

/// Agent-local slice of the stacked pairwise rows: coefficients on the
/// agent's own decision plus its share of the constants. Rows for pairs the
/// agent is not part of are identically zero; every agent carries the same
/// row count and ordering.
struct CoupledConstraintBlock {
  Eigen::MatrixXd A;        // m x 2H
  Eigen::VectorXd b;        // m
  std::vector<RowTag> tags; // one per row
};

struct TaggedPairRows {
  int i = 0;
  int j = 0;
  std::vector<PairRow> rows;
};

/// Split stacked pair rows into per-agent blocks. The constant term of each
/// row is shared half and half between the two agents of the pair, so the
/// blocks reproduce every pairwise inequality when summed over agents.
inline std::vector<CoupledConstraintBlock> split_blocks(
    const std::vector<TaggedPairRows>& pairs, int n_agents) {
  int m = 0;
  int width = -1;
  for (const auto& pr : pairs) {
    m += static_cast<int>(pr.rows.size());
    for (const auto& row : pr.rows) {
      if (width < 0) width = static_cast<int>(row.on_ui.size());
      if (row.on_ui.size() != width || row.on_uj.size() != width)
        throw std::invalid_argument("split_blocks: inconsistent row widths");
    }
  }
  if (width < 0) width = 0;

  std::vector<CoupledConstraintBlock> blocks(n_agents);
  for (auto& b : blocks) {
    b.A = Eigen::MatrixXd::Zero(m, width);
    b.b = Eigen::VectorXd::Zero(m);
    b.tags.reserve(m);
  }
  int r = 0;
  for (const auto& pr : pairs) {
    if (pr.i < 0 || pr.j < 0 || pr.i >= n_agents || pr.j >= n_agents || pr.i == pr.j)
      throw std::invalid_argument("split_blocks: bad pair indices");
    for (int k = 0; k < static_cast<int>(pr.rows.size()); ++k, ++r) {
      const auto& row = pr.rows[k];
      blocks[pr.i].A.row(r) = row.on_ui;
      blocks[pr.j].A.row(r) = row.on_uj;
      blocks[pr.i].b(r) = row.rhs / 2.0;
      blocks[pr.j].b(r) = row.rhs / 2.0;
      for (int a = 0; a < n_agents; ++a) blocks[a].tags.push_back({pr.i, pr.j, k});
    }
  }
  return blocks;
}

/// One post-hoc audit sample: the barrier value of a pair at a time index.
struct SafeSetCheck {
  int i = 0;
  int j = 0;
  int k = 0;
  double value = 0.0;
};

}  // namespace dcf::safety
