#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcf::model {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

/// Planar double integrator discretized under zero-order hold.
/// State is [px py vx vy], input is the planar acceleration [ax ay].
struct AgentModel {
  Mat4 Ad;
  Mat42 Bd;
  double ts = 0.0;     // sample time [s]
  double a_max = 0.0;  // per-axis acceleration bound [m/s^2]
};

/// Exact ZOH discretization of p'' = a with sample time ts.
inline AgentModel discretize(double ts, double a_max = 2.0) {
  if (!(ts > 0.0)) throw std::invalid_argument("discretize: sample time must be > 0");
  if (!(a_max > 0.0)) throw std::invalid_argument("discretize: a_max must be > 0");
  AgentModel m;
  m.ts = ts;
  m.a_max = a_max;
  m.Ad << 1, 0, ts, 0,
          0, 1, 0, ts,
          0, 0, 1, 0,
          0, 0, 0, 1;
  const double h = ts * ts / 2.0;
  m.Bd << h, 0,
          0, h,
          ts, 0,
          0, ts;
  return m;
}

struct AgentState {
  Vec2 p = Vec2::Zero();  // position [m]
  Vec2 v = Vec2::Zero();  // velocity [m/s]
  int k = 0;              // discrete-time index

  Vec4 z() const {
    Vec4 out;
    out << p, v;
    return out;
  }
  static AgentState from_z(const Vec4& z, int k) {
    return AgentState{z.head<2>(), z.tail<2>(), k};
  }
};

inline AgentState step(const AgentModel& m, const AgentState& z, const Vec2& a) {
  if (!a.allFinite()) throw std::invalid_argument("step: non-finite control input");
  const Vec4 zn = m.Ad * z.z() + m.Bd * a;
  return AgentState::from_z(zn, z.k + 1);
}

/// State expressed relative to a fixed target position (velocity target is zero).
struct ErrorState {
  Vec4 e = Vec4::Zero();
};

inline ErrorState to_error(const AgentState& z, const Vec2& target) {
  ErrorState es;
  es.e << z.p - target, z.v;
  return es;
}

inline AgentState from_error(const ErrorState& es, const Vec2& target, int k = 0) {
  return AgentState{es.e.head<2>() + target, es.e.tail<2>(), k};
}

/// Constant sensitivity data for an H-step horizon:
///   e[l] = Apow[l] * e0 + S[l] * u,   u = [a[0]; ...; a[H-1]] in R^{2H}.
/// S[0] is identically zero; S[l] has block columns Ad^{l-1-j} Bd for j < l.
struct HorizonMap {
  int H = 0;
  Mat4 Ad;
  Mat42 Bd;
  std::vector<Mat4> Apow;                                    // 0..H
  std::vector<Eigen::Matrix<double, 4, Eigen::Dynamic>> S;   // 0..H, each 4 x 2H
};

inline HorizonMap make_horizon_map(const AgentModel& m, int H) {
  if (H < 1) throw std::invalid_argument("make_horizon_map: horizon must be >= 1");
  HorizonMap hm;
  hm.H = H;
  hm.Ad = m.Ad;
  hm.Bd = m.Bd;
  hm.Apow.resize(H + 1);
  hm.S.resize(H + 1);
  hm.Apow[0] = Mat4::Identity();
  hm.S[0] = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, 2 * H);
  for (int l = 0; l < H; ++l) {
    hm.Apow[l + 1] = m.Ad * hm.Apow[l];
    hm.S[l + 1] = m.Ad * hm.S[l];
    hm.S[l + 1].block<4, 2>(0, 2 * l) = m.Bd;
  }
  return hm;
}

/// Error-coordinate rollout; returns H+1 states e[0..H].
inline std::vector<Vec4> rollout(const AgentModel& m, const Vec4& e0,
                                 const Eigen::VectorXd& u, int H) {
  if (u.size() != 2 * H)
    throw std::invalid_argument("rollout: decision vector must have 2*H entries");
  std::vector<Vec4> es(H + 1);
  es[0] = e0;
  for (int l = 0; l < H; ++l) es[l + 1] = m.Ad * es[l] + m.Bd * u.segment<2>(2 * l);
  return es;
}

inline Eigen::MatrixXd dare_residual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                     const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
  const Eigen::MatrixXd next =
      Q + A.transpose() * P * A -
      A.transpose() * P * B * BtPB.ldlt().solve(B.transpose() * P * A);
  return P - next;
}

/// Discrete algebraic Riccati equation solved by value iteration from P = Q.
/// Stops when the iterate change falls below step_tol (inf norm).
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  int max_iters = 10000, double step_tol = 1e-12) {
  if (A.rows() != A.cols() || A.rows() != B.rows() || Q.rows() != A.rows() ||
      Q.rows() != Q.cols() || R.rows() != B.cols() || R.rows() != R.cols())
    throw std::invalid_argument("solve_dare: inconsistent matrix dimensions");
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
    Eigen::MatrixXd Pn =
        Q + A.transpose() * P * A -
        A.transpose() * P * B * BtPB.ldlt().solve(B.transpose() * P * A);
    Pn = 0.5 * (Pn + Pn.transpose().eval());  // keep the iterate symmetric
    const double change = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (change < step_tol) return P;
  }
  const double res = dare_residual(P, A, B, Q, R).cwiseAbs().maxCoeff();
  throw std::runtime_error("solve_dare: no convergence after " + std::to_string(max_iters) +
                           " iterations, residual " + std::to_string(res));
}

}  // namespace dcf::model
