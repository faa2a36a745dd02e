#pragma once

#include "dcf/model.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace dcf::game {

using model::HorizonMap;
using model::Vec2;
using model::Vec4;

/// Weights of one agent's finite-horizon cost. The centroid term couples the
/// agents through the fleet-average predicted terminal position.
struct CostParams {
  Eigen::Matrix4d Q = Eigen::Matrix4d::Identity();   // running state weight
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();   // running input weight
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();   // terminal weight
  double beta = 1.0;                                 // terminal scale
  double pa = 0.0;                                   // fleet (centroid) weight
  Vec2 po = Vec2::Zero();                            // common target [m]
  int n_agents = 1;
};

/// phi(u) = predicted absolute position at the end of the horizon, as an
/// affine map  phi(u) = M u + c.
struct PhiMap {
  Eigen::Matrix<double, 2, Eigen::Dynamic> M;
  Vec2 c;
};

inline PhiMap phi_map(const HorizonMap& hm, const Vec4& e0, const Vec2& target) {
  PhiMap pm;
  pm.M = hm.S[hm.H].topRows<2>();
  pm.c = target + (hm.Apow[hm.H] * e0).head<2>();
  return pm;
}

inline Vec2 phi(const HorizonMap& hm, const Vec4& e0, const Eigen::VectorXd& u,
                const Vec2& target) {
  if (u.size() != 2 * hm.H) throw std::invalid_argument("phi: bad decision length");
  const auto pm = phi_map(hm, e0, target);
  return pm.M * u + pm.c;
}

/// Fleet average of the per-agent terminal positions. Test/oracle use only;
/// the distributed path always works with the tracker estimate.
inline Vec2 sigma_true(const HorizonMap& hm, const std::vector<Vec4>& e0s,
                       const std::vector<Eigen::VectorXd>& us,
                       const std::vector<Vec2>& targets) {
  if (e0s.size() != us.size() || e0s.size() != targets.size() || e0s.empty())
    throw std::invalid_argument("sigma_true: inconsistent agent data");
  Vec2 acc = Vec2::Zero();
  for (std::size_t i = 0; i < e0s.size(); ++i) acc += phi(hm, e0s[i], us[i], targets[i]);
  return acc / static_cast<double>(e0s.size());
}

/// Finite-horizon cost with the aggregate supplied externally:
///   sum_l e[l]' Q e[l] + u[l]' R u[l]  +  beta e[H]' P e[H]
///   +  (pa/N) |sigma - po|^2.
/// The l = 0 state term is a constant but is kept so reported values match
/// the definition literally.
inline double cost(const HorizonMap& hm, const Vec4& e0, const Eigen::VectorXd& u,
                   const Vec2& sigma, const CostParams& cp) {
  if (u.size() != 2 * hm.H) throw std::invalid_argument("cost: bad decision length");
  double acc = 0.0;
  Vec4 e = e0;
  for (int l = 0; l < hm.H; ++l) {
    const Vec2 ul = u.segment<2>(2 * l);
    acc += e.dot(cp.Q * e) + ul.dot(cp.R * ul);
    e = hm.Ad * e + hm.Bd * ul;
  }
  acc += cp.beta * e.dot(cp.P * e);
  const Vec2 d = sigma - cp.po;
  acc += (cp.pa / cp.n_agents) * d.squaredNorm();
  return acc;
}

/// Gradient of the local cost in the agent's own decision, holding the
/// aggregate at the supplied value, plus the aggregative correction
/// (dsigma/du)' dJ/dsigma = (1/N) M' (2 pa / N)(sigma - po).
inline Eigen::VectorXd pseudo_gradient(const HorizonMap& hm, const Vec4& e0,
                                       const Eigen::VectorXd& u, const Vec2& sigma,
                                       const CostParams& cp, const PhiMap& pm) {
  if (u.size() != 2 * hm.H) throw std::invalid_argument("pseudo_gradient: bad decision length");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
  Vec4 e = e0;
  for (int l = 0; l < hm.H; ++l) {
    // S[0] = 0, so the l = 0 term contributes nothing.
    if (l > 0) g += 2.0 * hm.S[l].transpose() * (cp.Q * e);
    const Vec2 ul = u.segment<2>(2 * l);
    g.segment<2>(2 * l) += 2.0 * (cp.R * ul);
    e = hm.Ad * e + hm.Bd * ul;
  }
  g += 2.0 * cp.beta * hm.S[hm.H].transpose() * (cp.P * e);
  const double n = static_cast<double>(cp.n_agents);
  g += pm.M.transpose() * ((2.0 * cp.pa / (n * n)) * (sigma - cp.po));
  return g;
}

/// Euclidean projection onto the input box [-a_max, a_max]^{2H}.
inline Eigen::VectorXd project_box(Eigen::VectorXd u, double a_max) {
  for (Eigen::Index i = 0; i < u.size(); ++i)
    u(i) = std::clamp(u(i), -a_max, a_max);
  return u;
}

}  // namespace dcf::game
