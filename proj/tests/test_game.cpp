#include <catch2/catch_amalgamated.hpp>

#include "dcf/game.hpp"

#include <random>

using namespace dcf;
using Catch::Approx;

namespace {

struct RandomInstance {
  model::AgentModel m;
  model::HorizonMap hm;
  game::CostParams cp;
  std::vector<model::Vec4> e0s;
  std::vector<Eigen::VectorXd> us;
  std::vector<model::Vec2> targets;
};

RandomInstance make_instance(std::mt19937& rng, int n_agents, int H) {
  std::uniform_real_distribution<double> uts(0.05, 0.5), ur(-2.0, 2.0), uw(0.5, 5.0);
  RandomInstance inst;
  inst.m = model::discretize(uts(rng));
  inst.hm = model::make_horizon_map(inst.m, H);
  inst.cp.Q = model::Vec4(uw(rng), uw(rng), uw(rng), uw(rng)).asDiagonal();
  inst.cp.R = model::Vec2(uw(rng), uw(rng)).asDiagonal();
  inst.cp.P = model::solve_dare(inst.m.Ad, inst.m.Bd, inst.cp.Q, inst.cp.R);
  inst.cp.beta = uw(rng);
  inst.cp.pa = uw(rng);
  inst.cp.po = model::Vec2(ur(rng), ur(rng));
  inst.cp.n_agents = n_agents;
  for (int i = 0; i < n_agents; ++i) {
    inst.e0s.push_back(model::Vec4(ur(rng), ur(rng), ur(rng), ur(rng)));
    Eigen::VectorXd u(2 * H);
    for (int j = 0; j < u.size(); ++j) u(j) = ur(rng);
    inst.us.push_back(u);
    inst.targets.push_back(model::Vec2(ur(rng), ur(rng)));
  }
  return inst;
}

}  // namespace

TEST_CASE("phi: predicted terminal position") {
  const auto m = model::discretize(0.2);
  const auto hm = model::make_horizon_map(m, 3);
  const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(6);

  // At rest on target: phi is the target itself.
  REQUIRE(game::phi(hm, model::Vec4::Zero(), u0, {0.3, -0.7}).isApprox(model::Vec2(0.3, -0.7)));

  // Stationary off-target agent keeps its initial position.
  model::Vec4 e0;
  e0 << 0.0, 2.0, 0.0, 0.0;
  const auto p = game::phi(hm, e0, u0, {0.0, -1.0});
  REQUIRE(p.x() == Approx(0.0).margin(1e-15));
  REQUIRE(p.y() == Approx(1.0).margin(1e-14));
}

TEST_CASE("phi map matches finite differences and is affine") {
  std::mt19937 rng(19);
  auto inst = make_instance(rng, 1, 4);
  const auto pm = game::phi_map(inst.hm, inst.e0s[0], inst.targets[0]);
  const auto& u = inst.us[0];

  const double h = 1e-5;
  for (int j = 0; j < u.size(); ++j) {
    Eigen::VectorXd up = u, um = u;
    up(j) += h;
    um(j) -= h;
    const model::Vec2 fd =
        (game::phi(inst.hm, inst.e0s[0], up, inst.targets[0]) -
         game::phi(inst.hm, inst.e0s[0], um, inst.targets[0])) /
        (2.0 * h);
    const model::Vec2 an = pm.M.col(j);
    const double scale = std::max(1.0, an.cwiseAbs().maxCoeff());
    REQUIRE((fd - an).cwiseAbs().maxCoeff() / scale < 1e-9);
  }

  // Affinity: phi(a u + (1-a) w) = a phi(u) + (1-a) phi(w).
  std::uniform_real_distribution<double> ur(-2.0, 2.0);
  Eigen::VectorXd w(u.size());
  for (int j = 0; j < w.size(); ++j) w(j) = ur(rng);
  const double alpha = 0.37;
  const model::Vec2 lhs =
      game::phi(inst.hm, inst.e0s[0], (alpha * u + (1 - alpha) * w).eval(), inst.targets[0]);
  const model::Vec2 rhs = alpha * game::phi(inst.hm, inst.e0s[0], u, inst.targets[0]) +
                          (1 - alpha) * game::phi(inst.hm, inst.e0s[0], w, inst.targets[0]);
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sigma_true averages the per-agent maps") {
  const auto m = model::discretize(0.2);
  const auto hm = model::make_horizon_map(m, 3);

  // Symmetric start at rest, zero input: centroid of the four positions.
  std::vector<model::Vec2> starts = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  std::vector<model::Vec2> targets = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};
  std::vector<model::Vec4> e0s;
  std::vector<Eigen::VectorXd> us;
  for (int i = 0; i < 4; ++i) {
    e0s.push_back(model::to_error({starts[i], {0, 0}, 0}, targets[i]).e);
    us.push_back(Eigen::VectorXd::Zero(6));
  }
  REQUIRE(game::sigma_true(hm, e0s, us, targets).cwiseAbs().maxCoeff() <= 1e-14);

  // N = 1: sigma equals the single agent's phi.
  std::mt19937 rng(3);
  auto inst = make_instance(rng, 1, 3);
  const auto s1 = game::sigma_true(inst.hm, inst.e0s, inst.us, inst.targets);
  REQUIRE(s1.isApprox(game::phi(inst.hm, inst.e0s[0], inst.us[0], inst.targets[0])));

  // Random instance: matches the mean of per-agent phi.
  auto multi = make_instance(rng, 5, 2);
  model::Vec2 mean = model::Vec2::Zero();
  for (int i = 0; i < 5; ++i)
    mean += game::phi(multi.hm, multi.e0s[i], multi.us[i], multi.targets[i]);
  mean /= 5.0;
  const auto sig = game::sigma_true(multi.hm, multi.e0s, multi.us, multi.targets);
  REQUIRE((sig - mean).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("cost: hand-checked values") {
  const auto m = model::discretize(0.2);

  // Zero error, zero input, aggregate on the common target: zero cost.
  {
    const auto hm = model::make_horizon_map(m, 3);
    game::CostParams cp;
    cp.pa = 1.0;
    cp.po = {0.5, 0.5};
    REQUIRE(game::cost(hm, model::Vec4::Zero(), Eigen::VectorXd::Zero(6), cp.po, cp) == 0.0);
  }

  // H = 1, unit weights: e[0]'e[0] + e[1]'e[1] = 2 for a pure position error.
  {
    const auto hm = model::make_horizon_map(m, 1);
    game::CostParams cp;  // Q = R = P = I, beta = 1, pa = 0
    model::Vec4 e0;
    e0 << 1, 0, 0, 0;
    const double j = game::cost(hm, e0, Eigen::VectorXd::Zero(2), {0.0, 0.0}, cp);
    REQUIRE(j == Approx(2.0).margin(1e-14));
  }

  // The centroid term scales linearly in pa.
  {
    const auto hm = model::make_horizon_map(m, 2);
    std::mt19937 rng(23);
    auto inst = make_instance(rng, 3, 2);
    const model::Vec2 sigma(0.4, -0.2);
    auto cp0 = inst.cp;
    cp0.pa = 0.0;
    auto cp1 = inst.cp;
    cp1.pa = 1.3;
    auto cp2 = inst.cp;
    cp2.pa = 2.6;
    const double base = game::cost(inst.hm, inst.e0s[0], inst.us[0], sigma, cp0);
    const double c1 = game::cost(inst.hm, inst.e0s[0], inst.us[0], sigma, cp1) - base;
    const double c2 = game::cost(inst.hm, inst.e0s[0], inst.us[0], sigma, cp2) - base;
    REQUIRE(c2 == Approx(2.0 * c1).epsilon(1e-12));
  }
}

TEST_CASE("cost is midpoint convex in the decision") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ur(-2.0, 2.0);
  auto inst = make_instance(rng, 1, 3);
  const model::Vec2 sigma(ur(rng), ur(rng));
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a(j) = ur(rng);
      b(j) = ur(rng);
    }
    const double mid = game::cost(inst.hm, inst.e0s[0], ((a + b) / 2.0).eval(), sigma, inst.cp);
    const double avg = 0.5 * game::cost(inst.hm, inst.e0s[0], a, sigma, inst.cp) +
                       0.5 * game::cost(inst.hm, inst.e0s[0], b, sigma, inst.cp);
    REQUIRE(mid <= avg + 1e-12);
  }
}

TEST_CASE("pseudo_gradient matches finite differences") {
  std::mt19937 rng(47);

  // pa = 0: plain gradient of the local cost.
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = make_instance(rng, 1, 3);
    inst.cp.pa = 0.0;
    const auto pm = game::phi_map(inst.hm, inst.e0s[0], inst.targets[0]);
    const model::Vec2 sigma(0.1, 0.2);
    const auto g =
        game::pseudo_gradient(inst.hm, inst.e0s[0], inst.us[0], sigma, inst.cp, pm);
    const double h = 1e-6;
    for (int j = 0; j < g.size(); ++j) {
      Eigen::VectorXd up = inst.us[0], um = inst.us[0];
      up(j) += h;
      um(j) -= h;
      const double fd = (game::cost(inst.hm, inst.e0s[0], up, sigma, inst.cp) -
                         game::cost(inst.hm, inst.e0s[0], um, sigma, inst.cp)) /
                        (2.0 * h);
      REQUIRE(fd == Approx(g(j)).epsilon(1e-6).margin(1e-8));
    }
  }

  // Full pseudo-gradient: differentiate through the true aggregate with the
  // other agents frozen.
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = make_instance(rng, 4, 2);
    const int i = 0;
    const auto pm = game::phi_map(inst.hm, inst.e0s[i], inst.targets[i]);
    const auto sigma = game::sigma_true(inst.hm, inst.e0s, inst.us, inst.targets);
    const auto g =
        game::pseudo_gradient(inst.hm, inst.e0s[i], inst.us[i], sigma, inst.cp, pm);
    const double h = 1e-6;
    for (int j = 0; j < g.size(); ++j) {
      auto up = inst.us, um = inst.us;
      up[i](j) += h;
      um[i](j) -= h;
      const double fp = game::cost(inst.hm, inst.e0s[i], up[i],
                                   game::sigma_true(inst.hm, inst.e0s, up, inst.targets),
                                   inst.cp);
      const double fm = game::cost(inst.hm, inst.e0s[i], um[i],
                                   game::sigma_true(inst.hm, inst.e0s, um, inst.targets),
                                   inst.cp);
      const double fd = (fp - fm) / (2.0 * h);
      REQUIRE(fd == Approx(g(j)).epsilon(1e-6).margin(1e-8));
    }
  }
}

TEST_CASE("pseudo_gradient vanishes at the unconstrained optimum (pa = 0)") {
  std::mt19937 rng(53);
  auto inst = make_instance(rng, 1, 3);
  inst.cp.pa = 0.0;
  const auto pm = game::phi_map(inst.hm, inst.e0s[0], inst.targets[0]);

  // Solve the normal equations for the quadratic minimizer.
  const int n = 6;
  Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int l = 1; l < inst.hm.H; ++l) {
    Hm += inst.hm.S[l].transpose() * inst.cp.Q * inst.hm.S[l];
    rhs -= inst.hm.S[l].transpose() * inst.cp.Q * (inst.hm.Apow[l] * inst.e0s[0]);
  }
  Hm += inst.cp.beta * inst.hm.S[inst.hm.H].transpose() * inst.cp.P * inst.hm.S[inst.hm.H];
  rhs -= inst.cp.beta * inst.hm.S[inst.hm.H].transpose() *
         (inst.cp.P * (inst.hm.Apow[inst.hm.H] * inst.e0s[0]));
  for (int l = 0; l < inst.hm.H; ++l)
    Hm.block<2, 2>(2 * l, 2 * l) += inst.cp.R;
  const Eigen::VectorXd ustar = Hm.ldlt().solve(rhs);

  const auto g = game::pseudo_gradient(inst.hm, inst.e0s[0], ustar, {0, 0}, inst.cp, pm);
  REQUIRE(g.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("project_box clamps, is idempotent and non-expansive") {
  Eigen::VectorXd u(6);
  u << 3.0, -5.0, 0.0, 1.0, -1.0, 2.0;
  const auto p = game::project_box(u, 2.0);
  REQUIRE(p(0) == 2.0);
  REQUIRE(p(1) == -2.0);
  REQUIRE(p(2) == 0.0);
  REQUIRE(p(5) == 2.0);

  Eigen::VectorXd inside(4);
  inside << 0.5, -1.2, 0.0, 1.9;
  REQUIRE(game::project_box(inside, 2.0) == inside);
  REQUIRE(game::project_box(p, 2.0) == p);

  std::mt19937 rng(61);
  std::uniform_real_distribution<double> ur(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a(j) = ur(rng);
      b(j) = ur(rng);
    }
    const double lhs = (game::project_box(a, 2.0) - game::project_box(b, 2.0)).norm();
    REQUIRE(lhs <= (a - b).norm() + 1e-14);
  }
}

TEST_CASE("project_box beats a dense grid sample of the box") {
  std::mt19937 rng(67);
  std::uniform_real_distribution<double> ur(-4.0, 4.0);
  const double a_max = 2.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd u(2);
    u << ur(rng), ur(rng);
    const auto p = game::project_box(u, a_max);
    double best = (p - u).norm();
    for (int i = 0; i <= 40; ++i) {
      for (int j = 0; j <= 40; ++j) {
        Eigen::VectorXd cand(2);
        cand << -a_max + i * 0.1, -a_max + j * 0.1;
        REQUIRE(best <= (cand - u).norm() + 1e-12);
      }
    }
  }
}
