#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/LU>
#include <cmath>
#include <random>

#include "wip/errors.hpp"
#include "wip/pmp.hpp"

using wip::Multipliers;
using wip::NodeCostate;
using wip::NodeState;
using wip::Torque;
using wip::WipModel;

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

NodeCostate random_costate(std::mt19937_64 & rng, double scale = 1.0)
{
  std::uniform_real_distribution<double> u(-scale, scale);
  NodeCostate c;
  c.zeta = {u(rng), u(rng), u(rng)};
  c.psi = {u(rng), u(rng), u(rng)};
  c.lambda = {u(rng), u(rng), u(rng)};
  return c;
}

NodeState random_state(std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NodeState x;
  x.g = {u(rng), u(rng), 3 * u(rng)};
  x.s = {0.5 * u(rng), 5 * u(rng), 5 * u(rng)};
  x.v = {2 * u(rng), 8 * u(rng), 8 * u(rng)};
  return x;
}

// Block matrices of the adjoint equation assembled from finite differences of
// s -> M(alpha) v and (s, v) -> M(alpha) v - h C(alpha, v).
struct FdBlocks
{
  Mat6 lhs, rhs;
};

FdBlocks fd_blocks(const NodeState & x, double h, const WipModel & m)
{
  auto f = [&](double a, const Eigen::Vector3d & v) -> Eigen::Vector3d {
    return m.mass_matrix(a) * v - h * m.coriolis(a, v);
  };
  const double e = 1e-6;
  const double a = x.s[0];
  Eigen::Matrix3d ds_mv = Eigen::Matrix3d::Zero(), ds_f = Eigen::Matrix3d::Zero(), dv_f;
  ds_mv.col(0) = (m.mass_matrix(a + e) * x.v - m.mass_matrix(a - e) * x.v) / (2 * e);
  ds_f.col(0) = (f(a + e, x.v) - f(a - e, x.v)) / (2 * e);
  for (int j = 0; j < 3; ++j) {
    const Eigen::Vector3d d = e * Eigen::Vector3d::Unit(j);
    dv_f.col(j) = (f(a, x.v + d) - f(a, x.v - d)) / (2 * e);
  }
  FdBlocks b;
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  b.lhs << I, ds_mv.transpose(), h * I, m.mass_matrix(a).transpose();
  b.rhs << I, ds_f.transpose(), Eigen::Matrix3d::Zero(), dv_f.transpose();
  return b;
}

}  // namespace

TEST_CASE("hamiltonian")
{
  const WipModel m;
  const double h = 0.05;
  std::mt19937_64 rng(51);
  const NodeState x = random_state(rng);
  const Torque tau(0.003, -0.007);
  CHECK(wip::hamiltonian(NodeCostate{}, x, tau, wip::kNormal, h, m) == doctest::Approx(-0.5 * h * tau.squaredNorm()));

  NodeState rest = x;
  rest.v.setZero();
  const NodeCostate c = random_costate(rng);
  CHECK(wip::hamiltonian(c, rest, Torque::Zero(), wip::kNormal, h, m) == doctest::Approx(c.psi.dot(rest.s)));

  // gradient in tau against central differences
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int i = 0; i < 100; ++i) {
    const NodeCostate ci = random_costate(rng, 0.02);
    const NodeState xi = random_state(rng);
    const Torque t(u(rng), u(rng));
    const Torque g = wip::hamiltonian_torque_gradient(ci, t, wip::kNormal, h);
    Torque fd;
    for (int j = 0; j < 2; ++j) {
      const double e = 1e-6;
      Torque tp = t, tm = t;
      tp[j] += e;
      tm[j] -= e;
      fd[j] = (wip::hamiltonian(ci, xi, tp, wip::kNormal, h, m) - wip::hamiltonian(ci, xi, tm, wip::kNormal, h, m)) /
              (2 * e);
    }
    REQUIRE((g - fd).lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1e-8, g.lpNorm<Eigen::Infinity>()) + 1e-12);
    CHECK(g[0] == doctest::Approx(-h * t[0] + h * ci.lambda[1]));
  }
}

TEST_CASE("optimal_torque")
{
  const double mu = 0.008;
  Torque t = wip::optimal_torque({9.0, 0.01, -0.002}, mu);
  CHECK(t[0] == mu);
  CHECK(t[1] == -0.002);
  CHECK(wip::optimal_torque({1.0, 0.0, 0.0}, mu).isZero());
  t = wip::optimal_torque({0.0, 1e-9, -1.0}, mu, wip::kAbnormal);
  CHECK(t[0] == mu);
  CHECK(t[1] == -mu);
  CHECK(wip::optimal_torque({0.0, 0.0, 0.0}, mu, wip::kAbnormal).isZero());
}

TEST_CASE("optimal_torque maximizes the hamiltonian over a 201x201 grid")
{
  const WipModel m;
  const double h = 0.05, mu = 0.008;
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double cell = 2 * mu / 200;
  double worst_margin = INFINITY;
  for (int i = 0; i < 100; ++i) {
    NodeCostate c = random_costate(rng);
    c.lambda = {u(rng), 2 * mu * u(rng), 2 * mu * u(rng)};
    const NodeState x = random_state(rng);
    const Torque best = wip::optimal_torque(c.lambda, mu);
    const double h_best = wip::hamiltonian(c, x, best, wip::kNormal, h, m);
    double grid_best = -INFINITY;
    Torque arg;
    for (int a = 0; a <= 200; ++a) {
      for (int b = 0; b <= 200; ++b) {
        const Torque t(-mu + a * cell, -mu + b * cell);
        const double v = wip::hamiltonian(c, x, t, wip::kNormal, h, m);
        if (v > grid_best) {
          grid_best = v;
          arg = t;
        }
      }
    }
    worst_margin = std::min(worst_margin, h_best - grid_best);
    CHECK((arg - best).lpNorm<Eigen::Infinity>() <= cell);
  }
  CHECK(worst_margin >= -1e-12);
}

TEST_CASE("zeta transport")
{
  const WipModel m;
  const double h = 0.05, r = m.params().r_w, d = m.params().d_w;
  const Eigen::Vector3d z(1.0, -2.0, 0.5);
  CHECK(wip::costate_transport_zeta(z, Eigen::Vector3d::Zero(), h, m) == z);

  std::mt19937_64 rng(57);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d zp(u(rng), u(rng), u(rng)), v(u(rng), u(rng), u(rng));
    const Eigen::Vector3d fwd = wip::costate_transport_zeta(zp, v, h, m);
    REQUIRE((wip::costate_transport_zeta_backward(fwd, v, h, m) - zp).lpNorm<Eigen::Infinity>() < 1e-13 * 10);
  }

  const double w = 3.0;
  const Eigen::Vector3d spin(0.0, w, -w);
  const double th = -2.0 * h * r / d * w;
  const Eigen::Vector3d ref = wip::se2::coadjoint({0.0, 0.0, th}, z);
  CHECK((wip::costate_transport_zeta(z, spin, h, m) - ref).norm() < 1e-15);

  // Casimir mu1^2 + mu2^2 under pure rotations
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d zp(u(rng), u(rng), u(rng));
    const double ww = u(rng);
    const Eigen::Vector3d out = wip::costate_transport_zeta(zp, {u(rng), ww, -ww}, h, m);
    REQUIRE(std::abs(out.head<2>().norm() - zp.head<2>().norm()) < 1e-13);
    REQUIRE(std::abs(wip::se2::coadjoint({0.0, 0.0, u(rng)}, zp).head<2>().norm() - zp.head<2>().norm()) < 1e-13);
  }
}

TEST_CASE("adjoint_step solves the block equation")
{
  const WipModel m;
  const double h = 0.05;
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const NodeState x = random_state(rng);
    const NodeCostate prev = random_costate(rng);
    Multipliers mult;
    mult.sigma = -std::abs(u(rng));
    mult.beta = -Eigen::Vector3d(u(rng), u(rng), u(rng)).cwiseAbs();
    const NodeCostate next = wip::adjoint_step(prev, x, mult, h, m);

    // substituted back
    const Vec6 res = wip::adjoint_equation_residual(prev, next, x, mult, h, m);
    Vec6 pn;
    pn << next.psi, next.lambda;
    REQUIRE(res.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, pn.lpNorm<Eigen::Infinity>()));

    // dense LU on finite-difference blocks
    const FdBlocks b = fd_blocks(x, h, m);
    Vec6 forcing, pp;
    forcing << mult.sigma * x.s[0], 0.0, 0.0, -h * m.connection().transpose() * next.zeta + mult.beta.cwiseProduct(x.v);
    pp << prev.psi, prev.lambda;
    const Vec6 ref = b.lhs.fullPivLu().solve(b.rhs * pp - forcing);
    REQUIRE((ref - pn).lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, pn.lpNorm<Eigen::Infinity>()));
    CHECK((next.zeta - wip::costate_transport_zeta(prev.zeta, x.v, h, m)).norm() == 0.0);
  }
}

TEST_CASE("adjoint_step on a model without tilt coupling")
{
  // c_ax = 0: M is constant, so psi^k = psi^{k-1} + D_s(-h C)^T lambda^{k-1} - (sigma alpha, 0, 0)
  // and lambda^k = M^-T (D_v(M v - h C)^T lambda^{k-1} - h psi^k + h A^T zeta^k - beta .* v)
  wip::WipParams p;
  wip::ModelCoefficients c = wip::coefficients_from_params(p);
  c.c_ax = 0.0;
  p.I_Bzz = p.I_Bxx + p.m_b * p.b * p.b;  // constant yaw inertia
  const WipModel m(p, c);
  const double h = 0.05;
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const NodeState x = random_state(rng);
    const NodeCostate prev = random_costate(rng);
    Multipliers mult;
    mult.sigma = -std::abs(u(rng));
    mult.beta = -Eigen::Vector3d(u(rng), u(rng), u(rng)).cwiseAbs();
    const NodeCostate next = wip::adjoint_step(prev, x, mult, h, m);
    const Eigen::Matrix3d mm = m.mass_matrix(x.s[0]);
    REQUIRE((m.mass_matrix(x.s[0] + 0.3) - mm).norm() < 1e-15 * mm.norm());
    const double dca = -h * m.d_coriolis_d_alpha(x.s[0], x.v)[0];
    Eigen::Vector3d psi = prev.psi;
    psi[0] += dca * prev.lambda[0] - mult.sigma * x.s[0];
    const Eigen::Matrix3d dv = mm - h * m.d_coriolis_d_v(x.s[0], x.v);
    const Eigen::Vector3d lam = mm.transpose().lu().solve(dv.transpose() * prev.lambda - h * psi +
                                                          h * m.connection().transpose() * next.zeta -
                                                          mult.beta.cwiseProduct(x.v));
    REQUIRE((next.psi - psi).lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, psi.norm()));
    REQUIRE((next.lambda - lam).lpNorm<Eigen::Infinity>() < 1e-9 * std::max(1.0, lam.norm()));
  }
}

TEST_CASE("tilt multiplier only enters the psi forcing")
{
  const WipModel m;
  std::mt19937_64 rng(67);
  const NodeState x = random_state(rng);
  const NodeCostate prev = random_costate(rng);
  Multipliers a, b;
  b.sigma = -0.7;
  const auto ba = wip::adjoint_blocks(prev, prev.zeta, x, a, 0.05, m);
  const auto bb = wip::adjoint_blocks(prev, prev.zeta, x, b, 0.05, m);
  CHECK(ba.lhs == bb.lhs);
  CHECK(ba.rhs == bb.rhs);
  const Vec6 diff = bb.forcing - ba.forcing;
  CHECK(diff[0] == doctest::Approx(-0.7 * x.s[0]));
  CHECK(diff.tail<5>().isZero());
}

TEST_CASE("transversality and complementarity")
{
  NodeCostate c;
  c.psi = {5, 0, 0};
  CHECK(wip::transversality_residual(c).isZero());
  c.psi = {0, 1, -2};
  CHECK(wip::transversality_residual(c) == Eigen::Vector2d(1, -2));

  CHECK(wip::fischer_burmeister(1.0, 0.25, 0.0) == doctest::Approx(1.25 - std::sqrt(1.0625)));
  CHECK(wip::fischer_burmeister(1.0, 0.25, 0.0) == doctest::Approx(0.21926).epsilon(1e-4));
  CHECK(wip::fischer_burmeister(0.0, 3.0, 0.0) == 0.0);
  CHECK(wip::fischer_burmeister(2.0, 0.0, 0.0) == 0.0);
  CHECK(wip::fischer_burmeister(1e-3, 1e-3, 1e-2) == doctest::Approx(2e-3 - std::sqrt(2e-6 + 1e-4)));

  const wip::Bounds bounds;
  NodeState x;
  x.s[0] = 0.2;
  Multipliers mult;
  CHECK(wip::complementarity_residual(x, mult, bounds, 0.0).isZero());
  x.s[0] = bounds.a;
  mult.sigma = -1.0;
  CHECK(wip::complementarity_residual(x, mult, bounds, 0.0)[0] == 0.0);
  x.s[0] = 0.0;
  CHECK(wip::complementarity_residual(x, mult, bounds, 0.0)[0] == doctest::Approx(0.21926).epsilon(1e-4));

  // property: zero exactly on the complementarity set with non-positive multipliers
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 2000; ++i) {
    NodeState y;
    Multipliers mm;
    const bool active = coin(rng);
    const bool good = coin(rng);
    y.s[0] = active ? bounds.a : bounds.a * u(rng) * 0.99;
    mm.sigma = active ? -(0.1 + u(rng)) : 0.0;
    if (!good) {
      switch (i % 3) {
        case 0: mm.sigma = 0.1 + u(rng); break;                         // wrong sign
        case 1: y.s[0] = bounds.a * (1.01 + u(rng)); break;             // infeasible
        default: y.s[0] = 0.5 * bounds.a; mm.sigma = -(0.1 + u(rng));  // slack and multiplier both nonzero
      }
    }
    const double r = wip::complementarity_residual(y, mm, bounds, 0.0)[0];
    if (good) {
      REQUIRE(r == 0.0);
    } else {
      REQUIRE(r != 0.0);
    }
  }
}

TEST_CASE("kkt of the resting problem is zero at zero costates")
{
  const WipModel m;
  wip::OcProblem p;
  p.N = 20;
  p.initial.g = {1.0, 2.0, 0.5};
  p.final_g = p.initial.g;
  const wip::IntegratorConfig cfg;
  std::vector<NodeState> traj(21, p.initial);
  std::vector<NodeCostate> cost(21);
  std::vector<Multipliers> mult(21);
  std::vector<Torque> tau(20, Torque::Zero());
  CHECK(wip::kkt_residual(traj, cost, mult, tau, p, m, cfg) == 0.0);
  tau[3] = Torque(1e-3, 0.0);
  CHECK(wip::kkt_residual(traj, cost, mult, tau, p, m, cfg) > 0.0);
  CHECK_THROWS_AS(wip::kkt_residual(traj, cost, mult, std::vector<Torque>(3), p, m, cfg), wip::Error);
}
