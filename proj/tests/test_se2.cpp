#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles/matrix_exp.hpp"
#include "wip/errors.hpp"
#include "wip/se2.hpp"

using wip::GroupElement;
namespace se2 = wip::se2;

namespace {

void check_near(const Eigen::Vector3d & a, const Eigen::Vector3d & b, double tol)
{
  for (int i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) < tol);
}

double max_diff(const Eigen::Vector3d & a, const Eigen::Vector3d & b) { return (a - b).lpNorm<Eigen::Infinity>(); }

}  // namespace

TEST_CASE("compose and inverse")
{
  const GroupElement g{1.0, 2.0, 0.3};
  CHECK(se2::compose(GroupElement::identity(), g) == g);
  CHECK(se2::compose(g, GroupElement::identity()) == g);

  const GroupElement q = se2::compose({0.0, 0.0, M_PI / 2}, {1.0, 0.0, 0.0});
  CHECK(max_diff(q.vector(), {0.0, 1.0, M_PI / 2}) < 1e-15);

  const GroupElement p{1.0, 1.0, M_PI / 4};
  CHECK(max_diff(se2::compose(p, se2::inverse(p)).vector(), Eigen::Vector3d::Zero()) < 1e-15);

  CHECK(se2::inverse(GroupElement::identity()).vector().isZero());
  CHECK(max_diff(se2::inverse({1.0, 0.0, 0.0}).vector(), {-1.0, 0.0, 0.0}) == 0.0);
  CHECK(max_diff(se2::inverse({0.0, 0.0, 0.7}).vector(), {0.0, 0.0, -0.7}) == 0.0);
}

TEST_CASE("compose is associative")
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const GroupElement a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
    const auto l = se2::compose(se2::compose(a, b), c);
    const auto r = se2::compose(a, se2::compose(b, c));
    REQUIRE(max_diff(l.vector(), r.vector()) < 1e-13);
  }
}

TEST_CASE("exp examples")
{
  CHECK(se2::exp({0.0, 0.0, 0.0}, 0.05) == GroupElement::identity());
  CHECK(max_diff(se2::exp({1.0, 0.0, 0.0}, 1.0).vector(), {1.0, 0.0, 0.0}) == 0.0);
  const Eigen::Vector3d xi(M_PI / 2, 0.0, M_PI / 2);
  check_near(se2::exp(xi, 1.0).vector(), {1.0, 1.0, M_PI / 2}, 1e-14);
  check_near(se2::exp(xi, 1.0).vector(), oracle::planar_exp(xi, 1.0), 1e-13);
}

TEST_CASE("exp matches the homogeneous matrix exponential")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double special[] = {0.0, 1e-12, -1e-12, 1e-6, -1e-6, 1e-4, -1e-4};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d xi(u(rng), u(rng), u(rng));
    if (i < 350) xi[2] = special[i % 7];
    const double t = 0.5 + 0.5 * std::abs(u(rng));
    worst = std::max(worst, max_diff(se2::exp(xi, t).vector(), oracle::planar_exp(xi, t)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("log examples and domain")
{
  CHECK(se2::log(GroupElement::identity()).isZero());
  CHECK(max_diff(se2::log({1.0, 0.0, 0.0}), {1.0, 0.0, 0.0}) == 0.0);
  CHECK(max_diff(se2::log({1.0, 1.0, M_PI / 2}), {M_PI / 2, 0.0, M_PI / 2}) < 1e-14);
  // numeric inverse of the oracle: the oracle maps the log back onto the input
  check_near(oracle::planar_exp(se2::log({1.0, 1.0, M_PI / 2}), 1.0), {1.0, 1.0, M_PI / 2}, 1e-13);
  CHECK_THROWS_AS(se2::log({0.0, 0.0, 2.0 * M_PI}), wip::DomainError);
  CHECK_THROWS_AS(se2::log({0.0, 0.0, -7.0}), wip::DomainError);
  CHECK_NOTHROW(se2::log({0.0, 0.0, 6.28}));
}

TEST_CASE("exp/log round trips on 10^4 samples")
{
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-5.0, 5.0), ang(-6.2, 6.2), rate(-3.0, 3.0);
  double worst_g = 0.0, worst_xi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const GroupElement g{pos(rng), pos(rng), ang(rng)};
    worst_g = std::max(worst_g, max_diff(se2::exp(se2::log(g), 1.0).vector(), g.vector()));
    const Eigen::Vector3d xi(rate(rng), rate(rng), rate(rng));
    const double t = 2.0 * std::abs(rate(rng)) / 3.0;
    worst_xi = std::max(worst_xi, max_diff(se2::log(se2::exp(xi, t)), t * xi));
  }
  CHECK(worst_g < 1e-12);
  CHECK(worst_xi < 1e-12);
}

TEST_CASE("coadjoint")
{
  const Eigen::Vector3d mu(1.0, 2.0, 3.0);
  CHECK(se2::coadjoint(GroupElement::identity(), mu) == mu);
  CHECK(max_diff(se2::coadjoint({0.0, 0.0, M_PI / 2}, {1.0, 0.0, 0.0}), {0.0, -1.0, 0.0}) < 1e-15);
  CHECK(max_diff(se2::coadjoint({0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}), {1.0, 0.0, 1.0}) == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0, worst_lin = 0.0, worst_pair = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const GroupElement a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    const Eigen::Vector3d m(u(rng), u(rng), u(rng)), n(u(rng), u(rng), u(rng)), xi(u(rng), u(rng), u(rng));
    worst = std::max(worst, max_diff(se2::coadjoint(se2::compose(a, b), m), se2::coadjoint(b, se2::coadjoint(a, m))));
    const double s = u(rng);
    worst_lin = std::max(worst_lin,
                         max_diff(se2::coadjoint(a, m + s * n), se2::coadjoint(a, m) + s * se2::coadjoint(a, n)));
    // dual of the adjoint action: <Ad*_g mu, xi> = <mu, Ad_g xi>
    worst_pair = std::max(worst_pair, std::abs(se2::pair(se2::coadjoint(a, m), xi) -
                                               se2::pair(m, se2::adjoint_matrix(a) * xi)));
  }
  CHECK(worst < 1e-12);
  CHECK(worst_lin < 1e-12);
  CHECK(worst_pair < 1e-12);
}

TEST_CASE("adjoint matrix conjugates the exponential")
{
  // g exp(xi) g^-1 = exp(Ad_g xi)
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const GroupElement g{u(rng), u(rng), u(rng)};
    const Eigen::Vector3d xi(u(rng), u(rng), u(rng));
    const auto l = se2::compose(se2::compose(g, se2::exp(xi, 1.0)), se2::inverse(g));
    const auto r = se2::exp(se2::adjoint_matrix(g) * xi, 1.0);
    REQUIRE(max_diff(l.vector(), r.vector()) < 1e-12);
  }
}

TEST_CASE("sinc coefficients are continuous at the branch switch")
{
  double a0, b0, a1, b1;
  const double w = se2::kSmallAngle;
  se2::sinc_coefficients(w * (1 - 1e-12), a0, b0);
  se2::sinc_coefficients(w * (1 + 1e-12), a1, b1);
  CHECK(std::abs(a0 - a1) < 1e-15);
  CHECK(std::abs(b0 - b1) < 1e-15);
  CHECK(std::abs(a1 - std::sin(w) / w) < 1e-16);
}
