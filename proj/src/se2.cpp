#include "wip/se2.hpp"

#include <cmath>
#include <numbers>

#include "wip/errors.hpp"

namespace wip {

bool GroupElement::is_finite() const
{
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta);
}

namespace se2 {

GroupElement compose(const GroupElement & a, const GroupElement & b)
{
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

GroupElement inverse(const GroupElement & g)
{
  const double c = std::cos(g.theta), s = std::sin(g.theta);
  return {-(c * g.x + s * g.y), s * g.x - c * g.y, -g.theta};
}

void sinc_coefficients(double w, double & a, double & b)
{
  if (std::abs(w) < kSmallAngle) {
    const double w2 = w * w;
    a = 1.0 - w2 / 6.0 + w2 * w2 / 120.0;
    b = w * (0.5 - w2 / 24.0 + w2 * w2 / 720.0);
  } else {
    a = std::sin(w) / w;
    const double half = std::sin(0.5 * w);
    b = 2.0 * half * half / w;  // 1 - cos w without cancellation
  }
}

GroupElement exp(const AlgebraElement & xi, double t)
{
  const double u = t * xi[0], v = t * xi[1], w = t * xi[2];
  double a, b;
  sinc_coefficients(w, a, b);
  return {a * u - b * v, b * u + a * v, w};
}

AlgebraElement log(const GroupElement & g)
{
  const double w = g.theta;
  if (!(std::abs(w) < 2.0 * std::numbers::pi)) {
    throw DomainError("se2::log: |theta| must be below 2 pi");
  }
  double a, b;
  sinc_coefficients(w, a, b);
  const double det = a * a + b * b;
  return {(a * g.x + b * g.y) / det, (-b * g.x + a * g.y) / det, w};
}

Eigen::Matrix3d adjoint_matrix(const GroupElement & g)
{
  const double c = std::cos(g.theta), s = std::sin(g.theta);
  Eigen::Matrix3d m;
  m << c, -s, g.y,
       s, c, -g.x,
       0.0, 0.0, 1.0;
  return m;
}

Eigen::Matrix3d coadjoint_matrix(const GroupElement & g)
{
  const double c = std::cos(g.theta), s = std::sin(g.theta);
  Eigen::Matrix3d m;
  m << c, s, 0.0,
       -s, c, 0.0,
       g.y, -g.x, 1.0;
  return m;
}

CoAlgebraElement coadjoint(const GroupElement & g, const CoAlgebraElement & mu)
{
  return coadjoint_matrix(g) * mu;
}

}  // namespace se2
}  // namespace wip
