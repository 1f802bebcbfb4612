#pragma once

#include <Eigen/Core>

namespace wip {

/// Body-frame velocity in se(2): (forward, lateral, turning rate).
using AlgebraElement = Eigen::Vector3d;

/// Element of se(2)*: (linear momenta mu1, mu2; angular momentum mu3).
using CoAlgebraElement = Eigen::Vector3d;

/**
 * @brief Planar pose (x, y, theta) in SE(2).
 *
 * The heading is kept on the universal cover (never wrapped), so a trajectory
 * that turns through 360 degrees ends at theta = 2 pi, not 0.
 */
struct GroupElement
{
  double x{0.0};
  double y{0.0};
  double theta{0.0};

  static GroupElement identity() { return {}; }
  static GroupElement from_vector(const Eigen::Vector3d & c) { return {c[0], c[1], c[2]}; }
  Eigen::Vector3d vector() const { return {x, y, theta}; }
  bool is_finite() const;

  friend bool operator==(const GroupElement &, const GroupElement &) = default;
};

namespace se2 {

/// |t xi3| below which the series branch of sin(w)/w and (1 - cos w)/w is used.
inline constexpr double kSmallAngle = 1e-4;

GroupElement compose(const GroupElement & a, const GroupElement & b);
GroupElement inverse(const GroupElement & g);

/// exp(t xi). Closed form, with series coefficients near zero rotation.
GroupElement exp(const AlgebraElement & xi, double t = 1.0);

/// Inverse of exp for |theta| < 2 pi; throws DomainError otherwise.
AlgebraElement log(const GroupElement & g);

/// Ad_g as a 3x3 matrix acting on (xi1, xi2, xi3).
Eigen::Matrix3d adjoint_matrix(const GroupElement & g);

/**
 * @brief Coadjoint action
 *
 *   [  cos th  sin th  0 ]
 *   [ -sin th  cos th  0 ] mu
 *   [    y      -x     1 ]
 *
 * This is the transpose of Ad_g, hence
 * coadjoint(compose(a, b), mu) == coadjoint(b, coadjoint(a, mu)).
 */
CoAlgebraElement coadjoint(const GroupElement & g, const CoAlgebraElement & mu);
Eigen::Matrix3d coadjoint_matrix(const GroupElement & g);

/// Duality pairing <mu, xi>.
inline double pair(const CoAlgebraElement & mu, const AlgebraElement & xi) { return mu.dot(xi); }

/// sin(w)/w and (1 - cos w)/w, switching to series for |w| < kSmallAngle.
void sinc_coefficients(double w, double & a, double & b);

}  // namespace se2
}  // namespace wip
