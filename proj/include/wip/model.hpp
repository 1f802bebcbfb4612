#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>

#include "wip/se2.hpp"

namespace wip {

/// Shape variables s = (alpha, phi1, phi2): tilt and the two wheel angles [rad].
using BaseState = Eigen::Vector3d;
/// Shape rates v = (v_alpha, v_phi1, v_phi2) [rad/s].
using BaseVelocity = Eigen::Vector3d;
/// Wheel torques (tau1, tau2). Embedded as (0, tau1, tau2) by the dynamics.
using Torque = Eigen::Vector2d;

/// Physical constants of the wheeled inverted pendulum (SI units).
struct WipParams
{
  double m_b{0.277};        ///< body mass
  double b{48.67e-3};       ///< wheel axis to body center of gravity
  double grav{9.81};        ///< gravitational acceleration
  double m_w{0.028};        ///< wheel mass
  double r_w{33.1e-3};      ///< wheel radius
  double d_w{49e-3};        ///< half the wheel separation
  double I_Bxx{543.108e-6};
  double I_Byy{481.457e-6};
  double I_Bzz{153.951e-6};
  double I_Wyy{7.411e-6};   ///< wheel inertia about its rotation axis
  double I_Wzz{4.957e-6};

  /// Throws wip::ParseError naming the first non-positive or non-finite field.
  void validate() const;
};

/// Load a key = value parameter file. Every field must be present.
WipParams load_params(const std::filesystem::path & file);
WipParams parse_params(const std::string & text);
std::string format_params(const WipParams & p);

/**
 * @brief Aggregated constants of the constrained Lagrangian.
 *
 *   c_aa = I_Byy + m_b b^2      tilt inertia
 *   c_ax = m_b b                tilt / translation coupling (also gravity moment arm)
 *   c_x  = m_b + 2 m_w          translating mass
 *   c_p  = I_Wyy                wheel spin inertia
 *
 * With these, the mass matrix is the Hessian in v of the kinetic energy after
 * eliminating (x, y, theta) through the rolling constraints.
 */
struct ModelCoefficients
{
  double c_aa{0.0};
  double c_ax{0.0};
  double c_x{0.0};
  double c_p{0.0};
};

ModelCoefficients coefficients_from_params(const WipParams & p);

/// Yaw inertia 2 I_Wzz + I_Bzz cos^2 a + 2 m_w d^2 + (I_Bxx + m_b b^2) sin^2 a.
double i_theta(double alpha, const WipParams & p);
double d_i_theta(double alpha, const WipParams & p);

/**
 * @brief Reduced WIP dynamics on SE(2) x (S^1)^3.
 *
 * Holds the parameters and the derived coefficients; every method is a pure
 * function of its arguments.
 */
class WipModel
{
public:
  WipModel() : WipModel(WipParams{}) {}
  explicit WipModel(const WipParams & p);
  WipModel(const WipParams & p, const ModelCoefficients & c) : params_(p), coeffs_(c) {}

  const WipParams & params() const { return params_; }
  const ModelCoefficients & coefficients() const { return coeffs_; }

  /// Symmetric 3x3 inertia of the base coordinates.
  Eigen::Matrix3d mass_matrix(double alpha) const;
  /// Coriolis, centrifugal and gravity terms; only the tilt row is nonzero.
  Eigen::Vector3d coriolis(double alpha, const BaseVelocity & v) const;

  Eigen::Matrix3d d_mass_d_alpha(double alpha) const;
  Eigen::Vector3d d_coriolis_d_alpha(double alpha, const BaseVelocity & v) const;
  Eigen::Matrix3d d_coriolis_d_v(double alpha, const BaseVelocity & v) const;

  /// Local form of the nonholonomic connection; xi = -A v.
  Eigen::Matrix3d connection() const;
  AlgebraElement body_velocity(const BaseVelocity & v) const { return -connection() * v; }

  /// (0, tau1, tau2)
  static Eigen::Vector3d embed_torque(const Torque & tau) { return {0.0, tau[0], tau[1]}; }

  double reduced_lagrangian(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const;
  CoAlgebraElement body_momentum(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const;
  /// Kinetic part of the reduced Lagrangian plus c_ax g cos(alpha).
  double total_energy(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const;
  /// total_energy with xi = -A v.
  double total_energy(const BaseState & s, const BaseVelocity & v) const
  {
    return total_energy(s, v, body_velocity(v));
  }

  /// Full Lagrangian on TQ, q = (x, y, theta, alpha, phi1, phi2).
  double lagrangian(const Eigen::Matrix<double, 6, 1> & q, const Eigen::Matrix<double, 6, 1> & qdot) const;

private:
  WipParams params_;
  ModelCoefficients coeffs_;
};

}  // namespace wip
