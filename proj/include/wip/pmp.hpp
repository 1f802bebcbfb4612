#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "wip/integrator.hpp"
#include "wip/model.hpp"
#include "wip/problem.hpp"
#include "wip/se2.hpp"

namespace wip {

/// Costate at one node: zeta in se(2)*, psi paired with s, lambda paired with the momentum update.
struct NodeCostate
{
  CoAlgebraElement zeta{CoAlgebraElement::Zero()};
  Eigen::Vector3d psi{Eigen::Vector3d::Zero()};
  Eigen::Vector3d lambda{Eigen::Vector3d::Zero()};

  bool is_finite() const { return zeta.allFinite() && psi.allFinite() && lambda.allFinite(); }
};

/// Inequality multipliers at one node; admissible values are non-positive.
struct Multipliers
{
  double sigma{0.0};                                   ///< tilt bound
  Eigen::Vector3d beta{Eigen::Vector3d::Zero()};       ///< velocity bound, one per component
};

/// Cost multiplier: -1 for normal extremals, 0 for abnormal ones.
inline constexpr double kNormal = -1.0;
inline constexpr double kAbnormal = 0.0;

/**
 * H = (eta h / 2) <tau, tau> - <zeta, h A v> + <psi, s + h v> + <lambda, M(alpha) v + h (0, tau)>.
 *
 * With eta = -1 the maximizer over |tau_j| <= mu is the clamp of (lambda_2, lambda_3).
 */
double hamiltonian(const NodeCostate & cost, const NodeState & x, const Torque & tau, double eta, double h,
                   const WipModel & model);

/// Gradient of hamiltonian() with respect to tau.
Torque hamiltonian_torque_gradient(const NodeCostate & cost, const Torque & tau, double eta, double h);

/**
 * Pointwise maximizer of the Hamiltonian over the torque box.
 *
 * normal (eta = -1): tau_j = clamp(lambda_{j+1}, -mu, mu)
 * abnormal (eta = 0): tau_j = mu sign(lambda_{j+1}), and 0 when lambda_{j+1} == 0
 */
Torque optimal_torque(const Eigen::Vector3d & lambda, double mu, double eta = kNormal);

/// Forward costate transport zeta^k = Ad*_{exp(-h A v)} zeta^{k-1}.
CoAlgebraElement costate_transport_zeta(const CoAlgebraElement & zeta_prev, const BaseVelocity & v, double h,
                                        const WipModel & model);
/// The backward form zeta^{k-1} = Ad*_{exp(h A v)} zeta^k; inverse of the above.
CoAlgebraElement costate_transport_zeta_backward(const CoAlgebraElement & zeta, const BaseVelocity & v, double h,
                                                 const WipModel & model);

/// Left and right 6x6 blocks of the (psi, lambda) recursion at node x.
struct AdjointBlocks
{
  Eigen::Matrix<double, 6, 6> lhs;   ///< [[I, D_s(M v)^T], [h I, M^T]]
  Eigen::Matrix<double, 6, 6> rhs;   ///< [[I, D_s(M v - h C)^T], [0, D_v(M v - h C)^T]]
  Eigen::Matrix<double, 6, 1> forcing;  ///< (sigma alpha, 0, 0; -h A^T zeta^k + beta .* v)
};
AdjointBlocks adjoint_blocks(const NodeCostate & cost_prev, const CoAlgebraElement & zeta_k, const NodeState & x,
                             const Multipliers & mult, double h, const WipModel & model);

/**
 * One forward step of the adjoint system at node k: given the costate at k - 1
 * and the primal state at k, return the costate at k.
 * Throws SingularAdjointSystem if the left block is numerically singular.
 */
NodeCostate adjoint_step(const NodeCostate & cost_prev, const NodeState & x, const Multipliers & mult, double h,
                         const WipModel & model);

/// Residual of the block equation for a given costate pair (zero when adjoint_step produced `cost`).
Eigen::Matrix<double, 6, 1> adjoint_equation_residual(const NodeCostate & cost_prev, const NodeCostate & cost,
                                                      const NodeState & x, const Multipliers & mult, double h,
                                                      const WipModel & model);

/// (psi_2, psi_3) at the final node; zero when the free final wheel angles are transversal.
Eigen::Vector2d transversality_residual(const NodeCostate & cost_final);

/// Smoothed Fischer-Burmeister function p + q - sqrt(p^2 + q^2 + eps^2).
double fischer_burmeister(double p, double q, double eps);

/// (Phi(-sigma, a^2 - alpha^2), Phi(-beta_j, nu^2 - v_j^2) for j = 1..3).
Eigen::Vector4d complementarity_residual(const NodeState & x, const Multipliers & mult, const Bounds & bounds,
                                         double eps);

/// Per-family infinity norms of the first-order conditions.
struct KktBreakdown
{
  double dynamics{0.0};
  double adjoint{0.0};
  double transversality{0.0};
  double complementarity{0.0};
  double stationarity{0.0};
  double boundary{0.0};

  double max() const;
};

/**
 * First-order optimality residual of a candidate solution.
 *
 * trajectory and costates have N + 1 entries, torques N, multipliers N + 1
 * (entries 0 and N are unused and must be zero).
 */
KktBreakdown kkt_breakdown(std::span<const NodeState> trajectory, std::span<const NodeCostate> costates,
                           std::span<const Multipliers> multipliers, std::span<const Torque> torques,
                           const OcProblem & problem, const WipModel & model, const IntegratorConfig & cfg);

double kkt_residual(std::span<const NodeState> trajectory, std::span<const NodeCostate> costates,
                    std::span<const Multipliers> multipliers, std::span<const Torque> torques,
                    const OcProblem & problem, const WipModel & model, const IntegratorConfig & cfg);

/// Momentum-update defect M(a')v' - h C(a', v') - M(a)v - h (0, tau).
Eigen::Vector3d momentum_defect(const NodeState & x, const NodeState & next, const Torque & tau, double h,
                                const WipModel & model);

/// Group defect log((g_k exp(-h A v_k))^{-1} g_{k+1}).
AlgebraElement pose_defect(const NodeState & x, const NodeState & next, double h, const WipModel & model);

}  // namespace wip
