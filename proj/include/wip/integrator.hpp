#pragma once

#include <span>
#include <vector>

#include "wip/model.hpp"
#include "wip/se2.hpp"

namespace wip {

/// Primal state (g_k, s_k, v_k) at one time node.
struct NodeState
{
  GroupElement g;
  BaseState s{BaseState::Zero()};
  BaseVelocity v{BaseVelocity::Zero()};

  bool is_finite() const { return g.is_finite() && s.allFinite() && v.allFinite(); }
};

struct IntegratorConfig
{
  double h{0.05};               ///< step length [s]
  double newton_tol{1e-12};     ///< absolute, infinity norm of the momentum residual
  int newton_max_iters{30};

  void validate() const;
};

/// Residual norms of each Newton iterate (first entry is the initial guess).
struct NewtonTrace
{
  std::vector<double> residuals;
};

/**
 * Solve M(alpha_next) v - h C(alpha_next, v) = rhs for v, starting at `guess`.
 * Falls back to step halving (at most 10 halvings) whenever a full step does
 * not decrease the residual.
 */
BaseVelocity newton_solve_velocity(double alpha_next, const Eigen::Vector3d & rhs, const BaseVelocity & guess,
                                   const IntegratorConfig & cfg, const WipModel & model,
                                   NewtonTrace * trace = nullptr);

/// g' = g exp(-h A v),  s' = s + h v,  M(a')v' - h C(a', v') = M(a)v + h (0, tau).
NodeState step(const NodeState & x, const Torque & tau, const IntegratorConfig & cfg, const WipModel & model);

/// Trajectory of length torques.size() + 1. Step failures are rethrown as
/// IntegratorFailure carrying the failing step index.
std::vector<NodeState> rollout(const NodeState & x0, std::span<const Torque> torques, const IntegratorConfig & cfg,
                               const WipModel & model);

/// Total energy of each node minus that of the first node.
std::vector<double> energy_drift(std::span<const NodeState> trajectory, const WipModel & model);

/// Least-squares slope of `series` against its index times `dt`.
double regression_slope(std::span<const double> series, double dt);

}  // namespace wip
