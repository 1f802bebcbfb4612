#pragma once

#include "wip/integrator.hpp"

namespace wip {

/// Box limits of the constrained transfer problem.
struct Bounds
{
  double mu{8e-3};  ///< torque bound, |tau_j| <= mu
  double nu{20.0};  ///< base velocity bound, |v_j| <= nu [rad/s]
  double a{0.5};    ///< tilt bound, |alpha| <= a [rad]

  void validate() const;
};

/**
 * @brief Fixed-horizon energy-optimal transfer.
 *
 * Start (g, s, v) is fully prescribed; at the end only the pose, the tilt and
 * the base velocity are prescribed, the final wheel angles are free.
 */
struct OcProblem
{
  NodeState initial;
  GroupElement final_g;
  double final_alpha{0.0};
  BaseVelocity final_v{BaseVelocity::Zero()};
  int N{100};
  double h{0.05};
  Bounds bounds;

  void validate() const;
  double horizon() const { return N * h; }
};

}  // namespace wip
