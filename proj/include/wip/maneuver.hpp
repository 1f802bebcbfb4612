#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wip/problem.hpp"
#include "wip/shooting.hpp"

namespace wip {

/// Waypoint as written in maneuver files; angles in degrees, rates in rad/s.
struct Waypoint
{
  double x{0.0};
  double y{0.0};
  double theta_deg{0.0};  ///< on the universal cover: 360 is a full turn, not 0
  double alpha_deg{0.0};
  BaseVelocity v{BaseVelocity::Zero()};
  std::optional<double> duration_s;  ///< duration of the leg ending here; defaults to the maneuver's

  NodeState node() const;  ///< degrees converted to radians, wheel angles zero
};

struct ManeuverSpec
{
  std::string name;
  std::vector<Waypoint> waypoints;
  double leg_duration{5.0};  ///< [s]
  Bounds bounds;
  double h{0.05};

  /// Throws ParseError for fewer than two waypoints or a duration that is not a multiple of h.
  void validate() const;
  int legs() const { return static_cast<int>(waypoints.size()) - 1; }
  int leg_steps(int leg) const;
};

/// Degrees to radians; the only conversion point for configuration angles.
double deg_to_rad(double deg);

/// Built-in maneuvers "M1" (a, b, c, d, a cycle) and "M2" (A, B, A).
ManeuverSpec builtin_maneuver(const std::string & name);
std::vector<std::string> builtin_names();

/**
 * Parse a maneuver file. Top-level keys: name, h, duration_s, and optionally
 * mu, nu, tilt_bound_deg. One [waypoint] section per waypoint with x, y,
 * theta_deg, alpha_deg, v_alpha, v_phi1, v_phi2 and an optional duration_s.
 */
ManeuverSpec parse_maneuver(const std::string & text);
ManeuverSpec load_maneuver(const std::filesystem::path & file);
std::string format_maneuver(const ManeuverSpec & spec);

/// Boundary value problem of one leg, starting from `start` (the end of the previous leg).
OcProblem leg_problem(const ManeuverSpec & spec, int leg, const NodeState & start);

struct LegResult
{
  OcProblem problem;
  SolveReport report;
  double seconds{0.0};
};

struct ManeuverResult
{
  std::vector<LegResult> legs;
  bool converged{false};
  int failed_leg{-1};  ///< first leg that did not converge

  double total_cost() const;
};

/// Called after every leg; may print progress.
using LegCallback = std::function<void(int leg, const LegResult &)>;

/**
 * Solve the legs in order; each leg starts at the final node of the previous
 * one so wheel angles carry over. Stops at the first leg that fails.
 */
ManeuverResult solve_maneuver(const ManeuverSpec & spec, const ShootingConfig & cfg, const WipModel & model,
                              const LegCallback & on_leg = {});

/// Legs joined at their shared boundary nodes; the joint takes the later leg's costate.
struct ConcatenatedTrajectory
{
  double h{0.05};
  std::vector<NodeState> states;
  std::vector<NodeCostate> costates;
  std::vector<Torque> torques;             ///< states.size() - 1
  std::vector<Multipliers> multipliers;    ///< states.size()
};

ConcatenatedTrajectory concatenate(const ManeuverResult & result);

}  // namespace wip
