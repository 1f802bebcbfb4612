#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wip/maneuver.hpp"
#include "wip/model.hpp"

namespace wip {

/// Column names of trajectory CSV files, in order.
const std::vector<std::string> & trajectory_columns();

/**
 * One row per node, 17 significant digits. The last row has no torque and
 * carries nan in tau1 and tau2.
 */
std::string format_trajectory_csv(const ConcatenatedTrajectory & traj);
/// Inverse of format_trajectory_csv(); h is read from the t column (0.05 for a single row).
ConcatenatedTrajectory parse_trajectory_csv(const std::string & text);
ConcatenatedTrajectory load_trajectory_csv(const std::filesystem::path & file);

/// Torque file for `wip simulate`: one "tau1,tau2" row per step, optional header.
std::vector<Torque> parse_torque_csv(const std::string & text);

/// Initial state file: x, y, theta_deg, alpha_deg, phi1, phi2, v_alpha, v_phi1, v_phi2 (all optional, default 0).
NodeState parse_initial_state(const std::string & text);

/// matplotlib script drawing torques (with +-mu lines), position, tilt and heading, rates and the x-y path.
std::string plot_script(const std::string & title, const std::string & csv_name, double mu);

struct RunArtifacts
{
  std::filesystem::path trajectory_csv;
  std::filesystem::path costate_csv;
  std::filesystem::path summary;
  std::filesystem::path summary_json;
  std::filesystem::path plot_script;
  std::filesystem::path kkt_log;
  std::filesystem::path problem_file;
  std::vector<std::filesystem::path> leg_csvs;
};

RunArtifacts write_simulation(const std::filesystem::path & dir, const ConcatenatedTrajectory & traj,
                              const WipParams & params);

RunArtifacts write_maneuver(const std::filesystem::path & dir, const ManeuverSpec & spec,
                            const ManeuverResult & result, const WipParams & params);

/// Text summary: cost, residual and iterations per leg, and totals.
std::string format_summary(const ManeuverSpec & spec, const ManeuverResult & result);
/// Same content as format_summary() as a JSON object, with a "legs" array.
std::string format_summary_json(const ManeuverSpec & spec, const ManeuverResult & result);

struct LegCheck
{
  int leg{0};
  double kkt{0.0};
  std::vector<Violation> violations;
};

/// Re-validate every leg stored by write_maneuver(). Throws ParseError on missing or malformed files.
std::vector<LegCheck> check_run_directory(const std::filesystem::path & dir, const ValidationTolerances & tol = {});

}  // namespace wip
