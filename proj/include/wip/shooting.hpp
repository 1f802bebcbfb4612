#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "wip/pmp.hpp"
#include "wip/problem.hpp"

namespace wip {

struct ShootingConfig
{
  int segments{0};               ///< 0 selects default_segments(N)
  int max_outer_iters{60};       ///< Levenberg-Marquardt iterations per continuation stage
  double lm_damping_init{1e-3};
  double fd_step{1e-7};          ///< forward-difference step on scaled unknowns
  std::vector<double> eps_schedule{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10};
  double tol_residual{1e-10};
  double state_scale{1.0};       ///< typical magnitude of poses, angles and rates
  double costate_scale{1e-2};    ///< typical magnitude of lambda; see make_scaling()
  int threads{1};                ///< workers for Jacobian columns; results do not depend on it
  double newton_tol{1e-12};
  int newton_max_iters{30};
  bool log_iterations{false};
  /// Continuation from an upright, unforced version of the problem when no warm start is given.
  bool homotopy{true};
  double homotopy_tol{1e-6};     ///< corrector tolerance at each homotopy parameter
  int homotopy_iters{12};        ///< corrector iterations before the step is halved
  double homotopy_min_step{1e-4};
  /// Torque bound used along the boundary continuation; lowered to the problem's bound afterwards.
  double homotopy_torque_bound{1.0};

  void validate(int N) const;
};

/**
 * @brief Typical magnitudes dividing unknowns and residual rows.
 *
 * Costate components differ by orders of magnitude: psi ~ M lambda / h and
 * zeta ~ M lambda / (h r_w), with M the mass-matrix scale. Multipliers follow
 * from the adjoint rows they enter. Complementarity gaps are divided by a^2
 * and nu^2 before the smoothed Fischer-Burmeister function is applied.
 */
struct Scaling
{
  double state{1.0};
  Eigen::Matrix<double, 9, 1> costate{Eigen::Matrix<double, 9, 1>::Ones()};  ///< zeta, psi, lambda
  Eigen::Vector4d multiplier{Eigen::Vector4d::Ones()};                       ///< sigma, beta
  Eigen::Vector4d gap{Eigen::Vector4d::Ones()};                              ///< a^2, nu^2, nu^2, nu^2
};
Scaling make_scaling(const ShootingConfig & cfg, const OcProblem & problem, const WipModel & model);

/// Nodes per segment used when ShootingConfig::segments is 0.
inline constexpr int kDefaultSegmentLength = 5;
int default_segments(int N);

/**
 * @brief Position of every unknown in the flat shooting vector.
 *
 * Ordering: costate (zeta, psi, lambda) of segment 0; then for every interior
 * segment start i = 1..S-1 the state (x, y, theta, alpha, phi1, phi2,
 * v_alpha, v_phi1, v_phi2) followed by its costate; then (sigma, beta1..3) for
 * nodes k = 1..N-1.
 */
class UnknownLayout
{
public:
  UnknownLayout(int N, int segments, Scaling scaling = {});

  int N() const { return n_; }
  const Scaling & scaling() const { return scaling_; }
  int segments() const { return static_cast<int>(bounds_.size()) - 1; }
  /// First node of segment i (i = 0..S); boundary(S) == N.
  int boundary(int i) const { return bounds_[static_cast<std::size_t>(i)]; }
  int size() const;

  int costate_offset(int segment) const;
  int state_offset(int segment) const;          ///< segment >= 1
  int multiplier_offset(int node) const;        ///< node = 1..N-1
  /// Segment whose propagation produces node k (boundary(i) < k <= boundary(i+1)).
  int segment_producing(int node) const;
  /// Segment whose propagation depends on unknown `index`.
  int segment_of_unknown(int index) const;

private:
  int n_;
  std::vector<int> bounds_;
  Scaling scaling_;
};

/// Unpacked shooting unknowns in physical units.
struct ShootingVariables
{
  std::vector<NodeState> starts;        ///< starts[0] is the fixed initial state
  std::vector<NodeCostate> costates;    ///< costate at every segment start
  std::vector<Multipliers> multipliers; ///< N + 1 entries, 0 and N unused
};

/// Flat unknown vector, each entry divided by its scale.
Eigen::VectorXd pack(const ShootingVariables & vars, const UnknownLayout & layout);
ShootingVariables unpack(const Eigen::VectorXd & unknowns, const UnknownLayout & layout, const OcProblem & problem);

/// Interpolated states, zero costates and zero multipliers.
ShootingVariables initial_guess(const OcProblem & problem, const UnknownLayout & layout);

/// States, costates and torques produced by propagating one segment.
struct SegmentTrace
{
  std::vector<NodeState> states;      ///< nodes boundary(i) .. boundary(i+1)
  std::vector<NodeCostate> costates;
  std::vector<Torque> torques;        ///< one per step
};

SegmentTrace propagate_segment(int segment, const ShootingVariables & vars, const UnknownLayout & layout,
                               const OcProblem & problem, const WipModel & model, const ShootingConfig & cfg);

/**
 * Stacked shooting residual at smoothing level eps. Blocks, in order:
 * matching defects (pose via log, s, v, costate) at interior segment starts;
 * final pose, tilt and velocity; transversality; complementarity for nodes 1..N-1.
 * Rows are divided by the layout's scaling.
 */
Eigen::VectorXd residual(const Eigen::VectorXd & unknowns, const OcProblem & problem, const UnknownLayout & layout,
                         const ShootingConfig & cfg, double eps, const WipModel & model);

/// Constraint activity at one node.
struct ActiveSet
{
  bool tilt{false};
  std::array<bool, 3> velocity{false, false, false};
  std::array<bool, 2> torque{false, false};
};

struct StageLog
{
  double eps{0.0};
  int iterations{0};
  double start_residual{0.0};
  double final_residual{0.0};
};

struct SolveReport
{
  bool converged{false};
  int iterations{0};
  double final_residual{0.0};
  double kkt{0.0};
  double cost{0.0};
  int segments{0};
  bool abnormal_suspect{false};
  int homotopy_steps{0};                  ///< accepted continuation steps (0 when not used)
  std::string message;
  std::vector<NodeState> trajectory;      ///< N + 1
  std::vector<NodeCostate> costates;      ///< N + 1
  std::vector<Torque> torques;            ///< N
  std::vector<Multipliers> multipliers;   ///< N + 1
  std::vector<ActiveSet> active_sets;     ///< N + 1
  std::vector<StageLog> stages;
  std::vector<double> residual_history;   ///< infinity norm after every accepted step
};

/// Energy cost sum (h / 2) <tau_k, tau_k>.
double energy_cost(const std::vector<Torque> & torques, double h);

/**
 * Upright, unforced companion of `problem`: the initial tilt and tilt rate
 * are zeroed and the target is where zero torque carries that state after N
 * steps. Its solution has zero costates.
 */
OcProblem homotopy_start(const OcProblem & problem, const WipModel & model);

/// Boundary data blended linearly (pose on the universal cover) between `start` and `target`.
OcProblem homotopy_blend(const OcProblem & start, const OcProblem & target, double t);

/**
 * Solve the boundary value problem by multiple shooting: Levenberg-Marquardt
 * on residual() with a forward-difference Jacobian, continuation over
 * cfg.eps_schedule. `warm_start`, when given, replaces initial_guess().
 * Otherwise, with cfg.homotopy, the first smoothing stage is reached by
 * continuation in the boundary data from homotopy_start().
 *
 * Returns converged = false (best iterate) when a stage runs out of iterations.
 * Throws IntegratorFailure when the starting point cannot be propagated.
 */
SolveReport solve(const OcProblem & problem, const ShootingConfig & cfg, const WipModel & model,
                  const std::optional<ShootingVariables> & warm_start = std::nullopt);

/// Shooting variables read back from a report, e.g. for warm starts.
ShootingVariables variables_from_report(const SolveReport & report, const UnknownLayout & layout);

struct Violation
{
  std::string kind;
  int index{-1};
  double value{0.0};
  double limit{0.0};
  std::string message;
};

struct ValidationTolerances
{
  double kkt{1e-9};
  double boundary{1e-6};
  double feasibility{1e-8};
  double replay{1e-10};
};

/**
 * Re-check every optimality and feasibility condition of a report without
 * using solver internals. The stored torques are replayed one step at a time
 * from the stored states (open-loop replay over the whole horizon is
 * meaningless for the unstable upright equilibrium).
 */
std::vector<Violation> validate_report(const SolveReport & report, const OcProblem & problem, const WipModel & model,
                                       const ValidationTolerances & tol = {});

}  // namespace wip
