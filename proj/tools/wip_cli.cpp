// wip: simulate, optimize and check wheeled inverted pendulum trajectories.
//
// Exit codes: 0 success, 1 usage or unexpected error, 2 malformed input file,
// 3 integrator failure, 4 a maneuver leg did not converge, 5 check found violations.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "wip/artifacts.hpp"
#include "wip/errors.hpp"
#include "wip/keyvalue.hpp"
#include "wip/maneuver.hpp"

namespace {

enum ExitCode : int
{
  kOk = 0,
  kUsage = 1,
  kParse = 2,
  kIntegrator = 3,
  kNotConverged = 4,
  kViolations = 5,
};

bool debug_logging()
{
  const char * env = std::getenv("WIP_LOG");
  return env != nullptr && std::string(env) == "debug";
}

wip::WipParams params_from(const std::string & file)
{
  return file.empty() ? wip::WipParams{} : wip::load_params(file);
}

struct SimulateArgs
{
  std::string params;
  std::string initial;
  std::string torques;
  int steps{-1};
  double h{0.05};
  std::string out;
};

int run_simulate(const SimulateArgs & a)
{
  const wip::WipModel model(params_from(a.params));
  const wip::NodeState x0 = wip::parse_initial_state(wip::read_text_file(a.initial));
  std::vector<wip::Torque> torques;
  if (!a.torques.empty()) torques = wip::parse_torque_csv(wip::read_text_file(a.torques));
  int steps = a.steps;
  if (steps < 0) {
    if (a.torques.empty()) throw wip::ParseError("--steps is required without --torques", "steps");
    steps = static_cast<int>(torques.size());
  }
  if (a.torques.empty()) {
    torques.assign(static_cast<std::size_t>(steps), wip::Torque::Zero());
  } else if (static_cast<int>(torques.size()) < steps) {
    throw wip::ParseError("torque file has " + std::to_string(torques.size()) + " rows, " + std::to_string(steps) +
                            " steps requested", "torques");
  } else {
    torques.resize(static_cast<std::size_t>(steps));
  }

  wip::IntegratorConfig icfg;
  icfg.h = a.h;
  icfg.validate();
  wip::ConcatenatedTrajectory traj;
  traj.h = a.h;
  traj.states = wip::rollout(x0, torques, icfg, model);
  traj.torques = torques;
  traj.costates.assign(traj.states.size(), wip::NodeCostate{});
  traj.multipliers.assign(traj.states.size(), wip::Multipliers{});
  const wip::RunArtifacts art = wip::write_simulation(a.out, traj, model.params());
  std::printf("simulated %d steps, h = %g s\n", steps, a.h);
  std::printf("trajectory: %s\n", art.trajectory_csv.string().c_str());
  return kOk;
}

struct OptimizeArgs
{
  std::string params;
  std::string maneuver;
  std::string builtin;
  int segments{0};
  double tol{1e-10};
  int threads{1};
  std::string out;
};

int run_optimize(const OptimizeArgs & a)
{
  const wip::WipModel model(params_from(a.params));
  const wip::ManeuverSpec spec = a.maneuver.empty() ? wip::builtin_maneuver(a.builtin) : wip::load_maneuver(a.maneuver);
  spec.validate();
  wip::ShootingConfig cfg;
  cfg.segments = a.segments;
  cfg.tol_residual = a.tol;
  cfg.threads = a.threads;
  cfg.log_iterations = debug_logging();

  std::printf("maneuver %s: %d legs\n", spec.name.c_str(), spec.legs());
  const wip::ManeuverResult result =
    wip::solve_maneuver(spec, cfg, model, [](int leg, const wip::LegResult & r) {
      std::printf("leg %d: %s  cost = %.10e  residual = %.3e  iterations = %d  (%.1f s)\n", leg,
                  r.report.converged ? "converged" : "NOT converged", r.report.cost, r.report.final_residual,
                  r.report.iterations, r.seconds);
      std::fflush(stdout);
    });
  const wip::RunArtifacts art = wip::write_maneuver(a.out, spec, result, model.params());
  std::printf("total cost = %.10e\n", result.total_cost());
  std::printf("artifacts: %s\n", art.trajectory_csv.parent_path().string().c_str());
  if (!result.converged) {
    const auto & leg = result.legs.at(static_cast<std::size_t>(result.failed_leg));
    std::fprintf(stderr, "leg %d did not converge: best residual %.3e (%s)\n", result.failed_leg,
                 leg.report.final_residual, leg.report.message.c_str());
    return kNotConverged;
  }
  return kOk;
}

int run_check(const std::string & dir)
{
  const auto checks = wip::check_run_directory(dir);
  std::size_t total = 0;
  for (const auto & c : checks) {
    std::printf("leg %d: kkt = %.3e, %zu violation(s)\n", c.leg, c.kkt, c.violations.size());
    for (const auto & v : c.violations) {
      std::printf("  %s at %d: %.3e (limit %.3e) %s\n", v.kind.c_str(), v.index, v.value, v.limit, v.message.c_str());
    }
    total += c.violations.size();
  }
  return total == 0 ? kOk : kViolations;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Energy-optimal maneuvers of a wheeled inverted pendulum"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto * simulate = app.add_subcommand("simulate", "Roll out the variational integrator");
  simulate->add_option("--params", sim.params, "Parameter file (key = value)");
  simulate->add_option("--initial", sim.initial, "Initial state file")->required();
  simulate->add_option("--torques", sim.torques, "CSV with tau1,tau2 per step (zero torque when omitted)");
  simulate->add_option("--steps", sim.steps, "Number of steps");
  simulate->add_option("--step", sim.h, "Step length h [s]");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  OptimizeArgs opt;
  auto * optimize = app.add_subcommand("optimize", "Solve a multi-leg maneuver");
  optimize->add_option("--params", opt.params, "Parameter file (key = value)");
  auto * mfile = optimize->add_option("--maneuver", opt.maneuver, "Maneuver file");
  auto * bname = optimize->add_option("--builtin", opt.builtin, "Built-in maneuver")->check(CLI::IsMember({"M1", "M2"}));
  mfile->excludes(bname);
  optimize->add_option("--segments", opt.segments, "Shooting segments per leg (0: one per 5 steps)");
  optimize->add_option("--tol", opt.tol, "Residual tolerance");
  optimize->add_option("--threads", opt.threads, "Jacobian worker threads");
  optimize->add_option("--out", opt.out, "Output directory")->required();

  std::string report_dir;
  auto * check = app.add_subcommand("check", "Re-validate a stored optimization run");
  check->add_option("--report", report_dir, "Output directory of an optimize run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*optimize) {
      if (opt.maneuver.empty() && opt.builtin.empty()) {
        std::cerr << "optimize: one of --maneuver or --builtin is required\n";
        return kUsage;
      }
      return run_optimize(opt);
    }
    return run_check(report_dir);
  } catch (const wip::ParseError & e) {
    std::cerr << "error: " << e.what() << " [field: " << e.field() << "]\n";
    return kParse;
  } catch (const wip::IntegratorFailure & e) {
    std::cerr << "integrator failure at step " << e.step() << ": " << e.what() << '\n';
    return kIntegrator;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}
