#include "wip/artifacts.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "wip/errors.hpp"
#include "wip/keyvalue.hpp"

namespace wip {
namespace fs = std::filesystem;

namespace {

std::string num(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string & line, char sep)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string{} : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string & cell, const std::string & field, int line)
{
  if (cell == "nan" || cell == "NaN") return NAN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ParseError("line " + std::to_string(line) + ": field '" + field + "' is not a number: '" + cell + "'",
                     field);
  }
  return v;
}

bool is_header(const std::string & line)
{
  const auto first = line.find_first_not_of(" \t");
  return first != std::string::npos && (std::isalpha(static_cast<unsigned char>(line[first])) != 0) &&
         line.compare(first, 3, "nan") != 0;
}

std::string costate_csv(const ConcatenatedTrajectory & traj)
{
  std::ostringstream out;
  out << "k,t,zeta1,zeta2,zeta3,psi1,psi2,psi3,lambda1,lambda2,lambda3,sigma,beta1,beta2,beta3\n";
  for (std::size_t k = 0; k < traj.costates.size(); ++k) {
    const auto & c = traj.costates[k];
    const Multipliers m = k < traj.multipliers.size() ? traj.multipliers[k] : Multipliers{};
    out << k << ',' << num(static_cast<double>(k) * traj.h);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.zeta[i]);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.psi[i]);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.lambda[i]);
    out << ',' << num(m.sigma);
    for (int i = 0; i < 3; ++i) out << ',' << num(m.beta[i]);
    out << '\n';
  }
  return out.str();
}

ConcatenatedTrajectory leg_trajectory(const LegResult & leg)
{
  ConcatenatedTrajectory t;
  t.h = leg.problem.h;
  t.states = leg.report.trajectory;
  t.costates = leg.report.costates;
  t.torques = leg.report.torques;
  t.multipliers = leg.report.multipliers;
  return t;
}

void write_node(std::ostream & out, const char * prefix, const NodeState & x)
{
  out << prefix << "x = " << num(x.g.x) << '\n'
      << prefix << "y = " << num(x.g.y) << '\n'
      << prefix << "theta = " << num(x.g.theta) << '\n'
      << prefix << "alpha = " << num(x.s[0]) << '\n'
      << prefix << "phi1 = " << num(x.s[1]) << '\n'
      << prefix << "phi2 = " << num(x.s[2]) << '\n'
      << prefix << "v_alpha = " << num(x.v[0]) << '\n'
      << prefix << "v_phi1 = " << num(x.v[1]) << '\n'
      << prefix << "v_phi2 = " << num(x.v[2]) << '\n';
}

NodeState read_node(const KeyValueSection & s, const std::string & prefix)
{
  NodeState x;
  x.g = {s.number(prefix + "x"), s.number(prefix + "y"), s.number(prefix + "theta")};
  x.s = {s.number(prefix + "alpha"), s.number(prefix + "phi1"), s.number(prefix + "phi2")};
  x.v = {s.number(prefix + "v_alpha"), s.number(prefix + "v_phi1"), s.number(prefix + "v_phi2")};
  return x;
}

std::string format_problems(const ManeuverResult & result)
{
  std::ostringstream out;
  for (std::size_t i = 0; i < result.legs.size(); ++i) {
    const OcProblem & p = result.legs[i].problem;
    out << "[leg]\n"
        << "index = " << i << '\n'
        << "file = leg_" << i << ".csv\n"
        << "N = " << p.N << '\n'
        << "h = " << num(p.h) << '\n'
        << "mu = " << num(p.bounds.mu) << '\n'
        << "nu = " << num(p.bounds.nu) << '\n'
        << "a = " << num(p.bounds.a) << '\n';
    write_node(out, "initial_", p.initial);
    out << "final_x = " << num(p.final_g.x) << '\n'
        << "final_y = " << num(p.final_g.y) << '\n'
        << "final_theta = " << num(p.final_g.theta) << '\n'
        << "final_alpha = " << num(p.final_alpha) << '\n'
        << "final_v_alpha = " << num(p.final_v[0]) << '\n'
        << "final_v_phi1 = " << num(p.final_v[1]) << '\n'
        << "final_v_phi2 = " << num(p.final_v[2]) << "\n\n";
  }
  return out.str();
}

std::string format_kkt_log(const ManeuverResult & result, const WipModel & model)
{
  std::ostringstream out;
  out << std::setprecision(6) << std::scientific;
  for (std::size_t i = 0; i < result.legs.size(); ++i) {
    const auto & leg = result.legs[i];
    const auto & rep = leg.report;
    out << "leg " << i << ": converged=" << (rep.converged ? "yes" : "no") << " segments=" << rep.segments
        << " homotopy_steps=" << rep.homotopy_steps << '\n';
    for (const auto & s : rep.stages) {
      out << "  eps=" << s.eps << " iterations=" << s.iterations << " start=" << s.start_residual
          << " final=" << s.final_residual << '\n';
    }
    IntegratorConfig icfg;
    icfg.h = leg.problem.h;
    const KktBreakdown k =
      kkt_breakdown(rep.trajectory, rep.costates, rep.multipliers, rep.torques, leg.problem, model, icfg);
    out << "  kkt dynamics=" << k.dynamics << " adjoint=" << k.adjoint << " transversality=" << k.transversality
        << " complementarity=" << k.complementarity << " stationarity=" << k.stationarity
        << " boundary=" << k.boundary << " max=" << k.max() << '\n';
    out << "  residual history:";
    for (double r : rep.residual_history) out << ' ' << r;
    out << "\n";
  }
  return out.str();
}

}  // namespace

const std::vector<std::string> & trajectory_columns()
{
  static const std::vector<std::string> cols = {
    "k",      "t",      "x",      "y",       "theta",   "alpha",   "phi1",    "phi2",
    "v_alpha", "v_phi1", "v_phi2", "tau1",   "tau2",    "zeta1",   "zeta2",   "zeta3",
    "psi1",   "psi2",   "psi3",   "lambda1", "lambda2", "lambda3", "sigma",   "beta1",
    "beta2",  "beta3"};
  return cols;
}

std::string format_trajectory_csv(const ConcatenatedTrajectory & traj)
{
  std::ostringstream out;
  const auto & cols = trajectory_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const auto & x = traj.states[k];
    const NodeCostate c = k < traj.costates.size() ? traj.costates[k] : NodeCostate{};
    const Multipliers m = k < traj.multipliers.size() ? traj.multipliers[k] : Multipliers{};
    const Torque tau = k < traj.torques.size() ? traj.torques[k] : Torque::Constant(NAN);
    out << k << ',' << num(static_cast<double>(k) * traj.h) << ',' << num(x.g.x) << ',' << num(x.g.y) << ','
        << num(x.g.theta);
    for (int i = 0; i < 3; ++i) out << ',' << num(x.s[i]);
    for (int i = 0; i < 3; ++i) out << ',' << num(x.v[i]);
    out << ',' << num(tau[0]) << ',' << num(tau[1]);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.zeta[i]);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.psi[i]);
    for (int i = 0; i < 3; ++i) out << ',' << num(c.lambda[i]);
    out << ',' << num(m.sigma);
    for (int i = 0; i < 3; ++i) out << ',' << num(m.beta[i]);
    out << '\n';
  }
  return out.str();
}

ConcatenatedTrajectory parse_trajectory_csv(const std::string & text)
{
  const auto & cols = trajectory_columns();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError("trajectory CSV is empty", "header");
  ++lineno;
  if (split(line, ',') != cols) throw ParseError("trajectory CSV header does not match the expected columns", "header");

  ConcatenatedTrajectory traj;
  std::vector<double> times;
  std::vector<Torque> torques;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line, ',');
    if (cells.size() != cols.size()) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) + " fields",
                       "row");
    }
    double v[26];
    for (std::size_t i = 0; i < cols.size(); ++i) v[i] = parse_number(cells[i], cols[i], lineno);
    NodeState x;
    x.g = {v[2], v[3], v[4]};
    x.s = {v[5], v[6], v[7]};
    x.v = {v[8], v[9], v[10]};
    NodeCostate c;
    c.zeta = {v[13], v[14], v[15]};
    c.psi = {v[16], v[17], v[18]};
    c.lambda = {v[19], v[20], v[21]};
    Multipliers m;
    m.sigma = v[22];
    m.beta = {v[23], v[24], v[25]};
    times.push_back(v[1]);
    traj.states.push_back(x);
    traj.costates.push_back(c);
    traj.multipliers.push_back(m);
    torques.push_back({v[11], v[12]});
  }
  if (!traj.states.empty()) {
    torques.pop_back();
    for (std::size_t k = 0; k < torques.size(); ++k) {
      if (!torques[k].allFinite()) {
        throw ParseError("row " + std::to_string(k) + ": torque must be finite except on the last row", "tau1");
      }
    }
  }
  traj.torques = std::move(torques);
  if (times.size() >= 2) traj.h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  return traj;
}

ConcatenatedTrajectory load_trajectory_csv(const fs::path & file) { return parse_trajectory_csv(read_text_file(file)); }

std::vector<Torque> parse_torque_csv(const std::string & text)
{
  std::vector<Torque> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (out.empty() && is_header(line)) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2) throw ParseError("line " + std::to_string(lineno) + ": expected 'tau1,tau2'", "tau");
    const Torque tau{parse_number(cells[0], "tau1", lineno), parse_number(cells[1], "tau2", lineno)};
    if (!tau.allFinite()) throw ParseError("line " + std::to_string(lineno) + ": torque must be finite", "tau");
    out.push_back(tau);
  }
  return out;
}

NodeState parse_initial_state(const std::string & text)
{
  const KeyValueSection & s = parse_key_value(text).top();
  NodeState x;
  x.g = {s.number_or("x", 0.0), s.number_or("y", 0.0), deg_to_rad(s.number_or("theta_deg", 0.0))};
  x.s = {deg_to_rad(s.number_or("alpha_deg", 0.0)), s.number_or("phi1", 0.0), s.number_or("phi2", 0.0)};
  x.v = {s.number_or("v_alpha", 0.0), s.number_or("v_phi1", 0.0), s.number_or("v_phi2", 0.0)};
  return x;
}

std::string plot_script(const std::string & title, const std::string & csv_name, double mu)
{
  std::ostringstream out;
  out << R"(#!/usr/bin/env python3
# Draws the optimal torques and the state trajectories stored next to this script.
import csv
import math
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, ")" << csv_name << R"(")
MU = )" << num(mu) << R"(
TITLE = ")" << title << R"("


def column(rows, name):
    out = []
    for r in rows:
        try:
            out.append(float(r[name]))
        except (KeyError, ValueError):
            out.append(math.nan)
    return out


def main():
    with open(CSV, newline="") as f:
        rows = list(csv.DictReader(f))
    t = column(rows, "t")
    fig, ax = plt.subplots(5, 1, figsize=(7, 15))
    fig.suptitle(TITLE)

    ax[0].plot(t, column(rows, "tau1"), label="tau1")
    ax[0].plot(t, column(rows, "tau2"), label="tau2")
    ax[0].axhline(MU, color="k", linestyle="--", linewidth=0.8)
    ax[0].axhline(-MU, color="k", linestyle="--", linewidth=0.8)
    ax[0].set_ylim(-1.2 * MU, 1.2 * MU)
    ax[0].set_ylabel("torque [N m]")

    ax[1].plot(t, column(rows, "x"), label="x")
    ax[1].plot(t, column(rows, "y"), label="y")
    ax[1].set_ylabel("position [m]")

    ax[2].plot(t, [math.degrees(a) for a in column(rows, "alpha")], label="alpha")
    ax[2].plot(t, [math.degrees(a) for a in column(rows, "theta")], label="theta")
    ax[2].set_ylabel("angle [deg]")

    ax[3].plot(t, column(rows, "v_alpha"), label="v_alpha")
    ax[3].plot(t, column(rows, "v_phi1"), label="v_phi1")
    ax[3].plot(t, column(rows, "v_phi2"), label="v_phi2")
    ax[3].set_ylabel("rate [rad/s]")
    ax[3].set_xlabel("t [s]")

    ax[4].plot(column(rows, "x"), column(rows, "y"))
    ax[4].set_xlabel("x [m]")
    ax[4].set_ylabel("y [m]")
    ax[4].set_aspect("equal", adjustable="datalim")

    for a in ax[:4]:
        if a.get_lines():
            a.legend(loc="best", fontsize="small")
    fig.tight_layout()
    target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "plot.png")
    fig.savefig(target, dpi=120)


if __name__ == "__main__":
    main()
)";
  return out.str();
}

RunArtifacts write_simulation(const fs::path & dir, const ConcatenatedTrajectory & traj, const WipParams & params)
{
  fs::create_directories(dir);
  RunArtifacts a;
  a.trajectory_csv = dir / "trajectory.csv";
  a.costate_csv = dir / "costates.csv";
  a.plot_script = dir / "plot.py";
  a.summary = dir / "summary.txt";
  write_file_atomic(a.trajectory_csv, format_trajectory_csv(traj));
  write_file_atomic(a.costate_csv, costate_csv(traj));
  write_file_atomic(a.plot_script, plot_script("simulation", "trajectory.csv", 8e-3));
  write_file_atomic(dir / "params.kv", format_params(params));
  std::ostringstream s;
  s << std::setprecision(10) << "steps = " << traj.torques.size() << "\nh = " << traj.h << '\n';
  write_file_atomic(a.summary, s.str());
  return a;
}

std::string format_summary(const ManeuverSpec & spec, const ManeuverResult & result)
{
  std::ostringstream out;
  out << "maneuver = " << spec.name << '\n' << "legs = " << spec.legs() << '\n';
  out << "converged = " << (result.converged ? "yes" : "no") << '\n';
  int iters = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < result.legs.size(); ++i) {
    const auto & r = result.legs[i].report;
    iters += r.iterations;
    worst = std::max(worst, r.final_residual);
    out << "leg " << i << ": cost = " << num(r.cost) << "  residual = " << std::scientific << std::setprecision(3)
        << r.final_residual << "  kkt = " << r.kkt << std::defaultfloat << "  iterations = " << r.iterations
        << "  converged = " << (r.converged ? "yes" : "no") << "  seconds = " << std::setprecision(3)
        << result.legs[i].seconds << '\n';
  }
  out << "total cost = " << num(result.total_cost()) << '\n'
      << "max residual = " << std::scientific << std::setprecision(3) << worst << std::defaultfloat << '\n'
      << "total iterations = " << iters << '\n';
  if (!result.converged && result.failed_leg >= 0) out << "failed leg = " << result.failed_leg << '\n';
  return out.str();
}

std::string format_summary_json(const ManeuverSpec & spec, const ManeuverResult & result)
{
  nlohmann::json legs = nlohmann::json::array();
  for (const auto & leg : result.legs) {
    const auto & r = leg.report;
    legs.push_back({{"cost", r.cost},
                    {"residual", r.final_residual},
                    {"kkt", r.kkt},
                    {"iterations", r.iterations},
                    {"homotopy_steps", r.homotopy_steps},
                    {"segments", r.segments},
                    {"converged", r.converged},
                    {"seconds", leg.seconds},
                    {"message", r.message}});
  }
  nlohmann::json j = {{"maneuver", spec.name},
                      {"h", spec.h},
                      {"mu", spec.bounds.mu},
                      {"converged", result.converged},
                      {"total_cost", result.total_cost()},
                      {"legs", legs}};
  if (!result.converged) j["failed_leg"] = result.failed_leg;
  return j.dump(2) + "\n";
}

RunArtifacts write_maneuver(const fs::path & dir, const ManeuverSpec & spec, const ManeuverResult & result,
                            const WipParams & params)
{
  fs::create_directories(dir);
  RunArtifacts a;
  a.trajectory_csv = dir / "trajectory.csv";
  a.costate_csv = dir / "costates.csv";
  a.plot_script = dir / "plot.py";
  a.summary = dir / "summary.txt";
  a.summary_json = dir / "summary.json";
  a.kkt_log = dir / "kkt.log";
  a.problem_file = dir / "problem.kv";
  const ConcatenatedTrajectory traj = concatenate(result);
  write_file_atomic(a.trajectory_csv, format_trajectory_csv(traj));
  write_file_atomic(a.costate_csv, costate_csv(traj));
  for (std::size_t i = 0; i < result.legs.size(); ++i) {
    a.leg_csvs.push_back(dir / ("leg_" + std::to_string(i) + ".csv"));
    write_file_atomic(a.leg_csvs.back(), format_trajectory_csv(leg_trajectory(result.legs[i])));
  }
  write_file_atomic(a.problem_file, format_problems(result));
  write_file_atomic(dir / "params.kv", format_params(params));
  write_file_atomic(dir / "maneuver.kv", format_maneuver(spec));
  write_file_atomic(a.summary, format_summary(spec, result));
  write_file_atomic(a.summary_json, format_summary_json(spec, result));
  write_file_atomic(a.kkt_log, format_kkt_log(result, WipModel(params)));
  write_file_atomic(a.plot_script, plot_script(spec.name, "trajectory.csv", spec.bounds.mu));
  return a;
}

std::vector<LegCheck> check_run_directory(const fs::path & dir, const ValidationTolerances & tol)
{
  const WipModel model(load_params(dir / "params.kv"));
  const KeyValueDocument doc = load_key_value(dir / "problem.kv");
  const auto legs = doc.all("leg");
  if (legs.empty()) throw ParseError("'" + (dir / "problem.kv").string() + "' lists no legs", "leg");
  std::vector<LegCheck> out;
  for (const KeyValueSection * s : legs) {
    OcProblem p;
    p.N = static_cast<int>(s->number("N"));
    p.h = s->number("h");
    p.bounds = {s->number("mu"), s->number("nu"), s->number("a")};
    p.initial = read_node(*s, "initial_");
    p.final_g = {s->number("final_x"), s->number("final_y"), s->number("final_theta")};
    p.final_alpha = s->number("final_alpha");
    p.final_v = {s->number("final_v_alpha"), s->number("final_v_phi1"), s->number("final_v_phi2")};
    const std::string file = s->text("file").value_or("");
    if (file.empty()) throw ParseError("leg section without 'file'", "file");
    const ConcatenatedTrajectory t = load_trajectory_csv(dir / file);

    SolveReport rep;
    rep.trajectory = t.states;
    rep.costates = t.costates;
    rep.torques = t.torques;
    rep.multipliers = t.multipliers;
    LegCheck c;
    c.leg = static_cast<int>(s->number("index"));
    c.violations = validate_report(rep, p, model, tol);
    if (rep.trajectory.size() == static_cast<std::size_t>(p.N) + 1 && rep.torques.size() == static_cast<std::size_t>(p.N)) {
      IntegratorConfig icfg;
      icfg.h = p.h;
      c.kkt = kkt_residual(rep.trajectory, rep.costates, rep.multipliers, rep.torques, p, model, icfg);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace wip
