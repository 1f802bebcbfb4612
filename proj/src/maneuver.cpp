#include "wip/maneuver.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "wip/errors.hpp"
#include "wip/keyvalue.hpp"

namespace wip {

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

NodeState Waypoint::node() const
{
  NodeState n;
  n.g = {x, y, deg_to_rad(theta_deg)};
  n.s = {deg_to_rad(alpha_deg), 0.0, 0.0};
  n.v = v;
  return n;
}

void ManeuverSpec::validate() const
{
  if (waypoints.size() < 2) throw ParseError("maneuver needs at least two waypoints", "waypoint");
  if (!(h > 0.0) || !std::isfinite(h)) throw ParseError("step h must be positive", "h");
  for (int leg = 0; leg < legs(); ++leg) (void)leg_steps(leg);
  try {
    bounds.validate();
  } catch (const Error & e) {
    throw ParseError(e.what(), "bounds");
  }
}

int ManeuverSpec::leg_steps(int leg) const
{
  const double duration = waypoints.at(static_cast<std::size_t>(leg) + 1).duration_s.value_or(leg_duration);
  const double steps = duration / h;
  if (!(duration > 0.0) || std::abs(steps - std::round(steps)) > 1e-9 || std::round(steps) < 2.0) {
    throw ParseError("leg " + std::to_string(leg) + ": duration_s must be a positive multiple of h (at least 2 steps)",
                     "duration_s");
  }
  return static_cast<int>(std::round(steps));
}

ManeuverSpec builtin_maneuver(const std::string & name)
{
  ManeuverSpec m;
  m.name = name;
  m.leg_duration = 5.0;
  m.h = 0.05;
  if (name == "M1") {
    // counterclockwise lap around (0, 1); d and the return to a sit one full turn up the cover
    m.waypoints = {
      {0.0, 0.0, 0.0, 0.0, {0.0, 0.0, 0.0}, {}},
      {1.0, 1.0, 135.0, 5.0, {0.0, 1.0, 1.0}, {}},
      {0.0, 2.0, 135.0, 5.0, {0.0, 0.5, 0.5}, {}},
      {-1.0, 1.0, 360.0, 5.0, {0.0, 0.5, 0.5}, {}},
      {0.0, 0.0, 360.0, 0.0, {0.0, 0.0, 0.0}, {}},
    };
  } else if (name == "M2") {
    m.waypoints = {
      {0.0, 0.0, 0.0, 0.0, {0.0, 5.0, 5.0}, {}},
      {0.0, 2.0, 0.0, 0.0, {0.0, 5.0, 5.0}, {}},
      {0.0, 0.0, 0.0, 0.0, {0.0, 5.0, 5.0}, {}},
    };
  } else {
    throw ParseError("unknown built-in maneuver '" + name + "' (expected M1 or M2)", "builtin");
  }
  return m;
}

std::vector<std::string> builtin_names() { return {"M1", "M2"}; }

ManeuverSpec parse_maneuver(const std::string & text)
{
  const KeyValueDocument doc = parse_key_value(text);
  const KeyValueSection & top = doc.top();
  ManeuverSpec m;
  m.name = top.text("name").value_or("maneuver");
  m.h = top.number_or("h", m.h);
  m.leg_duration = top.number_or("duration_s", m.leg_duration);
  m.bounds.mu = top.number_or("mu", m.bounds.mu);
  m.bounds.nu = top.number_or("nu", m.bounds.nu);
  if (top.has("tilt_bound_deg")) m.bounds.a = deg_to_rad(top.number("tilt_bound_deg"));
  for (const auto & section : doc.sections) {
    if (&section == &top) continue;
    if (section.name != "waypoint") {
      throw ParseError("line " + std::to_string(section.line) + ": unknown section [" + section.name + "]",
                       section.name);
    }
    Waypoint w;
    w.x = section.number("x");
    w.y = section.number("y");
    w.theta_deg = section.number("theta_deg");
    w.alpha_deg = section.number("alpha_deg");
    w.v = {section.number("v_alpha"), section.number("v_phi1"), section.number("v_phi2")};
    if (section.has("duration_s")) w.duration_s = section.number("duration_s");
    m.waypoints.push_back(w);
  }
  m.validate();
  return m;
}

ManeuverSpec load_maneuver(const std::filesystem::path & file) { return parse_maneuver(read_text_file(file)); }

std::string format_maneuver(const ManeuverSpec & spec)
{
  std::ostringstream out;
  out << std::setprecision(17);
  out << "name = " << spec.name << '\n'
      << "h = " << spec.h << '\n'
      << "duration_s = " << spec.leg_duration << '\n'
      << "mu = " << spec.bounds.mu << '\n'
      << "nu = " << spec.bounds.nu << '\n'
      << "tilt_bound_deg = " << spec.bounds.a * 180.0 / std::numbers::pi << '\n';
  for (const auto & w : spec.waypoints) {
    out << "\n[waypoint]\n"
        << "x = " << w.x << '\n'
        << "y = " << w.y << '\n'
        << "theta_deg = " << w.theta_deg << '\n'
        << "alpha_deg = " << w.alpha_deg << '\n'
        << "v_alpha = " << w.v[0] << '\n'
        << "v_phi1 = " << w.v[1] << '\n'
        << "v_phi2 = " << w.v[2] << '\n';
    if (w.duration_s) out << "duration_s = " << *w.duration_s << '\n';
  }
  return out.str();
}

OcProblem leg_problem(const ManeuverSpec & spec, int leg, const NodeState & start)
{
  const NodeState target = spec.waypoints.at(static_cast<std::size_t>(leg) + 1).node();
  OcProblem p;
  p.initial = start;
  p.final_g = target.g;
  p.final_alpha = target.s[0];
  p.final_v = target.v;
  p.N = spec.leg_steps(leg);
  p.h = spec.h;
  p.bounds = spec.bounds;
  return p;
}

double ManeuverResult::total_cost() const
{
  double c = 0.0;
  for (const auto & leg : legs) c += leg.report.cost;
  return c;
}

ManeuverResult solve_maneuver(const ManeuverSpec & spec, const ShootingConfig & cfg, const WipModel & model,
                              const LegCallback & on_leg)
{
  spec.validate();
  ManeuverResult out;
  NodeState start = spec.waypoints.front().node();
  for (int leg = 0; leg < spec.legs(); ++leg) {
    LegResult r;
    r.problem = leg_problem(spec, leg, start);
    const auto t0 = std::chrono::steady_clock::now();
    r.report = solve(r.problem, cfg, model);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = r.report.converged;
    start = r.report.trajectory.back();
    out.legs.push_back(std::move(r));
    if (on_leg) on_leg(leg, out.legs.back());
    if (!ok) {
      out.failed_leg = leg;
      return out;
    }
  }
  out.converged = true;
  return out;
}

ConcatenatedTrajectory concatenate(const ManeuverResult & result)
{
  ConcatenatedTrajectory c;
  if (result.legs.empty()) return c;
  c.h = result.legs.front().problem.h;
  for (std::size_t i = 0; i < result.legs.size(); ++i) {
    const SolveReport & rep = result.legs[i].report;
    const std::size_t first = i == 0 ? 0 : 1;
    if (i > 0) {
      // the joint node belongs to both legs; keep the costate and multipliers that drive the next leg
      c.costates.back() = rep.costates.front();
      c.multipliers.back() = rep.multipliers.front();
    }
    for (std::size_t k = first; k < rep.trajectory.size(); ++k) {
      c.states.push_back(rep.trajectory[k]);
      c.costates.push_back(rep.costates[k]);
      c.multipliers.push_back(rep.multipliers[k]);
    }
    c.torques.insert(c.torques.end(), rep.torques.begin(), rep.torques.end());
  }
  return c;
}

}  // namespace wip
