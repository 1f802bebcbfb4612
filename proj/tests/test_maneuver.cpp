#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "wip/artifacts.hpp"
#include "wip/errors.hpp"
#include "wip/keyvalue.hpp"
#include "wip/maneuver.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string & name)
{
  const fs::path dir = fs::temp_directory_path() / ("wip_test_" + name);
  fs::remove_all(dir);
  return dir;
}

void same_spec(const wip::ManeuverSpec & a, const wip::ManeuverSpec & b)
{
  CHECK(a.name == b.name);
  CHECK(a.h == b.h);
  CHECK(a.leg_duration == b.leg_duration);
  CHECK(a.bounds.mu == b.bounds.mu);
  CHECK(a.bounds.nu == b.bounds.nu);
  CHECK(a.bounds.a == doctest::Approx(b.bounds.a).epsilon(1e-15));
  REQUIRE(a.waypoints.size() == b.waypoints.size());
  for (std::size_t i = 0; i < a.waypoints.size(); ++i) {
    const auto & p = a.waypoints[i];
    const auto & q = b.waypoints[i];
    CHECK(p.x == q.x);
    CHECK(p.y == q.y);
    CHECK(p.theta_deg == q.theta_deg);
    CHECK(p.alpha_deg == q.alpha_deg);
    CHECK(p.v == q.v);
    CHECK(p.duration_s == q.duration_s);
  }
}

/// Two short legs with small moves: forward 5 cm, then a 0.3 rad turn in place.
wip::ManeuverSpec short_maneuver()
{
  wip::ManeuverSpec m;
  m.name = "short";
  m.leg_duration = 1.0;
  m.waypoints = {
    {0.0, 0.0, 0.0, 0.0, {0.0, 0.0, 0.0}, {}},
    {0.05, 0.0, 0.0, 0.0, {0.0, 0.0, 0.0}, {}},
    {0.05, 0.0, 0.3 * 180.0 / std::numbers::pi, 0.0, {0.0, 0.0, 0.0}, 1.5},
  };
  return m;
}

}  // namespace

TEST_CASE("built-in maneuvers")
{
  const auto m1 = wip::builtin_maneuver("M1");
  CHECK(m1.legs() == 4);
  CHECK(m1.leg_steps(0) == 100);
  CHECK(m1.bounds.mu == 8e-3);
  CHECK(m1.waypoints[1].node().g.theta == doctest::Approx(0.75 * std::numbers::pi));
  CHECK(m1.waypoints[1].node().s[0] == doctest::Approx(5.0 * std::numbers::pi / 180.0));
  CHECK(m1.waypoints.back().node().g.theta == doctest::Approx(2.0 * std::numbers::pi));
  CHECK(m1.waypoints.front().x == m1.waypoints.back().x);

  const auto m2 = wip::builtin_maneuver("M2");
  CHECK(m2.legs() == 2);
  CHECK(m2.leg_steps(0) + m2.leg_steps(1) == 200);
  for (const auto & w : m2.waypoints) CHECK(w.v == wip::BaseVelocity(0.0, 5.0, 5.0));
  CHECK_THROWS_AS(wip::builtin_maneuver("M3"), wip::ParseError);

  // the shipped config files describe the same maneuvers
  same_spec(wip::load_maneuver(fs::path(WIP_CONFIG_DIR) / "m1.kv"), m1);
  same_spec(wip::load_maneuver(fs::path(WIP_CONFIG_DIR) / "m2.kv"), m2);
}

TEST_CASE("maneuver text round trip and validation")
{
  for (const auto & name : wip::builtin_names()) {
    const auto m = wip::builtin_maneuver(name);
    same_spec(wip::parse_maneuver(wip::format_maneuver(m)), m);
  }
  const auto s = short_maneuver();
  same_spec(wip::parse_maneuver(wip::format_maneuver(s)), s);
  CHECK(s.leg_steps(1) == 30);

  const std::string wp = "x = 0\ny = 0\ntheta_deg = 0\nalpha_deg = 0\nv_alpha = 0\nv_phi1 = 0\nv_phi2 = 0\n";
  const std::string good = "name = t\nh = 0.05\nduration_s = 1\n[waypoint]\n" + wp + "[waypoint]\n" + wp;
  CHECK_NOTHROW(wip::parse_maneuver(good).validate());
  try {
    wip::parse_maneuver("duration_s = 1.01\n[waypoint]\n" + wp + "[waypoint]\n" + wp).validate();
    FAIL("expected a parse error");
  } catch (const wip::ParseError & e) {
    CHECK(e.field() == "duration_s");
  }
  CHECK_THROWS_AS(wip::parse_maneuver("[waypoint]\n" + wp).validate(), wip::ParseError);
  try {
    (void)wip::parse_maneuver("[waypoint]\nx = 0\n");
    FAIL("expected a parse error");
  } catch (const wip::ParseError & e) {
    CHECK(e.field() == "y");
  }
  try {
    (void)wip::parse_maneuver("[waypoint]\nx = zero\n");
    FAIL("expected a parse error");
  } catch (const wip::ParseError & e) {
    CHECK(e.field() == "x");
  }
  CHECK_THROWS_AS(wip::parse_maneuver("[corner]\nx = 0\n"), wip::ParseError);
}

TEST_CASE("leg problems chain through the previous end state")
{
  const auto s = short_maneuver();
  wip::NodeState start = s.waypoints[1].node();
  start.s[1] = 0.7;
  start.s[2] = 0.8;
  const auto p = wip::leg_problem(s, 1, start);
  CHECK(p.N == 30);
  CHECK(p.initial.s[1] == 0.7);
  CHECK(p.final_g.theta == doctest::Approx(0.3));
  CHECK(p.bounds.mu == s.bounds.mu);
}

TEST_CASE("identical waypoints at rest give a zero-cost leg")
{
  wip::ManeuverSpec m;
  m.name = "still";
  m.leg_duration = 1.0;
  m.waypoints = {{0.3, -0.2, 45.0, 0.0, {0.0, 0.0, 0.0}, {}}, {0.3, -0.2, 45.0, 0.0, {0.0, 0.0, 0.0}, {}}};
  const auto r = wip::solve_maneuver(m, {}, wip::WipModel{});
  REQUIRE(r.converged);
  CHECK(r.total_cost() < 1e-30);
}

TEST_CASE("a short maneuver: artifacts, replay and check")
{
  const wip::WipModel model;
  const auto spec = short_maneuver();
  int calls = 0;
  const auto result = wip::solve_maneuver(spec, {}, model, [&](int leg, const wip::LegResult & r) {
    CHECK(leg == calls++);
    CHECK(r.report.converged);
  });
  REQUIRE(result.converged);
  CHECK(calls == 2);
  CHECK(result.total_cost() == doctest::Approx(result.legs[0].report.cost + result.legs[1].report.cost));

  // the second leg starts where the first ended, wheel angles included
  const auto & end0 = result.legs[0].report.trajectory.back();
  const auto & start1 = result.legs[1].problem.initial;
  CHECK(start1.s == end0.s);
  CHECK(start1.v == end0.v);

  const auto traj = wip::concatenate(result);
  CHECK(traj.states.size() == 20 + 30 + 1);
  CHECK(traj.torques.size() == 50);

  const fs::path dir = scratch_dir("short");
  const auto art = wip::write_maneuver(dir, spec, result, model.params());
  for (const auto & f : {art.trajectory_csv, art.costate_csv, art.summary, art.plot_script, art.kkt_log, art.problem_file}) {
    CHECK(fs::exists(f));
  }
  CHECK(art.leg_csvs.size() == 2);
  const auto summary = nlohmann::json::parse(wip::read_text_file(art.summary_json));
  CHECK(summary["maneuver"] == "short");
  CHECK(summary["converged"] == true);
  CHECK(summary["legs"].size() == 2);
  CHECK(summary["total_cost"].get<double>() == result.total_cost());
  CHECK(summary["legs"][1]["iterations"].get<int>() == result.legs[1].report.iterations);
  CHECK_FALSE(summary.contains("failed_leg"));

  // stored torques reproduce the stored states one step at a time
  const auto stored = wip::load_trajectory_csv(art.trajectory_csv);
  REQUIRE(stored.states.size() == traj.states.size());
  CHECK(stored.h == doctest::Approx(0.05).epsilon(1e-12));
  wip::IntegratorConfig ic;
  double worst = 0.0;
  for (std::size_t k = 0; k < stored.torques.size(); ++k) {
    const auto next = wip::step(stored.states[k], stored.torques[k], ic, model);
    const auto & ref = stored.states[k + 1];
    worst = std::max({worst, (next.g.vector() - ref.g.vector()).lpNorm<Eigen::Infinity>(),
                      (next.s - ref.s).lpNorm<Eigen::Infinity>(), (next.v - ref.v).lpNorm<Eigen::Infinity>()});
  }
  CHECK(worst <= 1e-10);

  const auto checks = wip::check_run_directory(dir);
  REQUIRE(checks.size() == 2);
  for (const auto & c : checks) {
    CHECK(c.violations.empty());
    CHECK(c.kkt <= 1e-9);
  }

  // a tampered torque is caught
  {
    auto leg = wip::load_trajectory_csv(art.leg_csvs[0]);
    leg.torques[3][1] = 0.02;
    std::ofstream(art.leg_csvs[0]) << wip::format_trajectory_csv(leg);
  }
  const auto bad = wip::check_run_directory(dir);
  bool torque_flag = false;
  for (const auto & v : bad[0].violations) torque_flag = torque_flag || (v.kind == "torque_bound" && v.index == 3);
  CHECK(torque_flag);
  CHECK(bad[1].violations.empty());

  fs::remove(art.problem_file);
  CHECK_THROWS_AS(wip::check_run_directory(dir), wip::ParseError);
  fs::remove_all(dir);
}

TEST_CASE("trajectory CSV")
{
  const auto & cols = wip::trajectory_columns();
  REQUIRE(cols.size() == 26);
  CHECK(cols.front() == "k");
  CHECK(cols[11] == "tau1");
  CHECK(cols.back() == "beta3");

  wip::ConcatenatedTrajectory t;
  t.h = 0.05;
  wip::NodeState a;
  a.g = {0.1, 1.0 / 3.0, 7.0};
  a.s = {0.01, -2.0, 1e-300};
  a.v = {std::numbers::pi, -1.0, 2.0};
  wip::NodeState b = a;
  b.g.x = -0.25;
  t.states = {a, b};
  t.torques = {wip::Torque(1e-3 / 3.0, -7e-3)};
  wip::NodeCostate c;
  c.zeta = {1.0, 2.0, 3.0};
  c.psi = {4.0 / 3.0, 5.0, 6.0};
  c.lambda = {7.0, 8.0, 9.0};
  t.costates = {c, c};
  wip::Multipliers mu;
  mu.sigma = -0.5;
  mu.beta = {-1.0, 0.0, -2.0 / 3.0};
  t.multipliers = {mu, mu};

  const std::string text = wip::format_trajectory_csv(t);
  CHECK(text.rfind("k,t,x,y,theta,alpha,phi1,phi2,v_alpha,v_phi1,v_phi2,tau1,tau2,", 0) == 0);
  const auto back = wip::parse_trajectory_csv(text);
  REQUIRE(back.states.size() == 2);
  CHECK(back.states[0].g.vector() == a.g.vector());
  CHECK(back.states[0].s == a.s);
  CHECK(back.states[0].v == a.v);
  CHECK(back.states[1].g.x == -0.25);
  CHECK(back.torques[0] == t.torques[0]);
  CHECK(back.costates[1].psi == c.psi);
  CHECK(back.multipliers[0].beta == mu.beta);
  CHECK(back.multipliers[0].sigma == mu.sigma);

  CHECK_THROWS_AS(wip::parse_trajectory_csv("k,t\n0,0\n"), wip::ParseError);
  CHECK_THROWS_AS(wip::parse_trajectory_csv(""), wip::ParseError);
}

TEST_CASE("simulation inputs")
{
  const auto tau = wip::parse_torque_csv("tau1,tau2\n0.001,-0.002\n\n3e-3, 4e-3\n");
  REQUIRE(tau.size() == 2);
  CHECK(tau[1] == wip::Torque(3e-3, 4e-3));
  CHECK(wip::parse_torque_csv("1,2\n").size() == 1);
  CHECK_THROWS_AS(wip::parse_torque_csv("1,2,3\n"), wip::ParseError);
  CHECK_THROWS_AS(wip::parse_torque_csv("1,x\n"), wip::ParseError);

  const auto x0 = wip::parse_initial_state(wip::read_text_file(fs::path(WIP_CONFIG_DIR) / "initial_m2.kv"));
  CHECK(x0.v == wip::BaseVelocity(0.0, 5.0, 5.0));
  CHECK(x0.g.theta == 0.0);
  const auto tilt = wip::parse_initial_state(wip::read_text_file(fs::path(WIP_CONFIG_DIR) / "tilt5.kv"));
  CHECK(tilt.s[0] == doctest::Approx(5.0 * std::numbers::pi / 180.0));
  CHECK(tilt.v.isZero());
  try {
    (void)wip::parse_initial_state("theta_deg = north\n");
    FAIL("expected a parse error");
  } catch (const wip::ParseError & e) {
    CHECK(e.field() == "theta_deg");
  }
}

TEST_CASE("plot script")
{
  const std::string s = wip::plot_script("M2", "trajectory.csv", 8e-3);
  CHECK(s.find("import matplotlib") != std::string::npos);
  CHECK(s.find("trajectory.csv") != std::string::npos);
  CHECK(s.find("0.008") != std::string::npos);

  // an empty trajectory still yields a script and a header-only CSV
  const fs::path dir = scratch_dir("empty");
  wip::ConcatenatedTrajectory empty;
  const auto art = wip::write_simulation(dir, empty, wip::WipParams{});
  CHECK(fs::exists(art.plot_script));
  CHECK(wip::load_trajectory_csv(art.trajectory_csv).states.empty());
  fs::remove_all(dir);
}
