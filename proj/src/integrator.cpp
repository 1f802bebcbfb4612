#include "wip/integrator.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

#include "wip/errors.hpp"

namespace wip {

void IntegratorConfig::validate() const
{
  if (!(h > 0.0) || !std::isfinite(h)) throw Error("integrator step h must be positive");
  if (!(newton_tol > 0.0)) throw Error("newton_tol must be positive");
  if (newton_max_iters < 1) throw Error("newton_max_iters must be at least 1");
}

BaseVelocity newton_solve_velocity(double alpha_next, const Eigen::Vector3d & rhs, const BaseVelocity & guess,
                                   const IntegratorConfig & cfg, const WipModel & model, NewtonTrace * trace)
{
  const Eigen::Matrix3d mass = model.mass_matrix(alpha_next);
  auto residual = [&](const BaseVelocity & v) -> Eigen::Vector3d {
    return mass * v - cfg.h * model.coriolis(alpha_next, v) - rhs;
  };

  BaseVelocity v = guess;
  Eigen::Vector3d r = residual(v);
  double norm = r.lpNorm<Eigen::Infinity>();
  if (trace) trace->residuals.push_back(norm);

  for (int iter = 0; iter < cfg.newton_max_iters && !(norm <= cfg.newton_tol); ++iter) {
    const Eigen::Matrix3d jac = mass - cfg.h * model.d_coriolis_d_v(alpha_next, v);
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(jac);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
      throw SingularJacobian("velocity update Jacobian is singular at alpha = " + std::to_string(alpha_next));
    }
    const Eigen::Vector3d delta = lu.solve(r);

    double scale = 1.0;
    BaseVelocity trial = v - delta;
    Eigen::Vector3d r_trial = residual(trial);
    for (int halving = 0; halving < 10 && !(r_trial.lpNorm<Eigen::Infinity>() < norm); ++halving) {
      scale *= 0.5;
      trial = v - scale * delta;
      r_trial = residual(trial);
    }
    v = trial;
    r = r_trial;
    norm = r.lpNorm<Eigen::Infinity>();
    if (trace) trace->residuals.push_back(norm);
  }

  if (!(norm <= cfg.newton_tol)) {
    throw NewtonDivergence("velocity update did not converge (residual " + std::to_string(norm) + ")", norm);
  }

  // One extra full step once inside the tolerance: the result then sits at
  // round-off level, which keeps it a smooth function of rhs and alpha_next.
  if (norm > 0.0) {
    const Eigen::Matrix3d jac = mass - cfg.h * model.d_coriolis_d_v(alpha_next, v);
    const BaseVelocity polished = v - jac.partialPivLu().solve(r);
    if (residual(polished).lpNorm<Eigen::Infinity>() <= norm) v = polished;
  }
  return v;
}

NodeState step(const NodeState & x, const Torque & tau, const IntegratorConfig & cfg, const WipModel & model)
{
  NodeState next;
  next.g = se2::compose(x.g, se2::exp(model.body_velocity(x.v), cfg.h));
  next.s = x.s + cfg.h * x.v;
  const Eigen::Vector3d rhs = model.mass_matrix(x.s[0]) * x.v + cfg.h * WipModel::embed_torque(tau);
  next.v = newton_solve_velocity(next.s[0], rhs, x.v, cfg, model);
  return next;
}

std::vector<NodeState> rollout(const NodeState & x0, std::span<const Torque> torques, const IntegratorConfig & cfg,
                               const WipModel & model)
{
  std::vector<NodeState> traj;
  traj.reserve(torques.size() + 1);
  traj.push_back(x0);
  for (std::size_t k = 0; k < torques.size(); ++k) {
    if (!torques[k].allFinite()) {
      throw IntegratorFailure("non-finite torque at step " + std::to_string(k), k);
    }
    try {
      traj.push_back(step(traj.back(), torques[k], cfg, model));
    } catch (const IntegratorFailure &) {
      throw;
    } catch (const Error & e) {
      throw IntegratorFailure("step " + std::to_string(k) + ": " + e.what(), k);
    }
  }
  return traj;
}

std::vector<double> energy_drift(std::span<const NodeState> trajectory, const WipModel & model)
{
  std::vector<double> out;
  out.reserve(trajectory.size());
  if (trajectory.empty()) return out;
  const double e0 = model.total_energy(trajectory.front().s, trajectory.front().v);
  for (const auto & node : trajectory) {
    out.push_back(model.total_energy(node.s, node.v) - e0);
  }
  return out;
}

double regression_slope(std::span<const double> series, double dt)
{
  const std::size_t n = series.size();
  if (n < 2) return 0.0;
  double t_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t_mean += static_cast<double>(i) * dt;
    y_mean += series[i];
  }
  t_mean /= static_cast<double>(n);
  y_mean /= static_cast<double>(n);
  double sty = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dtv = static_cast<double>(i) * dt - t_mean;
    sty += dtv * (series[i] - y_mean);
    stt += dtv * dtv;
  }
  return sty / stt;
}

}  // namespace wip
