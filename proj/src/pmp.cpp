#include "wip/pmp.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <string>

#include "wip/errors.hpp"

namespace wip {

void Bounds::validate() const
{
  if (!(mu > 0.0) || !(nu > 0.0) || !(a > 0.0) || !std::isfinite(mu) || !std::isfinite(nu) || !std::isfinite(a)) {
    throw Error("bounds mu, nu and a must be finite and positive");
  }
}

void OcProblem::validate() const
{
  if (N < 2) throw Error("problem needs N >= 2 steps");
  if (!(h > 0.0) || !std::isfinite(h)) throw Error("problem step h must be positive");
  if (!initial.is_finite() || !final_g.is_finite() || !std::isfinite(final_alpha) || !final_v.allFinite()) {
    throw Error("problem boundary values must be finite");
  }
  bounds.validate();
}

double hamiltonian(const NodeCostate & cost, const NodeState & x, const Torque & tau, double eta, double h,
                   const WipModel & model)
{
  const Eigen::Vector3d momentum = model.mass_matrix(x.s[0]) * x.v + h * WipModel::embed_torque(tau);
  return 0.5 * eta * h * tau.squaredNorm()
    - cost.zeta.dot(h * model.connection() * x.v)
    + cost.psi.dot(x.s + h * x.v)
    + cost.lambda.dot(momentum);
}

Torque hamiltonian_torque_gradient(const NodeCostate & cost, const Torque & tau, double eta, double h)
{
  return eta * h * tau + h * cost.lambda.tail<2>();
}

Torque optimal_torque(const Eigen::Vector3d & lambda, double mu, double eta)
{
  Torque tau;
  for (int j = 0; j < 2; ++j) {
    const double l = lambda[j + 1];
    if (eta == kAbnormal) {
      tau[j] = l > 0.0 ? mu : (l < 0.0 ? -mu : 0.0);
    } else {
      tau[j] = std::clamp(l, -mu, mu);
    }
  }
  return tau;
}

CoAlgebraElement costate_transport_zeta(const CoAlgebraElement & zeta_prev, const BaseVelocity & v, double h,
                                        const WipModel & model)
{
  return se2::coadjoint(se2::exp(model.body_velocity(v), h), zeta_prev);
}

CoAlgebraElement costate_transport_zeta_backward(const CoAlgebraElement & zeta, const BaseVelocity & v, double h,
                                                 const WipModel & model)
{
  return se2::coadjoint(se2::exp(model.connection() * v, h), zeta);
}

AdjointBlocks adjoint_blocks(const NodeCostate & cost_prev, const CoAlgebraElement & zeta_k, const NodeState & x,
                             const Multipliers & mult, double h, const WipModel & model)
{
  (void)cost_prev;
  const double alpha = x.s[0];
  const Eigen::Matrix3d mass = model.mass_matrix(alpha);
  const Eigen::Vector3d dmv = model.d_mass_d_alpha(alpha) * x.v;
  const Eigen::Vector3d dfa = dmv - h * model.d_coriolis_d_alpha(alpha, x.v);
  const Eigen::Matrix3d dfv = mass - h * model.d_coriolis_d_v(alpha, x.v);

  // D_s(.) only has a tilt column, so its transpose only has a first row.
  Eigen::Matrix3d ds_mv = Eigen::Matrix3d::Zero();
  ds_mv.row(0) = dmv.transpose();
  Eigen::Matrix3d ds_f = Eigen::Matrix3d::Zero();
  ds_f.row(0) = dfa.transpose();

  AdjointBlocks blocks;
  blocks.lhs << Eigen::Matrix3d::Identity(), ds_mv, h * Eigen::Matrix3d::Identity(), mass.transpose();
  blocks.rhs << Eigen::Matrix3d::Identity(), ds_f, Eigen::Matrix3d::Zero(), dfv.transpose();
  blocks.forcing.head<3>() = Eigen::Vector3d(mult.sigma * alpha, 0.0, 0.0);
  blocks.forcing.tail<3>() = -h * model.connection().transpose() * zeta_k + mult.beta.cwiseProduct(x.v);
  return blocks;
}

NodeCostate adjoint_step(const NodeCostate & cost_prev, const NodeState & x, const Multipliers & mult, double h,
                         const WipModel & model)
{
  NodeCostate out;
  out.zeta = costate_transport_zeta(cost_prev.zeta, x.v, h, model);
  const AdjointBlocks blocks = adjoint_blocks(cost_prev, out.zeta, x, mult, h, model);

  Eigen::Matrix<double, 6, 1> prev;
  prev << cost_prev.psi, cost_prev.lambda;
  const Eigen::Matrix<double, 6, 1> rhs = blocks.rhs * prev - blocks.forcing;

  const Eigen::PartialPivLU<Eigen::Matrix<double, 6, 6>> lu(blocks.lhs);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw SingularAdjointSystem("adjoint block system is singular (rcond " + std::to_string(rcond) + ")", rcond);
  }
  const Eigen::Matrix<double, 6, 1> sol = lu.solve(rhs);
  out.psi = sol.head<3>();
  out.lambda = sol.tail<3>();
  return out;
}

Eigen::Matrix<double, 6, 1> adjoint_equation_residual(const NodeCostate & cost_prev, const NodeCostate & cost,
                                                      const NodeState & x, const Multipliers & mult, double h,
                                                      const WipModel & model)
{
  const AdjointBlocks blocks = adjoint_blocks(cost_prev, cost.zeta, x, mult, h, model);
  Eigen::Matrix<double, 6, 1> now, prev;
  now << cost.psi, cost.lambda;
  prev << cost_prev.psi, cost_prev.lambda;
  return blocks.lhs * now + blocks.forcing - blocks.rhs * prev;
}

Eigen::Vector2d transversality_residual(const NodeCostate & cost_final)
{
  return cost_final.psi.tail<2>();
}

double fischer_burmeister(double p, double q, double eps)
{
  const double root = std::sqrt(p * p + q * q + eps * eps);
  const double sum = p + q;
  // rationalized when the two terms nearly cancel
  return sum > 0.0 ? (2.0 * p * q - eps * eps) / (sum + root) : sum - root;
}

Eigen::Vector4d complementarity_residual(const NodeState & x, const Multipliers & mult, const Bounds & bounds,
                                         double eps)
{
  Eigen::Vector4d out;
  const double alpha = x.s[0];
  out[0] = fischer_burmeister(-mult.sigma, bounds.a * bounds.a - alpha * alpha, eps);
  for (int j = 0; j < 3; ++j) {
    out[j + 1] = fischer_burmeister(-mult.beta[j], bounds.nu * bounds.nu - x.v[j] * x.v[j], eps);
  }
  return out;
}

double KktBreakdown::max() const
{
  return std::max({dynamics, adjoint, transversality, complementarity, stationarity, boundary});
}

Eigen::Vector3d momentum_defect(const NodeState & x, const NodeState & next, const Torque & tau, double h,
                                const WipModel & model)
{
  const double a1 = next.s[0];
  return model.mass_matrix(a1) * next.v - h * model.coriolis(a1, next.v) - model.mass_matrix(x.s[0]) * x.v
    - h * WipModel::embed_torque(tau);
}

AlgebraElement pose_defect(const NodeState & x, const NodeState & next, double h, const WipModel & model)
{
  const GroupElement predicted = se2::compose(x.g, se2::exp(model.body_velocity(x.v), h));
  return se2::log(se2::compose(se2::inverse(predicted), next.g));
}

KktBreakdown kkt_breakdown(std::span<const NodeState> trajectory, std::span<const NodeCostate> costates,
                           std::span<const Multipliers> multipliers, std::span<const Torque> torques,
                           const OcProblem & problem, const WipModel & model, const IntegratorConfig & cfg)
{
  const auto n = static_cast<std::size_t>(problem.N);
  if (trajectory.size() != n + 1 || costates.size() != n + 1 || multipliers.size() != n + 1 || torques.size() != n) {
    throw Error("kkt_residual: inconsistent sequence lengths");
  }
  const double h = cfg.h;
  KktBreakdown out;
  auto bump = [](double & slot, double value) { slot = std::max(slot, std::isfinite(value) ? value : INFINITY); };

  for (std::size_t k = 0; k < n; ++k) {
    const auto & x = trajectory[k];
    const auto & next = trajectory[k + 1];
    bump(out.dynamics, pose_defect(x, next, h, model).lpNorm<Eigen::Infinity>());
    bump(out.dynamics, (next.s - x.s - h * x.v).lpNorm<Eigen::Infinity>());
    bump(out.dynamics, momentum_defect(x, next, torques[k], h, model).lpNorm<Eigen::Infinity>());
    bump(out.stationarity,
         (torques[k] - optimal_torque(costates[k].lambda, problem.bounds.mu, kNormal)).lpNorm<Eigen::Infinity>());
  }

  for (std::size_t k = 1; k <= n; ++k) {
    const Multipliers mult = k < n ? multipliers[k] : Multipliers{};
    const auto zeta = costate_transport_zeta(costates[k - 1].zeta, trajectory[k].v, h, model);
    bump(out.adjoint, (costates[k].zeta - zeta).lpNorm<Eigen::Infinity>());
    bump(out.adjoint,
         adjoint_equation_residual(costates[k - 1], costates[k], trajectory[k], mult, h, model).lpNorm<Eigen::Infinity>());
    if (k < n) {
      bump(out.complementarity,
           complementarity_residual(trajectory[k], multipliers[k], problem.bounds, 0.0).lpNorm<Eigen::Infinity>());
    }
  }
  // Unused multiplier slots must stay zero.
  for (std::size_t k : {std::size_t{0}, n}) {
    bump(out.complementarity, std::max(std::abs(multipliers[k].sigma), multipliers[k].beta.lpNorm<Eigen::Infinity>()));
  }

  out.transversality = transversality_residual(costates[n]).lpNorm<Eigen::Infinity>();

  const auto & x0 = trajectory.front();
  const auto & xn = trajectory.back();
  const auto & init = problem.initial;
  bump(out.boundary, (x0.g.vector() - init.g.vector()).lpNorm<Eigen::Infinity>());
  bump(out.boundary, (x0.s - init.s).lpNorm<Eigen::Infinity>());
  bump(out.boundary, (x0.v - init.v).lpNorm<Eigen::Infinity>());
  bump(out.boundary, se2::log(se2::compose(se2::inverse(problem.final_g), xn.g)).lpNorm<Eigen::Infinity>());
  bump(out.boundary, std::abs(xn.s[0] - problem.final_alpha));
  bump(out.boundary, (xn.v - problem.final_v).lpNorm<Eigen::Infinity>());
  return out;
}

double kkt_residual(std::span<const NodeState> trajectory, std::span<const NodeCostate> costates,
                    std::span<const Multipliers> multipliers, std::span<const Torque> torques,
                    const OcProblem & problem, const WipModel & model, const IntegratorConfig & cfg)
{
  return kkt_breakdown(trajectory, costates, multipliers, torques, problem, model, cfg).max();
}

}  // namespace wip
