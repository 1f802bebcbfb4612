#include "wip/shooting.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseQR>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>

#include "wip/errors.hpp"

namespace wip {
namespace {

constexpr int kStateDim = 9;
constexpr int kCostateDim = 9;
constexpr int kMultiplierDim = 4;
constexpr double kGaussNewtonDamping = 1e-14;
constexpr int kWatchdogSteps = 6;
constexpr double kWatchdogGrowth = 100.0;

IntegratorConfig integrator_config(const OcProblem & problem, const ShootingConfig & cfg)
{
  IntegratorConfig icfg;
  icfg.h = problem.h;
  icfg.newton_tol = cfg.newton_tol;
  icfg.newton_max_iters = cfg.newton_max_iters;
  return icfg;
}

Eigen::Matrix<double, 9, 1> state_vector(const NodeState & x)
{
  Eigen::Matrix<double, 9, 1> out;
  out << x.g.vector(), x.s, x.v;
  return out;
}

NodeState state_from(const Eigen::Ref<const Eigen::VectorXd> & c)
{
  NodeState x;
  x.g = GroupElement{c[0], c[1], c[2]};
  x.s = c.segment<3>(3);
  x.v = c.segment<3>(6);
  return x;
}

Eigen::Matrix<double, 9, 1> costate_vector(const NodeCostate & c)
{
  Eigen::Matrix<double, 9, 1> out;
  out << c.zeta, c.psi, c.lambda;
  return out;
}

NodeCostate costate_from(const Eigen::Ref<const Eigen::VectorXd> & c)
{
  NodeCostate out;
  out.zeta = c.segment<3>(0);
  out.psi = c.segment<3>(3);
  out.lambda = c.segment<3>(6);
  return out;
}

// Fischer-Burmeister rows on dimensionless arguments; same zero set as
// complementarity_residual at eps = 0.
Eigen::Vector4d scaled_complementarity(const NodeState & x, const Multipliers & mult, const Bounds & bounds,
                                       const Scaling & sc, double eps)
{
  Eigen::Vector4d out;
  out[0] = fischer_burmeister(-mult.sigma / sc.multiplier[0], (bounds.a * bounds.a - x.s[0] * x.s[0]) / sc.gap[0], eps);
  for (int j = 0; j < 3; ++j) {
    out[j + 1] = fischer_burmeister(-mult.beta[j] / sc.multiplier[j + 1],
                                    (bounds.nu * bounds.nu - x.v[j] * x.v[j]) / sc.gap[j + 1], eps);
  }
  return out;
}

// State of node k as seen by the residual: segment starts come from the
// unknowns, every other node from the producing segment's trace.
const NodeState & node_state(int k, const std::vector<const SegmentTrace *> & traces, const ShootingVariables & vars,
                             const UnknownLayout & layout)
{
  const int seg = layout.segment_producing(k);
  if (seg + 1 < layout.segments() && k == layout.boundary(seg + 1)) {
    return vars.starts[static_cast<std::size_t>(seg + 1)];
  }
  return traces[static_cast<std::size_t>(seg)]->states[static_cast<std::size_t>(k - layout.boundary(seg))];
}

Eigen::VectorXd assemble(const ShootingVariables & vars, const std::vector<const SegmentTrace *> & traces,
                         const OcProblem & problem, const UnknownLayout & layout, double eps)
{
  const Scaling & sc = layout.scaling();
  const int segs = layout.segments();
  Eigen::VectorXd r(layout.size());
  int row = 0;
  for (int i = 1; i < segs; ++i) {
    const auto & pred_state = traces[static_cast<std::size_t>(i - 1)]->states.back();
    const auto & pred_cost = traces[static_cast<std::size_t>(i - 1)]->costates.back();
    const auto & start = vars.starts[static_cast<std::size_t>(i)];
    const auto & cost = vars.costates[static_cast<std::size_t>(i)];
    r.segment<3>(row) = se2::log(se2::compose(se2::inverse(pred_state.g), start.g)) / sc.state;
    r.segment<3>(row + 3) = (start.s - pred_state.s) / sc.state;
    r.segment<3>(row + 6) = (start.v - pred_state.v) / sc.state;
    r.segment<9>(row + 9) = (costate_vector(cost) - costate_vector(pred_cost)).cwiseQuotient(sc.costate);
    row += kStateDim + kCostateDim;
  }

  const auto & last = *traces.back();
  const NodeState & xn = last.states.back();
  r.segment<3>(row) = se2::log(se2::compose(se2::inverse(problem.final_g), xn.g)) / sc.state;
  r[row + 3] = (xn.s[0] - problem.final_alpha) / sc.state;
  r.segment<3>(row + 4) = (xn.v - problem.final_v) / sc.state;
  row += 7;
  r.segment<2>(row) = transversality_residual(last.costates.back()).cwiseQuotient(sc.costate.segment<2>(4));
  row += 2;

  for (int k = 1; k < layout.N(); ++k) {
    const NodeState & x = node_state(k, traces, vars, layout);
    r.segment<4>(row) = scaled_complementarity(x, vars.multipliers[static_cast<std::size_t>(k)], problem.bounds, sc, eps);
    row += kMultiplierDim;
  }
  return r;
}

struct Evaluation
{
  Eigen::VectorXd r;
  ShootingVariables vars;
  std::vector<SegmentTrace> traces;
};

std::vector<const SegmentTrace *> pointers(const std::vector<SegmentTrace> & traces)
{
  std::vector<const SegmentTrace *> out;
  out.reserve(traces.size());
  for (const auto & t : traces) out.push_back(&t);
  return out;
}

Evaluation evaluate(const Eigen::VectorXd & u, const OcProblem & problem, const UnknownLayout & layout,
                    const ShootingConfig & cfg, double eps, const WipModel & model)
{
  Evaluation ev;
  ev.vars = unpack(u, layout, problem);
  ev.traces.reserve(static_cast<std::size_t>(layout.segments()));
  for (int i = 0; i < layout.segments(); ++i) {
    ev.traces.push_back(propagate_segment(i, ev.vars, layout, problem, model, cfg));
  }
  ev.r = assemble(ev.vars, pointers(ev.traces), problem, layout, eps);
  if (!ev.r.allFinite()) {
    throw IntegratorFailure("non-finite shooting residual", 0);
  }
  return ev;
}

// Forward-difference Jacobian. Column j only re-propagates the segment that
// depends on unknown j; all other traces are reused.
Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd & u, const Evaluation & base, const OcProblem & problem,
                                     const UnknownLayout & layout, const ShootingConfig & cfg, double eps,
                                     const WipModel & model)
{
  const int n = layout.size();
  std::vector<std::vector<Eigen::Triplet<double>>> columns(static_cast<std::size_t>(n));

  auto work = [&](int begin, int end) {
    Eigen::VectorXd up = u;
    auto ptrs = pointers(base.traces);
    for (int j = begin; j < end; ++j) {
      const double saved = up[j];
      up[j] = saved + cfg.fd_step;
      const ShootingVariables vars = unpack(up, layout, problem);
      const int seg = layout.segment_of_unknown(j);
      const SegmentTrace trace = propagate_segment(seg, vars, layout, problem, model, cfg);
      ptrs[static_cast<std::size_t>(seg)] = &trace;
      const Eigen::VectorXd rp = assemble(vars, ptrs, problem, layout, eps);
      ptrs[static_cast<std::size_t>(seg)] = &base.traces[static_cast<std::size_t>(seg)];
      up[j] = saved;
      auto & col = columns[static_cast<std::size_t>(j)];
      for (int i = 0; i < rp.size(); ++i) {
        const double d = rp[i] - base.r[i];
        if (d != 0.0) col.emplace_back(i, j, d / cfg.fd_step);
      }
    }
  };

  const int workers = std::clamp(cfg.threads, 1, std::max(1, n));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      const int begin = static_cast<int>(static_cast<long>(n) * w / workers);
      const int end = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto & e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::size_t nnz = 0;
  for (const auto & c : columns) nnz += c.size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(nnz);
  for (const auto & c : columns) triplets.insert(triplets.end(), c.begin(), c.end());
  Eigen::SparseMatrix<double> jac(layout.size(), n);
  jac.setFromTriplets(triplets.begin(), triplets.end());
  return jac;
}

struct StageResult
{
  Eigen::VectorXd u;
  Evaluation eval;
  int iterations{0};
  bool converged{false};
  double damping{0.0};
};

StageResult levenberg_marquardt(Eigen::VectorXd u, Evaluation eval, double damping, double tol, double eps,
                                int max_iters, const OcProblem & problem, const UnknownLayout & layout,
                                const ShootingConfig & cfg, const WipModel & model, std::vector<double> & history)
{
  StageResult out;
  double norm2 = eval.r.squaredNorm();
  Eigen::VectorXd best_u = u;
  Evaluation best_eval = eval;
  double best_norm2 = norm2;
  int watchdog = kWatchdogSteps;
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    if (eval.r.lpNorm<Eigen::Infinity>() <= tol) break;
    const Eigen::SparseMatrix<double> jac = jacobian(u, eval, problem, layout, cfg, eps, model);
    const auto m = jac.rows();
    const auto n = jac.cols();
    Eigen::VectorXd diag(n);
    for (Eigen::Index j = 0; j < n; ++j) diag[j] = jac.col(j).squaredNorm();
    diag = diag.cwiseMax(1e-8 * std::max(1.0, diag.maxCoeff()));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + n);
    rhs.head(m) = -eval.r;

    // damped least squares [J; sqrt(lambda D)] delta = [-r; 0], solved by QR
    // so the condition number of J is not squared
    auto lm_step = [&](double lambda) -> Eigen::VectorXd {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<std::size_t>(jac.nonZeros() + n));
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(jac, j); it; ++it) trip.emplace_back(it.row(), j, it.value());
        trip.emplace_back(m + j, j, std::sqrt(lambda * diag[j]));
      }
      Eigen::SparseMatrix<double> aug(m + n, n);
      aug.setFromTriplets(trip.begin(), trip.end());
      aug.makeCompressed();
      Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr(aug);
      if (qr.info() != Eigen::Success) return Eigen::VectorXd::Constant(n, NAN);
      return qr.solve(rhs);
    };

    // Accepts when the residual decreases, or, while the watchdog lasts,
    // when it grows by less than kWatchdogGrowth over the best iterate.
    auto try_step = [&](const Eigen::VectorXd & delta, bool nonmonotone) {
      if (!delta.allFinite()) return false;
      try {
        Evaluation trial = evaluate(u + delta, problem, layout, cfg, eps, model);
        const double trial_norm2 = trial.r.squaredNorm();
        const bool better = trial_norm2 < norm2;
        const bool tolerated = nonmonotone && trial_norm2 < kWatchdogGrowth * kWatchdogGrowth * best_norm2;
        if (!better && !tolerated) return false;
        u += delta;
        eval = std::move(trial);
        norm2 = trial_norm2;
        return true;
      } catch (const Error &) {
        return false;
      }
    };

    // A nearly undamped step is tried first. The shooting Jacobian has
    // near-null directions (lateral costate on straight paths) in which
    // Marquardt damping stalls progress, and Gauss-Newton often needs a few
    // non-monotone steps before it settles into quadratic convergence.
    bool accepted = try_step(lm_step(kGaussNewtonDamping), watchdog > 0);
    if (accepted) damping = std::max(damping * 0.3, kGaussNewtonDamping);
    if (!accepted && norm2 > best_norm2) {
      u = best_u;
      eval = best_eval;
      norm2 = best_norm2;
      watchdog = 0;
      continue;
    }
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      accepted = try_step(lm_step(damping), false);
      damping = accepted ? std::max(damping * 0.3, kGaussNewtonDamping) : damping * 5.0;
    }
    if (!accepted) break;
    if (norm2 < best_norm2) {
      best_u = u;
      best_eval = eval;
      best_norm2 = norm2;
      watchdog = kWatchdogSteps;
    } else if (--watchdog <= 0 && norm2 > best_norm2) {
      u = best_u;
      eval = best_eval;
      norm2 = best_norm2;
    }
    history.push_back(eval.r.lpNorm<Eigen::Infinity>());
    if (cfg.log_iterations) {
      std::fprintf(stderr, "[wip] eps=%.1e iter=%d |r|inf=%.3e damping=%.1e\n", eps, iter + 1, history.back(), damping);
    }
  }
  if (best_norm2 < norm2) {
    u = std::move(best_u);
    eval = std::move(best_eval);
  }
  out.converged = eval.r.lpNorm<Eigen::Infinity>() <= tol;
  out.u = std::move(u);
  out.eval = std::move(eval);
  out.iterations = iter;
  out.damping = damping;
  return out;
}

}  // namespace

void ShootingConfig::validate(int N) const
{
  const int segs = segments == 0 ? default_segments(N) : segments;
  if (segs < 1 || segs > N) throw Error("segments must lie in [1, N]");
  if (max_outer_iters < 1) throw Error("max_outer_iters must be positive");
  if (homotopy_iters < 1 || !(homotopy_tol > 0.0) || !(homotopy_min_step > 0.0) || !(homotopy_min_step < 1.0) ||
      !(homotopy_torque_bound > 0.0)) {
    throw Error("invalid homotopy settings");
  }
  if (!(fd_step > 0.0) || !(lm_damping_init > 0.0) || !(tol_residual > 0.0)) {
    throw Error("fd_step, lm_damping_init and tol_residual must be positive");
  }
  if (eps_schedule.empty()) throw Error("eps_schedule must not be empty");
  for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
    if (!(eps_schedule[i] > 0.0)) throw Error("eps_schedule entries must be positive");
    if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1])) throw Error("eps_schedule must be strictly decreasing");
  }
  if (!(state_scale > 0.0) || !(costate_scale > 0.0)) {
    throw Error("scales must be positive");
  }
}

int default_segments(int N) { return std::max(1, (N + kDefaultSegmentLength - 1) / kDefaultSegmentLength); }

UnknownLayout::UnknownLayout(int N, int segments, Scaling scaling) : n_(N), scaling_(std::move(scaling))
{
  if (N < 1 || segments < 1 || segments > N) throw Error("invalid shooting layout");
  bounds_.resize(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) {
    bounds_[static_cast<std::size_t>(i)] = static_cast<int>((static_cast<long>(N) * i + segments / 2) / segments);
  }
  bounds_.back() = N;
}

int UnknownLayout::size() const
{
  return kCostateDim + (segments() - 1) * (kStateDim + kCostateDim) + (n_ - 1) * kMultiplierDim;
}

int UnknownLayout::costate_offset(int segment) const
{
  return segment == 0 ? 0 : kCostateDim + (segment - 1) * (kStateDim + kCostateDim) + kStateDim;
}

int UnknownLayout::state_offset(int segment) const
{
  return kCostateDim + (segment - 1) * (kStateDim + kCostateDim);
}

int UnknownLayout::multiplier_offset(int node) const
{
  return kCostateDim + (segments() - 1) * (kStateDim + kCostateDim) + (node - 1) * kMultiplierDim;
}

int UnknownLayout::segment_producing(int node) const
{
  const auto it = std::lower_bound(bounds_.begin() + 1, bounds_.end(), node);
  return static_cast<int>(it - bounds_.begin()) - 1;
}

int UnknownLayout::segment_of_unknown(int index) const
{
  const int mult0 = multiplier_offset(1);
  if (index >= mult0) {
    return segment_producing(1 + (index - mult0) / kMultiplierDim);
  }
  if (index < kCostateDim) return 0;
  return 1 + (index - kCostateDim) / (kStateDim + kCostateDim);
}

Scaling make_scaling(const ShootingConfig & cfg, const OcProblem & problem, const WipModel & model)
{
  const double m0 = model.mass_matrix(0.0).diagonal().maxCoeff();
  const double lambda = cfg.costate_scale;
  const double psi = lambda * m0 / problem.h;
  const double zeta = psi / model.params().r_w;
  Scaling sc;
  sc.state = cfg.state_scale;
  sc.costate << zeta, zeta, zeta, psi, psi, psi, lambda, lambda, lambda;
  sc.multiplier << psi / problem.bounds.a, Eigen::Vector3d::Constant(m0 * lambda / problem.bounds.nu);
  sc.gap << problem.bounds.a * problem.bounds.a, Eigen::Vector3d::Constant(problem.bounds.nu * problem.bounds.nu);
  return sc;
}

Eigen::VectorXd pack(const ShootingVariables & vars, const UnknownLayout & layout)
{
  const Scaling & sc = layout.scaling();
  Eigen::VectorXd u(layout.size());
  for (int i = 0; i < layout.segments(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (i > 0) u.segment<9>(layout.state_offset(i)) = state_vector(vars.starts[idx]) / sc.state;
    u.segment<9>(layout.costate_offset(i)) = costate_vector(vars.costates[idx]).cwiseQuotient(sc.costate);
  }
  for (int k = 1; k < layout.N(); ++k) {
    const auto & m = vars.multipliers[static_cast<std::size_t>(k)];
    Eigen::Vector4d mv;
    mv << m.sigma, m.beta;
    u.segment<4>(layout.multiplier_offset(k)) = mv.cwiseQuotient(sc.multiplier);
  }
  return u;
}

ShootingVariables unpack(const Eigen::VectorXd & u, const UnknownLayout & layout, const OcProblem & problem)
{
  const Scaling & sc = layout.scaling();
  ShootingVariables vars;
  const auto segs = static_cast<std::size_t>(layout.segments());
  vars.starts.resize(segs);
  vars.costates.resize(segs);
  vars.multipliers.assign(static_cast<std::size_t>(layout.N()) + 1, Multipliers{});
  vars.starts[0] = problem.initial;
  for (int i = 0; i < layout.segments(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (i > 0) vars.starts[idx] = state_from(u.segment<9>(layout.state_offset(i)) * sc.state);
    vars.costates[idx] = costate_from(u.segment<9>(layout.costate_offset(i)).cwiseProduct(sc.costate));
  }
  for (int k = 1; k < layout.N(); ++k) {
    const Eigen::Vector4d mv = u.segment<4>(layout.multiplier_offset(k)).cwiseProduct(sc.multiplier);
    auto & m = vars.multipliers[static_cast<std::size_t>(k)];
    m.sigma = mv[0];
    m.beta = mv.tail<3>();
  }
  return vars;
}

ShootingVariables initial_guess(const OcProblem & problem, const UnknownLayout & layout)
{
  ShootingVariables vars;
  const auto segs = static_cast<std::size_t>(layout.segments());
  vars.starts.resize(segs);
  vars.costates.assign(segs, NodeCostate{});
  vars.multipliers.assign(static_cast<std::size_t>(layout.N()) + 1, Multipliers{});
  const NodeState & x0 = problem.initial;
  const double horizon = problem.horizon();
  for (std::size_t i = 0; i < segs; ++i) {
    const double t = static_cast<double>(layout.boundary(static_cast<int>(i))) / layout.N();
    NodeState x;
    x.g = GroupElement::from_vector((1.0 - t) * x0.g.vector() + t * problem.final_g.vector());
    x.v = (1.0 - t) * x0.v + t * problem.final_v;
    x.s = x0.s + horizon * (t * x0.v + 0.5 * t * t * (problem.final_v - x0.v));
    x.s[0] = (1.0 - t) * x0.s[0] + t * problem.final_alpha;
    vars.starts[i] = i == 0 ? x0 : x;
  }
  return vars;
}

SegmentTrace propagate_segment(int segment, const ShootingVariables & vars, const UnknownLayout & layout,
                               const OcProblem & problem, const WipModel & model, const ShootingConfig & cfg)
{
  const IntegratorConfig icfg = integrator_config(problem, cfg);
  const int k0 = layout.boundary(segment);
  const int k1 = layout.boundary(segment + 1);
  SegmentTrace trace;
  trace.states.reserve(static_cast<std::size_t>(k1 - k0 + 1));
  trace.costates.reserve(static_cast<std::size_t>(k1 - k0 + 1));
  trace.torques.reserve(static_cast<std::size_t>(k1 - k0));
  trace.states.push_back(vars.starts[static_cast<std::size_t>(segment)]);
  trace.costates.push_back(vars.costates[static_cast<std::size_t>(segment)]);
  for (int k = k0; k < k1; ++k) {
    const Torque tau = optimal_torque(trace.costates.back().lambda, problem.bounds.mu, kNormal);
    NodeState next;
    try {
      next = step(trace.states.back(), tau, icfg, model);
    } catch (const Error & e) {
      throw IntegratorFailure("segment " + std::to_string(segment) + ", step " + std::to_string(k) + ": " + e.what(),
                              static_cast<std::size_t>(k));
    }
    const Multipliers mult = k + 1 < layout.N() ? vars.multipliers[static_cast<std::size_t>(k + 1)] : Multipliers{};
    trace.costates.push_back(adjoint_step(trace.costates.back(), next, mult, problem.h, model));
    trace.states.push_back(next);
    trace.torques.push_back(tau);
  }
  return trace;
}

Eigen::VectorXd residual(const Eigen::VectorXd & unknowns, const OcProblem & problem, const UnknownLayout & layout,
                         const ShootingConfig & cfg, double eps, const WipModel & model)
{
  return evaluate(unknowns, problem, layout, cfg, eps, model).r;
}

double energy_cost(const std::vector<Torque> & torques, double h)
{
  double c = 0.0;
  for (const auto & t : torques) c += 0.5 * h * t.squaredNorm();
  return c;
}

ShootingVariables variables_from_report(const SolveReport & report, const UnknownLayout & layout)
{
  ShootingVariables vars;
  for (int i = 0; i < layout.segments(); ++i) {
    const auto k = static_cast<std::size_t>(layout.boundary(i));
    vars.starts.push_back(report.trajectory.at(k));
    vars.costates.push_back(report.costates.at(k));
  }
  vars.multipliers = report.multipliers;
  return vars;
}

namespace {

SolveReport build_report(const Evaluation & eval, const OcProblem & problem, const UnknownLayout & layout,
                         const WipModel & model, const ShootingConfig & cfg)
{
  SolveReport rep;
  const auto n = static_cast<std::size_t>(problem.N);
  for (int i = 0; i < layout.segments(); ++i) {
    const auto & tr = eval.traces[static_cast<std::size_t>(i)];
    const std::size_t count = tr.torques.size();
    for (std::size_t j = 0; j < count; ++j) {
      rep.trajectory.push_back(tr.states[j]);
      rep.costates.push_back(tr.costates[j]);
      rep.torques.push_back(tr.torques[j]);
    }
  }
  rep.trajectory.push_back(eval.traces.back().states.back());
  rep.costates.push_back(eval.traces.back().costates.back());
  rep.multipliers = eval.vars.multipliers;
  rep.cost = energy_cost(rep.torques, problem.h);

  const double tol = 1e-8;
  rep.active_sets.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    auto & act = rep.active_sets[k];
    const auto & x = rep.trajectory[k];
    if (k > 0 && k < n) {
      act.tilt = std::abs(x.s[0]) >= problem.bounds.a - tol;
      for (int j = 0; j < 3; ++j) act.velocity[static_cast<std::size_t>(j)] = std::abs(x.v[j]) >= problem.bounds.nu - tol;
    }
    if (k < n) {
      for (int j = 0; j < 2; ++j) {
        act.torque[static_cast<std::size_t>(j)] = std::abs(rep.torques[k][j]) >= problem.bounds.mu;
      }
    }
  }

  bool all_saturated = !rep.torques.empty();
  double min_lambda = INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    for (int j = 0; j < 2; ++j) {
      all_saturated = all_saturated && rep.active_sets[k].torque[static_cast<std::size_t>(j)];
      min_lambda = std::min(min_lambda, std::abs(rep.costates[k].lambda[j + 1]));
    }
  }
  rep.abnormal_suspect = all_saturated && min_lambda > 10.0 * problem.bounds.mu;

  const IntegratorConfig icfg = integrator_config(problem, cfg);
  rep.kkt = kkt_residual(rep.trajectory, rep.costates, rep.multipliers, rep.torques, problem, model, icfg);
  rep.segments = layout.segments();
  return rep;
}

}  // namespace

OcProblem homotopy_start(const OcProblem & problem, const WipModel & model)
{
  OcProblem start = problem;
  start.initial.s[0] = 0.0;
  start.initial.v[0] = 0.0;
  IntegratorConfig icfg;
  icfg.h = problem.h;
  const std::vector<Torque> zero(static_cast<std::size_t>(problem.N), Torque::Zero());
  const NodeState end = rollout(start.initial, zero, icfg, model).back();
  start.final_g = end.g;
  start.final_alpha = end.s[0];
  start.final_v = end.v;
  return start;
}

OcProblem homotopy_blend(const OcProblem & start, const OcProblem & target, double t)
{
  OcProblem p = target;
  auto mix = [t](const auto & a, const auto & b) { return ((1.0 - t) * a + t * b).eval(); };
  p.initial.g = GroupElement::from_vector(mix(start.initial.g.vector(), target.initial.g.vector()));
  p.initial.s = mix(start.initial.s, target.initial.s);
  p.initial.v = mix(start.initial.v, target.initial.v);
  p.final_g = GroupElement::from_vector(mix(start.final_g.vector(), target.final_g.vector()));
  p.final_alpha = (1.0 - t) * start.final_alpha + t * target.final_alpha;
  p.final_v = mix(start.final_v, target.final_v);
  return p;
}

namespace {

struct HomotopyResult
{
  Eigen::VectorXd u;
  int steps{0};
  bool reached{false};
};

// Predictor-corrector continuation along a one-parameter family of problems,
// starting from a converged u at t = 0. The step grows after quick corrector
// convergence and is halved after a failure.
template <class Family>
HomotopyResult continuation(Eigen::VectorXd u, const Family & family, const UnknownLayout & layout,
                            const ShootingConfig & cfg, double eps, const WipModel & model, const char * label)
{
  HomotopyResult out;
  std::vector<double> scratch;
  const double tol = std::max(cfg.homotopy_tol, cfg.tol_residual);
  double t = 0.0;
  double dt = 1.0;
  Eigen::VectorXd u_prev = u;
  double t_prev = 0.0;
  while (t < 1.0) {
    const double t_next = std::min(1.0, t + dt);
    const OcProblem p = family(t_next);
    Eigen::VectorXd guess = u;
    if (t > t_prev) guess += (t_next - t) / (t - t_prev) * (u - u_prev);
    bool ok = false;
    StageResult res;
    for (const Eigen::VectorXd * g : {&guess, &u}) {
      try {
        res = levenberg_marquardt(*g, evaluate(*g, p, layout, cfg, eps, model), cfg.lm_damping_init * 1e-3, tol, eps,
                                  cfg.homotopy_iters, p, layout, cfg, model, scratch);
        ok = res.converged;
      } catch (const Error &) {
        ok = false;
      }
      if (ok || g == &u || t == t_prev) break;
    }
    if (cfg.log_iterations) {
      std::fprintf(stderr, "[wip] %s t=%.5f dt=%.5f %s (%d iterations)\n", label, t_next, dt,
                   ok ? "accepted" : "rejected", res.iterations);
    }
    if (ok) {
      u_prev = std::move(u);
      t_prev = t;
      u = std::move(res.u);
      t = t_next;
      ++out.steps;
      if (res.iterations <= cfg.homotopy_iters / 3) dt = std::min(1.0, dt * 2.0);
    } else {
      dt *= 0.5;
      if (dt < cfg.homotopy_min_step) break;
    }
  }
  out.u = std::move(u);
  out.reached = t >= 1.0;
  return out;
}

double peak_torque(const Evaluation & eval)
{
  double m = 0.0;
  for (const auto & tr : eval.traces) {
    for (const auto & tau : tr.torques) m = std::max(m, tau.lpNorm<Eigen::Infinity>());
  }
  return m;
}

// Continuation in the boundary data from homotopy_start() to `problem`.
HomotopyResult boundary_homotopy(const OcProblem & problem, const UnknownLayout & layout, const ShootingConfig & cfg,
                                 double eps, const WipModel & model)
{
  HomotopyResult out;
  const OcProblem start = homotopy_start(problem, model);
  IntegratorConfig icfg;
  icfg.h = problem.h;
  const std::vector<Torque> zero(static_cast<std::size_t>(problem.N), Torque::Zero());
  const std::vector<NodeState> free_path = rollout(start.initial, zero, icfg, model);

  ShootingVariables vars;
  vars.costates.assign(static_cast<std::size_t>(layout.segments()), NodeCostate{});
  vars.multipliers.assign(static_cast<std::size_t>(problem.N) + 1, Multipliers{});
  for (int i = 0; i < layout.segments(); ++i) vars.starts.push_back(free_path[static_cast<std::size_t>(layout.boundary(i))]);

  std::vector<double> scratch;
  const double tol = std::max(cfg.homotopy_tol, cfg.tol_residual);
  Eigen::VectorXd u = pack(vars, layout);
  {
    StageResult res = levenberg_marquardt(u, evaluate(u, start, layout, cfg, eps, model), cfg.lm_damping_init, tol, eps,
                                          cfg.max_outer_iters, start, layout, cfg, model, scratch);
    if (!res.converged) return out;
    u = std::move(res.u);
  }
  return continuation(std::move(u), [&](double t) { return homotopy_blend(start, problem, t); }, layout, cfg, eps,
                      model, "homotopy");
}

struct ScheduleResult
{
  Eigen::VectorXd u;
  Evaluation eval;
  bool converged{true};
  int iterations{0};
  double damping{0.0};
};

// Levenberg-Marquardt over the smoothing levels of `schedule`, warm-starting
// each stage; intermediate stages stop at max(tol_residual, eps).
ScheduleResult run_schedule(Eigen::VectorXd u, const std::vector<double> & schedule, const OcProblem & problem,
                            const UnknownLayout & layout, const ShootingConfig & cfg, const WipModel & model,
                            std::vector<StageLog> & stages, std::vector<double> & history)
{
  ScheduleResult out;
  out.damping = cfg.lm_damping_init;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const double eps = schedule[s];
    const bool last = s + 1 == schedule.size();
    Evaluation eval = evaluate(u, problem, layout, cfg, eps, model);
    StageLog log;
    log.eps = eps;
    log.start_residual = eval.r.lpNorm<Eigen::Infinity>();
    const double tol = last ? cfg.tol_residual : std::max(cfg.tol_residual, eps);
    StageResult res = levenberg_marquardt(u, std::move(eval), std::max(out.damping, cfg.lm_damping_init * 1e-3), tol,
                                          eps, cfg.max_outer_iters, problem, layout, cfg, model, history);
    u = std::move(res.u);
    out.eval = std::move(res.eval);
    out.damping = res.damping;
    out.iterations += res.iterations;
    log.iterations = res.iterations;
    log.final_residual = out.eval.r.lpNorm<Eigen::Infinity>();
    stages.push_back(log);
    if (!res.converged) {
      out.converged = false;
      break;
    }
  }
  out.u = std::move(u);
  return out;
}

}  // namespace

SolveReport solve(const OcProblem & problem, const ShootingConfig & cfg, const WipModel & model,
                  const std::optional<ShootingVariables> & warm_start)
{
  problem.validate();
  cfg.validate(problem.N);
  const int segs = cfg.segments == 0 ? default_segments(problem.N) : cfg.segments;
  const UnknownLayout layout(problem.N, segs, make_scaling(cfg, problem, model));

  // Without a warm start the boundary continuation and the smoothing schedule
  // run with the torque bound relaxed; the clamp makes the intermediate
  // problems needlessly hard. The bound is then lowered by continuation when
  // the relaxed optimum exceeds it.
  OcProblem relaxed = problem;
  relaxed.bounds.mu = std::max(problem.bounds.mu, cfg.homotopy_torque_bound);
  const bool use_homotopy = !warm_start && cfg.homotopy;

  Eigen::VectorXd u;
  int homotopy_steps = 0;
  if (use_homotopy) {
    try {
      HomotopyResult hom = boundary_homotopy(relaxed, layout, cfg, cfg.eps_schedule.front(), model);
      homotopy_steps = hom.steps;
      if (hom.reached) u = std::move(hom.u);
    } catch (const Error &) {
      u.resize(0);
    }
  }
  const bool homotopy_reached = u.size() != 0;
  if (!homotopy_reached) {
    ShootingVariables vars = warm_start ? *warm_start : initial_guess(problem, layout);
    vars.starts[0] = problem.initial;
    u = pack(vars, layout);
  }
  try {
    (void)evaluate(u, problem, layout, cfg, cfg.eps_schedule.front(), model);
  } catch (const IntegratorFailure & e) {
    throw IntegratorFailure(std::string("initial shooting guess cannot be propagated (") + e.what() +
                              "); try more segments", e.step());
  }

  std::vector<StageLog> stages;
  std::vector<double> history;
  int total_iters = 0;
  ScheduleResult run;
  if (homotopy_reached && relaxed.bounds.mu > problem.bounds.mu) {
    run = run_schedule(std::move(u), cfg.eps_schedule, relaxed, layout, cfg, model, stages, history);
    total_iters += run.iterations;
    u = std::move(run.u);
    const double eps = cfg.eps_schedule.back();
    const double peak = peak_torque(run.eval);
    if (run.converged && peak > problem.bounds.mu) {
      const double lo = std::log(problem.bounds.mu);
      const double hi = std::log(peak);
      auto family = [&](double t) {
        OcProblem p = problem;
        p.bounds.mu = std::exp((1.0 - t) * hi + t * lo);
        return p;
      };
      HomotopyResult torque = continuation(u, family, layout, cfg, eps, model, "torque bound");
      homotopy_steps += torque.steps;
      if (torque.reached) {
        u = std::move(torque.u);
      } else {
        u.resize(0);
      }
    }
    if (u.size() == 0 || !run.converged) {
      // fall back to the plain schedule on the target problem
      u = pack(initial_guess(problem, layout), layout);
      run = run_schedule(std::move(u), cfg.eps_schedule, problem, layout, cfg, model, stages, history);
    } else {
      run = run_schedule(std::move(u), {eps}, problem, layout, cfg, model, stages, history);
    }
  } else {
    run = run_schedule(std::move(u), cfg.eps_schedule, problem, layout, cfg, model, stages, history);
  }
  total_iters += run.iterations;

  SolveReport rep = build_report(run.eval, problem, layout, model, cfg);
  rep.converged = run.converged;
  rep.iterations = total_iters;
  rep.homotopy_steps = homotopy_steps;
  rep.final_residual = run.eval.r.lpNorm<Eigen::Infinity>();
  rep.stages = std::move(stages);
  rep.residual_history = std::move(history);
  rep.message = run.converged ? "converged" : "maximum iterations reached at eps = " + std::to_string(rep.stages.back().eps);
  return rep;
}

std::vector<Violation> validate_report(const SolveReport & report, const OcProblem & problem, const WipModel & model,
                                       const ValidationTolerances & tol)
{
  std::vector<Violation> out;
  const auto n = static_cast<std::size_t>(problem.N);
  if (report.trajectory.size() != n + 1 || report.torques.size() != n || report.costates.size() != n + 1 ||
      report.multipliers.size() != n + 1) {
    out.push_back({"shape", -1, 0.0, 0.0, "report sequence lengths do not match N"});
    return out;
  }
  IntegratorConfig icfg;
  icfg.h = problem.h;

  for (std::size_t k = 0; k < n; ++k) {
    const auto & tau = report.torques[k];
    const double t = tau.lpNorm<Eigen::Infinity>();
    if (!(t <= problem.bounds.mu)) {
      out.push_back({"torque_bound", static_cast<int>(k), t, problem.bounds.mu, "torque exceeds mu"});
    }
    double dev = INFINITY;
    try {
      const NodeState replay = step(report.trajectory[k], tau, icfg, model);
      const auto & stored = report.trajectory[k + 1];
      dev = std::max({(replay.g.vector() - stored.g.vector()).lpNorm<Eigen::Infinity>(),
                      (replay.s - stored.s).lpNorm<Eigen::Infinity>(), (replay.v - stored.v).lpNorm<Eigen::Infinity>()});
    } catch (const Error &) {
    }
    if (!(dev <= tol.replay)) {
      out.push_back({"replay", static_cast<int>(k), dev, tol.replay, "stored state differs from replayed step"});
    }
  }
  for (std::size_t k = 1; k < n; ++k) {
    const auto & x = report.trajectory[k];
    if (!(std::abs(x.s[0]) <= problem.bounds.a + tol.feasibility)) {
      out.push_back({"tilt_bound", static_cast<int>(k), std::abs(x.s[0]), problem.bounds.a, "tilt exceeds a"});
    }
    const double vmax = x.v.lpNorm<Eigen::Infinity>();
    if (!(vmax <= problem.bounds.nu + tol.feasibility)) {
      out.push_back({"velocity_bound", static_cast<int>(k), vmax, problem.bounds.nu, "velocity exceeds nu"});
    }
    const auto & m = report.multipliers[k];
    const double pos = std::max(m.sigma, m.beta.maxCoeff());
    if (pos > tol.kkt) {
      out.push_back({"multiplier_sign", static_cast<int>(k), pos, tol.kkt, "multiplier must be non-positive"});
    }
  }

  KktBreakdown kkt;
  try {
    kkt = kkt_breakdown(report.trajectory, report.costates, report.multipliers, report.torques, problem, model, icfg);
  } catch (const Error & e) {
    out.push_back({"kkt", -1, INFINITY, tol.kkt, e.what()});
    return out;
  }
  if (!(kkt.boundary <= tol.boundary)) {
    out.push_back({"boundary", -1, kkt.boundary, tol.boundary, "boundary conditions not met"});
  }
  if (!(kkt.max() <= tol.kkt)) {
    out.push_back({"kkt", -1, kkt.max(), tol.kkt, "first-order conditions not satisfied"});
  }
  return out;
}

}  // namespace wip
