#pragma once

// Levenberg-Marquardt drivers.
//
//  backtrack_lm  multiplicative damping control: a trial is accepted iff
//                the energy drops; J is reused across rejected trials.
//  more_lm       trust region of radius Delta on ||D p||; lambda solves
//                ||D p(lambda)|| ~ Delta by a safeguarded Hebden iteration.
//  cholesky_lm   backtrack_lm on the normal equations.

#include <qrkit/lm/step_solvers.hpp>
#include <qrkit/lm/trace.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace qrkit {

template <RealScalar Scalar>
struct LMResult {
  std::vector<Scalar> x;
  LMTrace trace;
};

namespace detail {

inline constexpr double kLambdaFloor = 1e-30;

template <RealScalar Scalar>
double norm2_d(std::span<const Scalar> v) {
  double s = 0;
  for (Scalar x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <RealScalar Scalar>
double norm_inf_d(std::span<const Scalar> v) {
  double m = 0;
  for (Scalar x : v) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

template <RealScalar Scalar>
double scaled_norm(std::span<const Scalar> d, std::span<const Scalar> p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = static_cast<double>(d[i]) * static_cast<double>(p[i]);
    s += v * v;
  }
  return std::sqrt(s);
}

template <RealScalar Scalar>
std::vector<Scalar> damping_diagonal(const Jacobian<Scalar>& j, DampingMode mode) {
  std::vector<Scalar> d(static_cast<std::size_t>(jacobian_cols(j)), Scalar(1));
  if (mode == DampingMode::marquardt) {
    d = jacobian_column_norms(j);
    for (auto& v : d)
      if (!(v > Scalar(0))) v = Scalar(1);
  }
  return d;
}

template <RealScalar Scalar>
double initial_lambda(const LMConfig& config, const Jacobian<Scalar>& j) {
  if (config.lambda0 > 0) return config.lambda0;
  if (config.damping == DampingMode::marquardt) return 1e-3;
  double m = 0;
  for (Scalar c : jacobian_column_norms(j)) m = std::max(m, static_cast<double>(c) * static_cast<double>(c));
  return m > 0 ? 1e-3 * m : 1e-3;
}

/// Energy at x, +inf when the residual leaves the model's domain.
template <RealScalar Scalar>
double trial_energy(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x, std::vector<Scalar>& f) {
  try {
    f = problem.residuals(x);
    return half_squared_norm<Scalar>(f);
  } catch (const DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Shared state of one driver run: current iterate, its linearization and the trace.
template <RealScalar Scalar>
class LMState {
 public:
  LMState(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0, const LMConfig& config)
      : problem_(problem), config_(config), start_(std::chrono::steady_clock::now()) {
    config.validate();
    if (static_cast<Index>(x0.size()) != problem.num_params()) {
      throw DimensionError("lm: x0 has " + std::to_string(x0.size()) + " entries, problem has " +
                           std::to_string(problem.num_params()) + " parameters");
    }
    x.assign(x0.begin(), x0.end());
    f = problem.residuals(x);
    e = half_squared_norm<Scalar>(f);
  }

  /// Evaluates J, the gradient and the damping at the current x.
  void linearize() {
    j = problem_.jacobian(x);
    b.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) b[i] = -f[i];
    g = jacobian_transpose_multiply<Scalar>(j, b);
    d = damping_diagonal(j, config_.damping);
    grad_norm = norm_inf_d<Scalar>(g);
  }

  double elapsed() const {
    if (!config_.record_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void record(int iter, double lambda, double step_norm, bool accepted) {
    trace.records.push_back({iter, e, lambda, step_norm, grad_norm, accepted, elapsed()});
  }

  bool step_is_tiny(double step_norm) const {
    return step_norm <= config_.step_tol * (norm2_d<Scalar>(x) + config_.step_tol);
  }

  LMResult<Scalar> finish(LMStatus status, std::string message = {}) {
    trace.status = status;
    trace.message = std::move(message);
    return {std::move(x), std::move(trace)};
  }

  const LeastSquaresProblem<Scalar>& problem_;
  const LMConfig& config_;
  std::chrono::steady_clock::time_point start_;
  std::vector<Scalar> x, f, b, g, d;
  Jacobian<Scalar> j;
  double e = 0;
  double grad_norm = 0;
  LMTrace trace;
};

}  // namespace detail

/// Backtracking LM with a caller-supplied step solver.
template <RealScalar Scalar>
LMResult<Scalar> backtrack_lm(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0,
                              const LMConfig& config, StepSolver<Scalar>& solver) {
  detail::LMState<Scalar> s(problem, x0, config);
  s.linearize();
  double lambda = detail::initial_lambda(config, s.j);
  s.record(0, lambda, 0.0, true);
  solver.set_system(s.j, s.b);

  std::vector<Scalar> xn(s.x.size()), fn;
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    if (s.grad_norm <= config.grad_tol) return s.finish(LMStatus::converged_gradient);
    if (s.e == 0) return s.finish(LMStatus::converged_energy);
    for (;;) {
      std::vector<Scalar> p;
      try {
        p = solver.solve(static_cast<Scalar>(lambda), s.d);
      } catch (const SingularMatrixError&) {
        lambda *= config.lambda_up;
        s.record(iter, lambda, 0.0, false);
        if (lambda > config.lambda_max) return s.finish(LMStatus::failed, "damping limit reached on a singular system");
        continue;
      }
      const double step = detail::norm2_d<Scalar>(p);
      for (std::size_t i = 0; i < xn.size(); ++i) xn[i] = s.x[i] + p[i];
      const double en = detail::trial_energy(problem, std::span<const Scalar>(xn), fn);
      if (en < s.e) {
        const double decrease = s.e - en;
        const double previous = s.e;
        lambda = std::max(lambda * config.lambda_down, detail::kLambdaFloor);
        s.x.swap(xn);
        s.f.swap(fn);
        s.e = en;
        s.linearize();
        s.record(iter, lambda, step, true);
        if (s.step_is_tiny(step)) return s.finish(LMStatus::converged_step);
        if (decrease <= config.energy_tol * previous) return s.finish(LMStatus::converged_energy);
        solver.set_system(s.j, s.b);
        break;
      }
      lambda *= config.lambda_up;
      s.record(iter, lambda, step, false);
      if (s.step_is_tiny(step)) return s.finish(LMStatus::converged_step);
      if (lambda > config.lambda_max) return s.finish(LMStatus::failed, "damping limit reached");
    }
  }
  return s.finish(s.grad_norm <= config.grad_tol ? LMStatus::converged_gradient : LMStatus::max_iterations);
}

/// Backtracking LM with one structured QR of [J; sqrt(lambda) D] per trial.
template <RealScalar Scalar>
LMResult<Scalar> backtrack_lm(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0,
                              const LMConfig& config) {
  AugmentedQRStep<Scalar> solver;
  return backtrack_lm(problem, x0, config, solver);
}

/// Backtracking LM on the normal equations (Schur complement + Cholesky).
template <RealScalar Scalar>
LMResult<Scalar> cholesky_lm(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0,
                             const LMConfig& config) {
  NormalEquationsStep<Scalar> solver;
  return backtrack_lm(problem, x0, config, solver);
}

namespace detail {

struct LmparResult {
  double lambda = 0;
  double dx_norm = 0;
};

/// Finds lambda >= 0 with ||D p(lambda)|| within 10% of delta (or the
/// Gauss-Newton step when it is already inside), at most 10 damped solves.
template <RealScalar Scalar>
LmparResult lmpar(TwoStepQRStep<Scalar>& solver, std::span<const Scalar> d, std::span<const Scalar> g, double delta,
                  double lambda_prev, std::vector<Scalar>& p) {
  constexpr double tiny = std::numeric_limits<double>::min();
  double lower = 0;
  bool gn_ok = true;
  double dxn = 0;
  try {
    p = solver.solve(Scalar(0), d);
    dxn = scaled_norm<Scalar>(d, p);
    if (!std::isfinite(dxn)) gn_ok = false;
  } catch (const SingularMatrixError&) {
    gn_ok = false;
  }
  if (gn_ok) {
    const double phi = dxn - delta;
    if (phi <= 0.1 * delta) return {0.0, dxn};
    try {
      const double q = static_cast<double>(solver.slope_norm(p, d));
      if (q > 0 && std::isfinite(q)) lower = phi / (delta * q * q);
    } catch (const SingularMatrixError&) {
      lower = 0;
    }
  }
  double gnorm = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = static_cast<double>(g[i]) / static_cast<double>(d[i]);
    gnorm += v * v;
  }
  gnorm = std::sqrt(gnorm);
  double upper = gnorm / delta;
  if (upper == 0) upper = tiny / std::min(delta, 0.1);

  double lambda = std::clamp(lambda_prev, lower, std::max(lower, upper));
  if (lambda == 0) lambda = gn_ok && dxn > 0 ? gnorm / dxn : 1e-3 * upper;
  double phi_prev = 0;
  for (int k = 0; k < 10; ++k) {
    if (!(lambda > 0)) lambda = std::max(tiny, 1e-3 * upper);
    p = solver.solve(static_cast<Scalar>(std::max(lambda, kLambdaFloor)), d);
    dxn = scaled_norm<Scalar>(d, p);
    const double phi = dxn - delta;
    if (std::abs(phi) <= 0.1 * delta || (lower == 0 && phi <= phi_prev && phi_prev < 0) || k == 9) break;
    const double q = static_cast<double>(solver.slope_norm(p, d));
    if (!(q > 0) || !std::isfinite(q)) break;
    const double correction = phi / (delta * q * q);
    if (phi > 0) lower = std::max(lower, lambda);
    if (phi < 0) upper = std::min(upper, lambda);
    lambda = std::max(lower, lambda + correction);
    phi_prev = phi;
  }
  return {std::max(lambda, kLambdaFloor), dxn};
}

}  // namespace detail

/// Trust-region LM with the two-step QR: J is factored once per iteration,
/// each trial only refactors [R; sqrt(lambda) D].
template <RealScalar Scalar>
LMResult<Scalar> more_lm(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0,
                         const LMConfig& config) {
  detail::LMState<Scalar> s(problem, x0, config);
  TwoStepQRStep<Scalar> solver;
  s.linearize();
  solver.set_system(s.j, s.b);
  double delta = detail::scaled_norm<Scalar>(s.d, s.x);
  if (!(delta > 0)) delta = 1;
  double lambda = 0;
  s.record(0, lambda, 0.0, true);

  std::vector<Scalar> p, xn(s.x.size()), fn;
  constexpr int kMaxTrials = 60;
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    if (s.grad_norm <= config.grad_tol) return s.finish(LMStatus::converged_gradient);
    if (s.e == 0) return s.finish(LMStatus::converged_energy);
    for (int trial = 0;; ++trial) {
      if (trial == kMaxTrials) return s.finish(LMStatus::failed, "trust region collapsed");
      detail::LmparResult lp;
      try {
        lp = detail::lmpar<Scalar>(solver, s.d, s.g, delta, lambda, p);
      } catch (const SingularMatrixError&) {
        delta *= 0.25;
        s.record(iter, lambda, 0.0, false);
        continue;
      }
      lambda = lp.lambda;
      const double step = detail::norm2_d<Scalar>(p);
      for (std::size_t i = 0; i < xn.size(); ++i) xn[i] = s.x[i] + p[i];
      const double en = detail::trial_energy(problem, std::span<const Scalar>(xn), fn);

      // Predicted decrease of the linear model, 0.5 ||f||^2 - 0.5 ||f + J p||^2.
      const auto jp = jacobian_multiply<Scalar>(s.j, p);
      double model = 0;
      for (std::size_t i = 0; i < jp.size(); ++i) {
        const double r = static_cast<double>(s.f[i]) + static_cast<double>(jp[i]);
        model += r * r;
      }
      const double predicted = s.e - 0.5 * model;
      const double actual = s.e - en;
      const double rho = predicted > 0 && std::isfinite(en) ? actual / predicted : -1.0;
      if (rho < 0.25) delta = 0.25 * std::min(delta, lp.dx_norm);
      else if (rho > 0.75) delta = std::max(delta, 2.0 * lp.dx_norm);

      if (rho > 1e-4 && en < s.e) {
        const double previous = s.e;
        s.x.swap(xn);
        s.f.swap(fn);
        s.e = en;
        s.linearize();
        s.record(iter, lambda, step, true);
        if (s.step_is_tiny(step)) return s.finish(LMStatus::converged_step);
        if (actual <= config.energy_tol * previous) return s.finish(LMStatus::converged_energy);
        solver.set_system(s.j, s.b);
        break;
      }
      s.record(iter, lambda, step, false);
      if (s.step_is_tiny(step)) return s.finish(LMStatus::converged_step);
    }
  }
  return s.finish(s.grad_norm <= config.grad_tol ? LMStatus::converged_gradient : LMStatus::max_iterations);
}

/// Runs the driver selected by config.solver.
template <RealScalar Scalar>
LMResult<Scalar> optimize(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x0,
                          const LMConfig& config) {
  switch (config.solver) {
    case SolverKind::more_qr: return more_lm(problem, x0, config);
    case SolverKind::cholesky: return cholesky_lm(problem, x0, config);
    case SolverKind::qrkit_cholesky: {
      QRCholeskyStep<Scalar> solver;
      return backtrack_lm(problem, x0, config, solver);
    }
    case SolverKind::qrkit: break;
  }
  return backtrack_lm(problem, x0, config);
}

}  // namespace qrkit
