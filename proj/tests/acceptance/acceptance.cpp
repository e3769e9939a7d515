// Release acceptance checks. Each criterion prints one line:
//
//   [C<n>] <name>: PASS|FAIL|SKIP  <measurements>
//
// and the process exits 0 (all selected criteria pass), 1 (a failure) or
// 77 (every selected criterion was skipped, e.g. a missing data set).

#include <qrkit/bench/io.hpp>
#include <qrkit/bench/runners.hpp>
#include <qrkit/core/parallel.hpp>
#include <qrkit/lm/drivers.hpp>
#include <qrkit/lm/step_solvers.hpp>
#include <qrkit/permutation_heuristics.hpp>
#include <qrkit/problems/bundle_adjustment.hpp>
#include <qrkit/problems/ellipse.hpp>
#include <qrkit/qr/block_banded_qr.hpp>
#include <qrkit/qr/block_diagonal_qr.hpp>
#include <qrkit/qr/horzcat_qr.hpp>
#include <qrkit/qr/vertcat_qr.hpp>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/toy_problems.hpp"

namespace {

using namespace qrkit;
namespace fs = std::filesystem;
using oracle::random_matrix;
using oracle::to_eigen;

constexpr int kExitSkip = 77;

struct Outcome {
  enum Kind { pass, fail, skip } kind = pass;
  std::string detail;
};

std::string format(const char* spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

Index uniform(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

// ---- C1: factorization invariants -----------------------------------------

/// Worst observed value of each invariant, as a fraction of its bound.
struct InvariantTally {
  int instances = 0;
  int violations = 0;
  double orth = 0;
  double recon = 0;
  double ls = 0;
};

/// Errors are measured in double from the factor's own Q and R so the
/// check does not add float rounding of its own.
template <class S, QRFactorization F>
void score(const F& f, const DenseMatrix<S>& a, std::mt19937_64& rng, InvariantTally& t) {
  const double eps = std::numeric_limits<S>::epsilon();
  const double ls_tol = std::is_same_v<S, float> ? 1e-3 : 1e-8;
  const Eigen::MatrixXd q = to_eigen(materialize_q(f));
  const Eigen::MatrixXd r = to_eigen(full_r(f));
  const Eigen::MatrixXd ad = to_eigen(a);
  const auto m = static_cast<double>(a.rows());
  const double orth =
      (q.transpose() * q - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff() / (64 * eps * m);
  const double recon = (ad - q * r).norm() / (64 * eps * ad.norm());
  const auto b = random_matrix<S>(a.rows(), 1, rng);
  const double ls = oracle::relative_error(to_eigen(solve_least_squares(f, b)), oracle::least_squares_oracle(a, b)) /
                    ls_tol;
  ++t.instances;
  if (orth > 1 || recon > 1 || ls > 1) ++t.violations;
  t.orth = std::max(t.orth, orth);
  t.recon = std::max(t.recon, recon);
  t.ls = std::max(t.ls, ls);
}

/// Row count for a block with `cols` columns; at least 1.5x tall keeps the
/// random instances well conditioned enough for the float tolerance.
Index tall_rows(std::mt19937_64& rng, Index cols, Index extra_max) {
  const Index lo = cols + cols / 2 + 2;
  return uniform(rng, lo, lo + extra_max);
}

template <class S>
void dense_instance(std::mt19937_64& rng, InvariantTally& t) {
  const Index n = uniform(rng, 1, 200);
  const Index m = uniform(rng, n + n / 2 + 2, 400);
  const auto a = random_matrix<S>(m, n, rng);
  score(dense_qr(a), a, rng, t);
}

template <class S>
BlockDiagonalMatrix<S> random_blocks(std::mt19937_64& rng, Index max_cols_per_block, Index max_rows, Index max_cols) {
  const Index target = uniform(rng, 1, 80);
  std::vector<DenseMatrix<S>> blocks;
  Index rows = 0, cols = 0;
  for (Index k = 0; k < target; ++k) {
    const Index c = uniform(rng, 1, max_cols_per_block);
    const Index r = tall_rows(rng, c, 3);
    if (rows + r > max_rows || cols + c > max_cols) break;
    blocks.push_back(random_matrix<S>(r, c, rng));
    rows += r;
    cols += c;
  }
  if (blocks.empty()) blocks.push_back(random_matrix<S>(3, 1, rng));
  return BlockDiagonalMatrix<S>(std::move(blocks));
}

template <class S>
void block_diagonal_instance(std::mt19937_64& rng, InvariantTally& t) {
  const auto a = random_blocks<S>(rng, 6, 400, 200);
  score(block_diagonal_qr(a), to_dense(a), rng, t);
}

template <class S>
void horzcat_instance(std::mt19937_64& rng, InvariantTally& t, bool dense_left) {
  const auto left = random_blocks<S>(rng, 4, 400, 170);
  const Index spare = left.rows() - left.cols();
  const Index m2 = uniform(rng, 1, std::max<Index>(1, std::min<Index>(30, spare / 2)));
  const auto right = random_matrix<S>(left.rows(), m2, rng);
  const auto a = to_dense(BlockAngularMatrix<S>{left, right});
  if (dense_left) {
    HorzCatQR<DenseQR<S>> f;
    f.compute(to_dense(left), right);
    score(f, a, rng, t);
  } else {
    HorzCatQR<BlockDiagonalQR<S>> f;
    f.compute(left, right);
    score(f, a, rng, t);
  }
}

/// Random chain whose consecutive blocks share up to min(m_k, m_k+1) columns.
template <class S>
BandedBlockMatrix<S> random_chain(std::mt19937_64& rng, Index max_rows, Index max_cols) {
  const Index target = uniform(rng, 1, 60);
  std::vector<DenseMatrix<S>> blocks;
  std::vector<Index> overlaps;
  Index rows = 0, cols = 0, prev = 0;
  for (Index k = 0; k < target; ++k) {
    const Index c = uniform(rng, 1, 6);
    const Index o = k == 0 ? 0 : uniform(rng, 0, std::min(prev, c));
    const Index r = c + uniform(rng, 2, 4);
    if (rows + r > max_rows || cols + c - o > max_cols) break;
    if (k > 0) overlaps.push_back(o);
    blocks.push_back(random_matrix<S>(r, c, rng));
    rows += r;
    cols += c - o;
    prev = c;
  }
  return BandedBlockMatrix<S>(std::move(blocks), std::move(overlaps));
}

template <class S>
void banded_instance(std::mt19937_64& rng, InvariantTally& t) {
  const auto a = random_chain<S>(rng, 400, 200);
  score(block_banded_qr(a), to_dense(a), rng, t);
}

/// Upper triangular m x m with inclusive bandwidth w and a diagonal bounded
/// away from zero.
template <class S>
DenseMatrix<S> random_banded_r(std::mt19937_64& rng, Index m, Index w) {
  std::normal_distribution<double> g(0, 1);
  DenseMatrix<S> r(m, m);
  for (Index i = 0; i < m; ++i) {
    r(i, i) = static_cast<S>(1 + std::abs(g(rng)));
    for (Index j = i + 1; j < std::min(m, i + w); ++j) r(i, j) = static_cast<S>(g(rng));
  }
  return r;
}

template <class S>
void vertcat_instance(std::mt19937_64& rng, InvariantTally& t, bool augmentation) {
  if (augmentation) {
    // [R; sqrt(lambda) D] as built inside the LM drivers.
    // Banded R as a structured QR produces it; a dense random triangle would
    // be exponentially ill conditioned and test the oracle, not the factor.
    const Index m = uniform(rng, 1, 200);
    const auto r = random_banded_r<S>(rng, m, uniform(rng, 1, 8));
    const double sqrt_lambda = log_uniform(rng, 0.5, 5.0);
    DenseMatrix<S> d(m, m);
    for (Index i = 0; i < m; ++i) d(i, i) = static_cast<S>(sqrt_lambda * log_uniform(rng, 0.5, 2.0));
    DenseMatrix<S> a(2 * m, m);
    a.set_block(0, 0, r.view());
    a.set_block(m, 0, d.view());
    score(vertcat_qr(TriangularFactor<S>(r), TriangularFactor<S>(d)), a, rng, t);
    return;
  }
  const Index m = uniform(rng, 1, 100);
  const Index n1 = uniform(rng, m, 200);
  const Index n2 = uniform(rng, std::max(m, m + m / 2 + 2 - n1), 200);
  const auto a1 = random_matrix<S>(n1, m, rng);
  const auto a2 = random_matrix<S>(n2, m, rng);
  VertCatQR<DenseQR<S>> f;
  f.compute(a1, a2);
  DenseMatrix<S> a(n1 + n2, m);
  a.set_block(0, 0, a1.view());
  a.set_block(n1, 0, a2.view());
  score(f, a, rng, t);
}

Outcome criterion_factorization_invariants() {
  constexpr int kInstances = 200;
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, InvariantTally> tallies;
  const auto run = [&](const char* precision, auto tag) {
    using S = decltype(tag);
    std::mt19937_64 rng(20240 + sizeof(S));
    const std::string p = std::string("/") + precision;
    for (int i = 0; i < kInstances; ++i) {
      dense_instance<S>(rng, tallies["dense" + p]);
      block_diagonal_instance<S>(rng, tallies["blockdiag" + p]);
      horzcat_instance<S>(rng, tallies["horzcat" + p], i % 2 == 1);
      banded_instance<S>(rng, tallies["blockbanded" + p]);
      vertcat_instance<S>(rng, tallies["vertcat" + p], i % 2 == 1);
    }
  };
  run("f64", double{});
  run("f32", float{});
  const double elapsed = seconds_since(t0);

  Outcome out;
  int violations = 0;
  for (const auto& [name, t] : tallies) {
    violations += t.violations;
    out.detail += format("\n    %-16s n=%d worst/bound orth %.3g recon %.3g lsq %.3g", name.c_str(), t.instances,
                         t.orth, t.recon, t.ls);
  }
  out.detail = format("%d violations, %.1f s (limit 60 s)", violations, elapsed) + out.detail;
  if (violations > 0 || elapsed >= 60) out.kind = Outcome::fail;
  return out;
}

// ---- C2: QR step equals the normal-equations step -------------------------

/// U diag(sigma) V^T with singular values log-spaced from 1 down to 1/kappa.
Eigen::MatrixXd conditioned_matrix(std::mt19937_64& rng, Index n, Index m, double kappa) {
  const Eigen::MatrixXd gu = to_eigen(random_matrix<double>(n, m, rng));
  const Eigen::MatrixXd gv = to_eigen(random_matrix<double>(m, m, rng));
  const Eigen::MatrixXd u = Eigen::HouseholderQR<Eigen::MatrixXd>(gu).householderQ() * Eigen::MatrixXd::Identity(n, m);
  const Eigen::MatrixXd v = Eigen::HouseholderQR<Eigen::MatrixXd>(gv).householderQ();
  Eigen::VectorXd sigma(m);
  for (Index i = 0; i < m; ++i) {
    const double s = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    sigma(i) = std::pow(kappa, -s);
  }
  return u * sigma.asDiagonal() * v.transpose();
}

double condition_number(const Eigen::MatrixXd& a) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

std::vector<double> uniform_vector(std::mt19937_64& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(at(n));
  for (auto& x : v) x = u(rng);
  return v;
}

Outcome criterion_step_equivalence() {
  constexpr int kTrials = 100;
  std::mt19937_64 rng(777);
  double worst = 0, worst_kappa = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    Jacobian<double> j;
    DenseMatrix<double> dense;
    double kappa = 0;
    if (trial % 2 == 0) {
      const Index m = uniform(rng, 2, 40);
      const Index n = uniform(rng, m, 3 * m);
      kappa = log_uniform(rng, 1.0, 1e3);
      dense = oracle::from_eigen<double>(conditioned_matrix(rng, n, m, kappa));
      j = dense;
    } else {
      // Block-angular, as produced by the ellipse and BA problems; redrawn
      // until kappa <= 1e3.
      BlockAngularMatrix<double> a;
      do {
        a = oracle::random_block_angular<double>(uniform(rng, 2, 20), uniform(rng, 3, 5), uniform(rng, 1, 2),
                                                 uniform(rng, 1, 5), rng);
        dense = to_dense(a);
        kappa = condition_number(to_eigen(dense));
      } while (kappa > 1e3);
      j = a;
    }
    worst_kappa = std::max(worst_kappa, kappa);
    const auto b = uniform_vector(rng, dense.rows(), -1, 1);
    const auto d = uniform_vector(rng, dense.cols(), 0.5, 2.0);
    const double lambda = log_uniform(rng, 1e-6, 1e2);
    const auto ref = oracle::damped_step_oracle<double>(dense, b, lambda, d);
    for (auto kind : {SolverKind::qrkit, SolverKind::more_qr}) {
      auto solver = make_step_solver<double>(kind);
      solver->set_system(j, b);
      const auto p = solver->solve(lambda, d);
      worst = std::max(worst, oracle::vector_relative_error(p, ref));
    }
  }
  Outcome out;
  out.detail = format("%d systems, max kappa %.3g, worst relative deviation %.3e (limit 1e-8)", kTrials, worst_kappa,
                      worst);
  if (!(worst <= 1e-8)) out.kind = Outcome::fail;
  return out;
}

// ---- C3: single precision, QR vs Cholesky ---------------------------------

struct PrecisionTally {
  int qr_wins = 0;
  int cholesky_failures = 0;
  double qr_median = 0;
  double cholesky_median = 0;
};

PrecisionTally precision_trials(double kappa, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index n = 60, m = 20;
  PrecisionTally tally;
  std::vector<double> qr_errs, ch_errs;
  const std::vector<float> d(at(m), 1.0f);
  for (int trial = 0; trial < trials; ++trial) {
    const auto jf = oracle::from_eigen<float>(conditioned_matrix(rng, n, m, kappa));
    // b = J x* plus a residual 1% of |J x*|.
    const Eigen::VectorXd xs = to_eigen(random_matrix<double>(m, 1, rng));
    Eigen::VectorXd bd = to_eigen(jf) * xs;
    const Eigen::VectorXd noise = to_eigen(random_matrix<double>(n, 1, rng));
    bd += 1e-2 * bd.norm() / noise.norm() * noise;
    std::vector<float> b(at(n));
    for (Index i = 0; i < n; ++i) b[at(i)] = static_cast<float>(bd(i));
    const float lambda = static_cast<float>(1e-3 / (kappa * kappa));
    const auto ref = oracle::damped_step_oracle<float>(jf, b, lambda, d);

    const auto step_error = [&](SolverKind kind) {
      try {
        auto solver = make_step_solver<float>(kind);
        solver->set_system(Jacobian<float>(jf), b);
        const auto p = solver->solve(lambda, d);
        const double e = oracle::vector_relative_error(oracle::to_double<float>(p), ref);
        return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
      } catch (const SingularMatrixError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    const double qr = step_error(SolverKind::qrkit);
    const double ch = step_error(SolverKind::cholesky);
    if (std::isfinite(qr) && qr <= ch) ++tally.qr_wins;
    if (!std::isfinite(ch)) ++tally.cholesky_failures;
    qr_errs.push_back(qr);
    ch_errs.push_back(ch);
  }
  tally.qr_median = bench::median(qr_errs);
  tally.cholesky_median = bench::median(ch_errs);
  return tally;
}

Outcome criterion_precision_ordering() {
  constexpr int kTrials = 100;
  Outcome out;
  std::string lines;
  for (double kappa : {1e2, 1e4, 1e6}) {
    const auto t = precision_trials(kappa, kTrials, 3000 + static_cast<std::uint64_t>(std::log10(kappa)));
    const bool required = kappa >= 1e4;
    const bool ok = !required || t.qr_wins >= 95;
    if (!ok) out.kind = Outcome::fail;
    lines += format("\n    kappa %.0e: QR <= Cholesky in %d/%d (%s), median error QR %.2e Cholesky %.2e, %d Cholesky "
                    "failures",
                    kappa, t.qr_wins, kTrials, required ? (ok ? "need 95, ok" : "need 95, FAIL") : "not required",
                    t.qr_median, t.cholesky_median, t.cholesky_failures);
  }
  out.detail = "f32 damped steps vs a long-double reference" + lines;
  return out;
}

// ---- C4: ellipse factorization speed --------------------------------------

bench::FactorizeReport factorize(Index n, bench::FactorSolver solver, int repeat) {
  bench::FactorizeOptions opt;
  opt.n = n;
  opt.solver = solver;
  opt.precision = bench::Precision::f64;
  opt.repeat = repeat;
  return bench::run_factorize(opt);
}

Outcome criterion_ellipse_speed() {
  const auto block2k = factorize(2000, bench::FactorSolver::blockdiag, 7);
  const auto dense2k = factorize(2000, bench::FactorSolver::dense_baseline, 3);
  const auto block10k = factorize(10000, bench::FactorSolver::blockdiag, 5);
  const double speedup = dense2k.median_time_s / block2k.median_time_s;
  bool recon_ok = true;
  for (const auto* r : {&block2k, &dense2k, &block10k}) recon_ok &= r->recon_err <= 64 * r->epsilon * r->j_norm;
  Outcome out;
  out.detail = format("N=2000 blockdiag %.4g s, dense %.4g s, speedup %.0fx (need 10x); N=10000 blockdiag %.4g s "
                      "(need < 1 s); reconstruction %s",
                      block2k.median_time_s, dense2k.median_time_s, speedup, block10k.median_time_s,
                      recon_ok ? "within bound" : "OUT OF BOUND");
  if (!(speedup >= 10) || !(block10k.median_time_s < 1) || !recon_ok) out.kind = Outcome::fail;
  return out;
}

// ---- C5: bundle adjustment solver comparison ------------------------------

constexpr SolverKind kAllSolvers[] = {SolverKind::qrkit, SolverKind::qrkit_cholesky, SolverKind::more_qr,
                                      SolverKind::cholesky};

template <class S>
LMTrace run_ba(const BADataset& data, SolverKind kind, int max_iterations) {
  BundleAdjustmentProblem<S> problem(data);
  const auto x0 = ba_params<S>(data);
  auto cfg = LMConfig::defaults_for<S>();
  cfg.solver = kind;
  cfg.max_iterations = max_iterations;
  return optimize(problem, std::span<const S>(x0), cfg).trace;
}

/// (a) f64 final energies of all solvers within 2% of the best;
/// (b) f32 final energy of the QR step <= that of the Cholesky step.
Outcome compare_ba_solvers(const BADataset& data, bool enforce_f32_order) {
  constexpr int kIterations = 60;
  Outcome out;
  std::string lines;
  std::vector<double> f64;
  for (auto kind : kAllSolvers) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto trace = run_ba<double>(data, kind, kIterations);
    f64.push_back(trace.final_energy());
    lines += format("\n    f64 %-15s energy %.9g -> %.9g, %d iterations, %.1f s, %s",
                    std::string(to_string(kind)).c_str(), trace.initial_energy(), trace.final_energy(),
                    trace.iterations(), seconds_since(t0), std::string(to_string(trace.status)).c_str());
  }
  const double best = *std::min_element(f64.begin(), f64.end());
  double spread = 0;
  for (double e : f64) spread = std::max(spread, (e - best) / best);
  const bool a_ok = spread <= 0.02;

  std::map<SolverKind, double> f32;
  for (auto kind : kAllSolvers) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto trace = run_ba<float>(data, kind, kIterations);
    f32[kind] = trace.final_energy();
    lines += format("\n    f32 %-15s energy %.9g -> %.9g, %d iterations, %.1f s, %s",
                    std::string(to_string(kind)).c_str(), trace.initial_energy(), trace.final_energy(),
                    trace.iterations(), seconds_since(t0), std::string(to_string(trace.status)).c_str());
  }
  const double ratio = f32[SolverKind::qrkit] / f32[SolverKind::cholesky];
  const bool b_ok = ratio <= 1;
  out.detail = format("%lld residuals, %lld parameters; (a) f64 spread %.3f%% (need <= 2%%) %s; (b) f32 "
                      "qrkit/cholesky energy ratio %.6f %s",
                      static_cast<long long>(data.num_residuals()), static_cast<long long>(data.num_params()),
                      100 * spread, a_ok ? "ok" : "FAIL", ratio,
                      enforce_f32_order ? (b_ok ? "ok" : "FAIL") : "(reported only)") +
               lines;
  if (!a_ok || (enforce_f32_order && !b_ok)) out.kind = Outcome::fail;
  return out;
}

Outcome criterion_trafalgar() {
  fs::path path;
  try {
    path = bench::find_dataset("trafalgar");
  } catch (const bench::InputError& e) {
    return {Outcome::skip, e.what()};
  }
  const auto data = bench::load_bal(path);
  auto out = compare_ba_solvers(data, true);
  out.detail = path.string() + ": " + out.detail;
  return out;
}

/// Synthetic stand-in when Trafalgar is not available. The f32 ordering is
/// printed but not enforced: on a well-conditioned scene both solvers reach
/// the same minimum and the ordering is rounding noise.
Outcome criterion_synthetic_ba() {
  BASceneOptions opt;
  opt.num_cameras = 10;
  opt.num_points = 800;
  opt.seed = 5;
  return compare_ba_solvers(generate_ba_scene(opt).data, false);
}

// ---- C6: monotone traces and Jacobians ------------------------------------

/// Independent of LMTrace's own helper: walks the records directly.
bool strictly_decreasing(const LMTrace& t) {
  double last = std::numeric_limits<double>::infinity();
  for (const auto& r : t.records) {
    if (!r.accepted) continue;
    if (!(r.energy < last)) return false;
    last = r.energy;
  }
  return true;
}

double max_abs_deviation(const DenseMatrix<double>& j, const Eigen::MatrixXd& fd) {
  return (to_eigen(j) - fd).cwiseAbs().maxCoeff();
}

Outcome criterion_monotone_and_gradients() {
  int traces = 0, bad = 0;
  std::string bad_names;
  const auto check = [&](const LMTrace& t, const std::string& name) {
    ++traces;
    if (!strictly_decreasing(t)) {
      ++bad;
      bad_names += " " + name;
    }
  };
  const auto ellipse = generate_ellipse_data(300, kDefaultEllipse, 0.01, 11);
  BASceneOptions scene_opt;
  scene_opt.num_cameras = 6;
  scene_opt.num_points = 300;
  scene_opt.seed = 12;
  const auto scene = generate_ba_scene(scene_opt);
  const auto sweep = [&](auto tag, const char* precision) {
    using S = decltype(tag);
    const auto prob = ellipse.problem<S>();
    const auto x0 = ellipse.initial_x<S>();
    for (auto kind : kAllSolvers) {
      for (auto damping : {DampingMode::identity, DampingMode::marquardt}) {
        auto cfg = LMConfig::defaults_for<S>();
        cfg.solver = kind;
        cfg.damping = damping;
        check(optimize(prob, std::span<const S>(x0), cfg).trace,
              std::string("ellipse/") + precision + "/" + std::string(to_string(kind)) + "/" +
                  std::string(to_string(damping)));
      }
      check(run_ba<S>(scene.data, kind, 50), std::string("ba/") + precision + "/" + std::string(to_string(kind)));
    }
  };
  sweep(double{}, "f64");
  sweep(float{}, "f32");

  // Central differences with one Richardson step, in double.
  const auto small_ellipse = generate_ellipse_data(40, kDefaultEllipse, 0.05, 13);
  const auto eprob = small_ellipse.problem<double>();
  const auto ex = small_ellipse.initial_x<double>();
  const double ellipse_dev =
      max_abs_deviation(to_dense(eprob.jacobian(ex)), oracle::richardson_jacobian(eprob, std::span<const double>(ex)));
  BASceneOptions small_opt;
  small_opt.num_cameras = 3;
  small_opt.num_points = 12;
  small_opt.seed = 14;
  const auto small_scene = generate_ba_scene(small_opt);
  BundleAdjustmentProblem<double> bprob(small_scene.data);
  const auto bx = ba_params<double>(small_scene.data);
  const double ba_dev =
      max_abs_deviation(to_dense(bprob.jacobian(bx)), oracle::richardson_jacobian(bprob, std::span<const double>(bx)));

  Outcome out;
  out.detail = format("%d/%d traces strictly decreasing; Jacobian vs finite differences: ellipse %.2e, BA %.2e "
                      "(limit 1e-5)",
                      traces - bad, traces, ellipse_dev, ba_dev);
  if (bad > 0) out.detail += "; non-monotone:" + bad_names;
  if (bad > 0 || !(ellipse_dev <= 1e-5) || !(ba_dev <= 1e-5)) out.kind = Outcome::fail;
  return out;
}

// ---- C7: structural assertions --------------------------------------------

/// Q storage allowed for one dense step of p rows and w columns: the
/// reflectors (p * w) plus the triangular WY factors (w * w).
Index dense_storage_bound(Index p, Index w) { return p * w + w * w; }

template <class S>
Index block_diagonal_storage_bound(const BlockDiagonalMatrix<S>& a) {
  Index s = 0;
  for (Index k = 0; k < a.num_blocks(); ++k) s += dense_storage_bound(a.block(k).rows(), a.block(k).cols());
  return s;
}

/// Step k sees block k's rows plus at most overlap(k-1) carried rows.
template <class S>
Index banded_storage_bound(const BandedBlockMatrix<S>& a) {
  Index s = 0;
  for (Index k = 0; k < a.num_blocks(); ++k) {
    const Index carried = k == 0 ? 0 : a.overlap(k - 1);
    s += dense_storage_bound(a.block(k).rows() + carried, a.block(k).cols());
  }
  return s;
}

template <class S>
Index bandwidth_bound(const BandedBlockMatrix<S>& a) {
  Index w = 0;
  for (Index k = 0; k < a.num_blocks(); ++k) w = std::max(w, a.block(k).cols() + a.overlap(k));
  return w;
}

/// Width of the column window a sequential banded sweep must hold at each
/// row: from the row's first column to the furthest last column seen so far.
template <class S>
Index staircase_width(const TripletMatrix<S>& a) {
  Index furthest = -1, w = 0;
  for (const auto& s : row_spans(a)) {
    if (s.empty()) continue;
    furthest = std::max(furthest, s.last);
    w = std::max(w, furthest - s.first + 1);
  }
  return w;
}

template <class S>
bool first_columns_sorted(const TripletMatrix<S>& a) {
  Index prev = -1;
  for (const auto& s : row_spans(a)) {
    if (s.empty()) continue;
    if (s.first < prev) return false;
    prev = s.first;
  }
  return true;
}

Outcome criterion_structure() {
  std::mt19937_64 rng(4242);
  int band_cases = 0, band_bad = 0, storage_cases = 0, storage_bad = 0;

  // Banded factorizations: bandwidth and storage.
  for (int i = 0; i < 200; ++i) {
    const auto a = random_chain<double>(rng, 400, 200);
    const auto f = block_banded_qr(a);
    ++band_cases;
    if (bandwidth(f.r_triplets()) > bandwidth_bound(a)) ++band_bad;
    ++storage_cases;
    if (f.q_storage_scalars() > banded_storage_bound(a)) ++storage_bad;
  }
  // Composite factors.
  for (int i = 0; i < 100; ++i) {
    const auto left = random_blocks<double>(rng, 4, 400, 170);
    const Index m2 = uniform(rng, 1, 10);
    const auto right = random_matrix<double>(left.rows(), m2, rng);
    HorzCatQR<BlockDiagonalQR<double>> h;
    h.compute(left, right);
    ++storage_cases;
    if (h.q_storage_scalars() > block_diagonal_storage_bound(left) + dense_storage_bound(left.rows(), m2)) ++storage_bad;

    const Index m = uniform(rng, 2, 150);
    const auto r = random_banded_r<double>(rng, m, uniform(rng, 1, 8));
    const auto d = DenseMatrix<double>::identity(m);
    const auto v = vertcat_qr(TriangularFactor<double>(r), TriangularFactor<double>(d));
    // The refactorization is itself block banded; check it the same way.
    Index banded_bound = 0;
    for (Index k = 0; k < v.banded().num_steps(); ++k) {
      const auto& st = v.banded().step(k);
      banded_bound += dense_storage_bound(static_cast<Index>(st.slots.size()), st.factor.cols());
    }
    ++storage_cases;
    if (v.q_storage_scalars() > banded_bound) ++storage_bad;
    ++band_cases;
    if (bandwidth(v.r_triplets()) > bandwidth(r) + 1) ++band_bad;
  }
  // Q at benchmark scale: scalars held vs the n^2 of an explicit Q.
  const auto ds = generate_ellipse_data(2000, kDefaultEllipse, 0.01, 1);
  const auto j = std::get<BlockAngularMatrix<double>>(ds.problem<double>().jacobian(ds.initial_x<double>()));
  HorzCatQR<BlockDiagonalQR<double>> ellipse_f;
  ellipse_f.compute(j.left, j.right);
  const double q_fraction =
      static_cast<double>(ellipse_f.q_storage_scalars()) / (static_cast<double>(j.rows()) * static_cast<double>(j.rows()));
  ++storage_cases;
  if (ellipse_f.q_storage_scalars() >
      block_diagonal_storage_bound(j.left) + dense_storage_bound(j.rows(), j.right.cols()))
    ++storage_bad;

  // Interleaving [R; D] for random banded profiles.
  int interleave_bad = 0;
  Index worst_excess = -1;
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = uniform(rng, 5, 60);
    const Index w = uniform(rng, 1, 8);
    std::vector<Index> last(at(m));
    TripletMatrix<double> stacked(2 * m, m), r_only(m, m);
    for (Index i = 0; i < m; ++i) {
      last[at(i)] = std::min(m - 1, i + uniform(rng, 0, w - 1));
      for (Index c = i; c <= last[at(i)]; ++c) {
        stacked.add(i, c, 1.0);
        r_only.add(i, c, 1.0);
      }
      stacked.add(m + i, i, 1.0);
    }
    const auto permuted = apply_row_permutation(lm_interleave_permutation(last, m), stacked);
    const Index band = bandwidth(r_only);
    const Index excess = std::max(bandwidth(permuted), staircase_width(permuted)) - band;
    worst_excess = std::max(worst_excess, excess);
    if (excess > 1 || !first_columns_sorted(permuted)) ++interleave_bad;
  }

  Outcome out;
  out.detail = format("bandwidth bound %d/%d; Q storage bound %d/%d (ellipse N=2000 keeps %.4f%% of n^2); "
                      "interleave %d/100 within band+1 (worst excess %lld)",
                      band_cases - band_bad, band_cases, storage_cases - storage_bad, storage_cases,
                      100 * q_fraction, 100 - interleave_bad, static_cast<long long>(worst_excess));
  if (band_bad > 0 || storage_bad > 0 || interleave_bad > 0 || q_fraction >= 0.01) out.kind = Outcome::fail;
  return out;
}

// ---- C8: CLI determinism --------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_determinism(const std::string& cli) {
  if (cli.empty() || !fs::is_regular_file(cli)) return {Outcome::fail, "qrkit-bench not found (pass --cli PATH)"};
  const fs::path root = fs::temp_directory_path() / ("qrkit-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path ba_input = root / "scene.bal";

  struct Run {
    std::string name;
    std::string args;  // "{out}" is replaced by the run's directory
    std::string csv;
  };
  const std::vector<Run> runs = {
      {"factorize f64", "factorize --n 400 --seed 3 --precision f64 --repeat 2 --out {out}", "factorize.csv"},
      {"factorize f32", "factorize --n 400 --seed 3 --precision f32 --solver blockbanded --out {out}",
       "factorize.csv"},
      {"optimize ellipse f64", "optimize --problem ellipse --n 300 --seed 4 --precision f64 --out {out}", "trace.csv"},
      {"optimize ellipse f32", "optimize --problem ellipse --n 300 --seed 4 --precision f32 --solver more-qr --out {out}",
       "trace.csv"},
      {"optimize ba f64", "optimize --problem ba --input " + ba_input.string() + " --precision f64 --out {out}",
       "trace.csv"},
      {"optimize ba f32",
       "optimize --problem ba --input " + ba_input.string() + " --precision f32 --solver cholesky --out {out}",
       "trace.csv"},
      {"sweep", "sweep --sizes 100,300 --precisions f32,f64 --seed 5 --out {out}", "sweep.csv"},
  };

  const auto shell = [&](const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (shell("generate --problem ba --n 150 --cameras 5 --seed 6 --out " + ba_input.string(), root / "gen.log") != 0) {
    return {Outcome::fail, "could not generate the BA input"};
  }

  Outcome out;
  int identical = 0;
  std::string lines;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    std::string contents[2];
    bool ran = true;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / ("run" + std::to_string(r) + "_" + std::to_string(rep));
      std::string args = runs[r].args + " --threads 1 --no-timing";
      args.replace(args.find("{out}"), 5, "\"" + dir.string() + "\"");
      ran &= shell(args, root / ("run" + std::to_string(r) + "_" + std::to_string(rep) + ".log")) == 0;
      contents[rep] = slurp(dir / runs[r].csv);
    }
    const bool same = ran && !contents[0].empty() && contents[0] == contents[1];
    identical += same ? 1 : 0;
    lines += format("\n    %-22s %s (%zu bytes)", runs[r].name.c_str(),
                    !ran ? "CLI FAILED" : (same ? "identical" : "DIFFERENT"), contents[0].size());
  }
  fs::remove_all(root);
  out.detail = format("%d/%zu CLI runs byte-identical across two invocations", identical, runs.size()) + lines;
  if (identical != static_cast<int>(runs.size())) out.kind = Outcome::fail;
  return out;
}

// ---- driver ---------------------------------------------------------------

struct Criterion {
  std::string id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qrkit acceptance checks"};
  std::vector<std::string> selected;
  std::string cli;
  app.add_option("--criterion", selected, "Criteria to run (1-8, 5s); default all");
  app.add_option("--cli", cli, "Path to the qrkit-bench executable (criterion 8)");
  CLI11_PARSE(app, argc, argv);

  set_max_threads(1);
  const std::vector<Criterion> all = {
      {"1", "factorization invariants", criterion_factorization_invariants},
      {"2", "QR step equals normal-equations step", criterion_step_equivalence},
      {"3", "f32 step accuracy, QR vs Cholesky", criterion_precision_ordering},
      {"4", "ellipse factorization speed", criterion_ellipse_speed},
      {"5", "bundle adjustment on Trafalgar", criterion_trafalgar},
      {"5s", "bundle adjustment on a synthetic scene", criterion_synthetic_ba},
      {"6", "monotone traces and Jacobian checks", criterion_monotone_and_gradients},
      {"7", "structural bounds", criterion_structure},
      {"8", "CLI determinism", [&] { return criterion_determinism(cli); }},
  };

  int passed = 0, failed = 0, skipped = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* verdict = o.kind == Outcome::pass ? "PASS" : (o.kind == Outcome::fail ? "FAIL" : "SKIP");
    std::printf("[C%s] %s: %s  %s  (%.1f s)\n", c.id.c_str(), c.name.c_str(), verdict, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    (o.kind == Outcome::pass ? passed : (o.kind == Outcome::fail ? failed : skipped)) += 1;
  }
  std::printf("%d passed, %d failed, %d skipped\n", passed, failed, skipped);
  if (failed > 0) return 1;
  if (passed == 0 && skipped > 0) return kExitSkip;
  return 0;
}
