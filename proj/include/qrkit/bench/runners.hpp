#pragma once

// The experiments behind qrkit-bench: factorization timing on the ellipse
// Jacobian, LM runs with trace output, and size sweeps.

#include <qrkit/bench/io.hpp>
#include <qrkit/bench/svg.hpp>
#include <qrkit/lm/drivers.hpp>
#include <qrkit/qr/block_banded_qr.hpp>
#include <qrkit/qr/block_diagonal_qr.hpp>
#include <qrkit/qr/horzcat_qr.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace qrkit::bench {

enum class Precision { f32, f64 };

inline std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  return std::nullopt;
}

enum class FactorSolver { blockdiag, blockbanded, dense_baseline };

inline std::string_view to_string(FactorSolver s) {
  switch (s) {
    case FactorSolver::blockdiag: return "blockdiag";
    case FactorSolver::blockbanded: return "blockbanded";
    case FactorSolver::dense_baseline: return "dense-baseline";
  }
  return "?";
}

inline std::optional<FactorSolver> parse_factor_solver(std::string_view s) {
  if (s == "blockdiag") return FactorSolver::blockdiag;
  if (s == "blockbanded") return FactorSolver::blockbanded;
  if (s == "dense-baseline") return FactorSolver::dense_baseline;
  return std::nullopt;
}

/// Bad option values detected after parsing; the CLI exits with code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

// ---- factorize -------------------------------------------------------------

struct FactorizeOptions {
  Index n = 500;
  FactorSolver solver = FactorSolver::blockdiag;
  Precision precision = Precision::f64;
  std::uint64_t seed = 1;
  int repeat = 3;
  double noise = 0.01;
  bool record_time = true;
};

struct FactorizeReport {
  FactorizeOptions options;
  Index rows = 0, cols = 0;
  std::vector<double> times_s;  // zeros when timing is off
  double median_time_s = 0;
  /// ||J - Q R||_F, computed in double from the working-precision factors.
  double recon_err = 0;
  double j_norm = 0;
  double epsilon = 0;
  Index r_nnz = 0;
  /// Energy after one Gauss-Newton step solved with this factorization.
  double gn_energy = 0;
};

inline constexpr std::string_view kFactorizeCsvHeader = "problem,n,solver,precision,run,time_s,recon_err,r_nnz";
inline constexpr std::string_view kSweepCsvHeader = "problem,n,solver,precision,median_time_s,recon_err,final_energy";

namespace detail {

/// Columns [c0, c1) of a block-angular matrix, densified.
template <RealScalar S>
DenseMatrix<S> column_slice(const BlockAngularMatrix<S>& a, Index c0, Index c1) {
  DenseMatrix<S> out(a.rows(), c1 - c0);
  const Index m1 = a.left.cols();
  for (Index k = 0; k < a.left.num_blocks(); ++k) {
    const auto& b = a.left.block(k);
    const Index co = a.left.col_offset(k), ro = a.left.row_offset(k);
    for (Index j = std::max(c0, co); j < std::min(c1, co + b.cols()); ++j)
      for (Index i = 0; i < b.rows(); ++i) out(ro + i, j - c0) = b(i, j - co);
  }
  for (Index j = std::max(c0, m1); j < c1; ++j)
    for (Index i = 0; i < a.rows(); ++i) out(i, j - c0) = a.right(i, j - m1);
  return out;
}

/// ||A - Q R||_F, column chunk by column chunk so the full Q is never formed.
template <RealScalar S, QRFactorization F>
double reconstruction_error(const F& f, const BlockAngularMatrix<S>& a, Index chunk = 256) {
  const auto triplets = f.r_triplets();
  std::vector<std::vector<Triplet<S>>> by_col(static_cast<std::size_t>(a.cols()));
  for (const auto& t : triplets.entries()) by_col[static_cast<std::size_t>(t.col)].push_back(t);
  double sum = 0;
  for (Index c0 = 0; c0 < a.cols(); c0 += chunk) {
    const Index c1 = std::min(a.cols(), c0 + chunk);
    DenseMatrix<S> qr(a.rows(), c1 - c0);
    for (Index c = c0; c < c1; ++c)
      for (const auto& t : by_col[static_cast<std::size_t>(c)]) qr(t.row, c - c0) += t.value;
    f.apply_q(qr.view());
    const DenseMatrix<S> ref = column_slice(a, c0, c1);
    for (Index j = 0; j < qr.cols(); ++j) {
      for (Index i = 0; i < qr.rows(); ++i) {
        const double e = static_cast<double>(ref(i, j)) - static_cast<double>(qr(i, j));
        sum += e * e;
      }
    }
  }
  return std::sqrt(sum);
}

template <RealScalar S>
double frobenius(const BlockAngularMatrix<S>& a) {
  double s = 0;
  for (const auto& b : a.left.blocks())
    for (Index j = 0; j < b.cols(); ++j)
      for (Index i = 0; i < b.rows(); ++i) s += static_cast<double>(b(i, j)) * static_cast<double>(b(i, j));
  for (Index j = 0; j < a.right.cols(); ++j)
    for (Index i = 0; i < a.right.rows(); ++i) s += static_cast<double>(a.right(i, j)) * static_cast<double>(a.right(i, j));
  return std::sqrt(s);
}

/// The block-diagonal left part as a banded matrix with zero overlaps.
template <RealScalar S>
BandedBlockMatrix<S> as_banded(const BlockDiagonalMatrix<S>& a) {
  std::vector<Index> rows;
  for (Index k = 0; k < a.num_blocks(); ++k) rows.push_back(a.row_offset(k));
  const std::size_t overlaps = a.num_blocks() > 0 ? static_cast<std::size_t>(a.num_blocks() - 1) : 0;
  return BandedBlockMatrix<S>(a.blocks(), std::vector<Index>(overlaps, 0), std::move(rows), a.rows());
}

template <RealScalar S, class Factorize>
void measure(FactorizeReport& rep, const FactorizeOptions& opt, const BlockAngularMatrix<S>& j,
             const EllipseProblem<S>& prob, std::span<const S> x, Factorize&& factorize) {
  using Clock = std::chrono::steady_clock;
  std::optional<decltype(factorize())> last;
  for (int r = 0; r < std::max(1, opt.repeat); ++r) {
    last.reset();
    const auto t0 = Clock::now();
    last.emplace(factorize());
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    rep.times_s.push_back(opt.record_time ? dt : 0.0);
  }
  rep.median_time_s = median(rep.times_s);
  const auto& f = *last;
  rep.recon_err = reconstruction_error<S>(f, j);
  const auto triplets = f.r_triplets();
  rep.r_nnz = 0;
  for (const auto& t : triplets.entries()) rep.r_nnz += t.value != S(0) ? 1 : 0;

  const auto res = prob.residuals(x);
  DenseMatrix<S> b(static_cast<Index>(res.size()), 1);
  for (std::size_t i = 0; i < res.size(); ++i) b(static_cast<Index>(i), 0) = -res[i];
  try {
    const auto p = solve_least_squares(f, b);
    std::vector<S> xn(x.begin(), x.end());
    for (std::size_t i = 0; i < xn.size(); ++i) xn[i] += p(static_cast<Index>(i), 0);
    rep.gn_energy = energy(prob, std::span<const S>(xn));
  } catch (const SingularMatrixError&) {
    rep.gn_energy = std::nan("");
  } catch (const DomainError&) {
    rep.gn_energy = std::nan("");
  }
}

template <RealScalar S>
FactorizeReport run_factorize_typed(const FactorizeOptions& opt) {
  FactorizeReport rep;
  rep.options = opt;
  rep.epsilon = static_cast<double>(machine_epsilon<S>());
  const auto ds = generate_ellipse_data(opt.n, kDefaultEllipse, opt.noise, opt.seed);
  const auto prob = ds.problem<S>();
  const auto x = ds.initial_x<S>();
  const auto j = std::get<BlockAngularMatrix<S>>(prob.jacobian(x));
  rep.rows = j.rows();
  rep.cols = j.cols();
  rep.j_norm = frobenius(j);
  switch (opt.solver) {
    case FactorSolver::blockdiag:
      measure<S>(rep, opt, j, prob, x, [&] {
        HorzCatQR<BlockDiagonalQR<S>> f;
        f.compute(j.left, j.right);
        return f;
      });
      break;
    case FactorSolver::blockbanded: {
      const auto banded = as_banded(j.left);
      measure<S>(rep, opt, j, prob, x, [&] {
        HorzCatQR<BlockBandedQR<S>> f;
        f.compute(banded, j.right);
        return f;
      });
      break;
    }
    case FactorSolver::dense_baseline: {
      const auto dense = to_dense(j);
      measure<S>(rep, opt, j, prob, x, [&] { return dense_qr(dense); });
      break;
    }
  }
  return rep;
}

}  // namespace detail

inline FactorizeReport run_factorize(const FactorizeOptions& opt) {
  // Below 5 points the N + 5 unknowns outnumber the 2N residuals.
  if (opt.n < 5) throw UsageError("--n must be at least 5");
  if (opt.repeat < 1) throw UsageError("--repeat must be at least 1");
  return opt.precision == Precision::f32 ? detail::run_factorize_typed<float>(opt)
                                         : detail::run_factorize_typed<double>(opt);
}

inline void write_factorize_csv(std::ostream& os, const FactorizeReport& rep) {
  os << kFactorizeCsvHeader << '\n';
  for (std::size_t r = 0; r < rep.times_s.size(); ++r) {
    os << "ellipse," << rep.options.n << ',' << to_string(rep.options.solver) << ',' << to_string(rep.options.precision)
       << ',' << r << ',' << format_double(rep.times_s[r]) << ',' << format_double(rep.recon_err) << ',' << rep.r_nnz
       << '\n';
  }
}

// ---- optimize --------------------------------------------------------------

struct OptimizeOptions {
  std::string problem = "ellipse";  // ellipse | ba
  /// Dataset path or name; empty generates an ellipse data set from n/seed/noise.
  std::string input;
  Index n = 500;
  std::uint64_t seed = 1;
  double noise = 0.01;
  SolverKind solver = SolverKind::qrkit;
  Precision precision = Precision::f64;
  DampingMode damping = DampingMode::identity;
  int max_iters = 100;
  bool record_time = true;
  fs::path out;  // empty: no files written
};

struct OptimizeReport {
  OptimizeOptions options;
  Index num_residuals = 0, num_params = 0;
  LMTrace trace;
};

namespace detail {

template <RealScalar S>
OptimizeReport run_optimize_typed(const OptimizeOptions& opt) {
  OptimizeReport rep;
  rep.options = opt;
  LMConfig cfg = LMConfig::defaults_for<S>();
  cfg.solver = opt.solver;
  cfg.damping = opt.damping;
  cfg.max_iterations = opt.max_iters;
  cfg.record_time = opt.record_time;
  const auto run = [&](const LeastSquaresProblem<S>& prob, const std::vector<S>& x0) {
    rep.num_residuals = prob.num_residuals();
    rep.num_params = prob.num_params();
    rep.trace = optimize(prob, std::span<const S>(x0), cfg).trace;
  };
  if (opt.problem == "ellipse") {
    const EllipseDataset ds = opt.input.empty() ? generate_ellipse_data(opt.n, kDefaultEllipse, opt.noise, opt.seed)
                                                : load_ellipse_dataset(find_dataset(opt.input));
    run(ds.problem<S>(), ds.initial_x<S>());
  } else {
    const BADataset d = load_bal(find_dataset(opt.input));
    run(BundleAdjustmentProblem<S>(d), ba_params<S>(d));
  }
  return rep;
}

}  // namespace detail

inline nlohmann::json summary_json(const OptimizeReport& rep) {
  const auto& t = rep.trace;
  return {{"problem", rep.options.problem},
          {"solver", std::string(to_string(rep.options.solver))},
          {"precision", std::string(to_string(rep.options.precision))},
          {"damping", std::string(to_string(rep.options.damping))},
          {"initial_energy", t.initial_energy()},
          {"final_energy", t.final_energy()},
          {"iterations", t.iterations()},
          {"accepted_steps", t.accepted_steps()},
          {"total_time_s", t.total_time_s()},
          {"status", std::string(to_string(t.status))}};
}

inline std::string convergence_svg(const LMTrace& t, const std::string& label) {
  Series by_time{label, {}, {}}, by_iter{label, {}, {}};
  // Accepted energies only: the curve an observer of the iterate sees.
  for (const auto& r : t.records) {
    if (!r.accepted) continue;
    by_time.x.push_back(r.time_s);
    by_time.y.push_back(r.energy);
    by_iter.x.push_back(r.iter);
    by_iter.y.push_back(r.energy);
  }
  return render_svg({Chart{"Energy vs time", "time [s]", "energy", false, true, {by_time}},
                     Chart{"Energy vs iteration", "iteration", "energy", false, true, {by_iter}}});
}

inline OptimizeReport run_optimize(const OptimizeOptions& opt) {
  if (opt.problem != "ellipse" && opt.problem != "ba") throw UsageError("--problem must be ellipse or ba");
  if (opt.problem == "ba" && opt.input.empty()) throw UsageError("--problem ba needs --input");
  if (opt.max_iters < 0) throw UsageError("--max-iters must be non-negative");
  OptimizeReport rep = opt.precision == Precision::f32 ? detail::run_optimize_typed<float>(opt)
                                                       : detail::run_optimize_typed<double>(opt);
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    std::ostringstream csv;
    write_trace_csv(csv, rep.trace);
    write_file(opt.out / "trace.csv", csv.str());
    write_file(opt.out / "summary.json", summary_json(rep).dump(2) + "\n");
    write_file(opt.out / "convergence.svg",
               convergence_svg(rep.trace, std::string(to_string(opt.solver)) + " " + std::string(to_string(opt.precision))));
  }
  return rep;
}

// ---- sweep -----------------------------------------------------------------

struct SweepOptions {
  std::vector<Index> sizes{500, 1000, 2000, 5000, 10000};
  std::vector<FactorSolver> solvers{FactorSolver::blockdiag, FactorSolver::blockbanded, FactorSolver::dense_baseline};
  std::vector<Precision> precisions{Precision::f64};
  std::uint64_t seed = 1;
  int repeat = 3;
  double noise = 0.01;
  /// Dense factorization above this size is skipped (its row holds nan).
  Index dense_max_n = 2000;
  bool record_time = true;
  fs::path out;
};

struct SweepRow {
  Index n = 0;
  FactorSolver solver{};
  Precision precision{};
  bool skipped = false;
  double median_time_s = 0;
  double recon_err = 0;
  double final_energy = 0;
};

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    os << "ellipse," << r.n << ',' << to_string(r.solver) << ',' << to_string(r.precision) << ','
       << format_double(r.median_time_s) << ',' << format_double(r.recon_err) << ',' << format_double(r.final_energy)
       << '\n';
  }
}

inline std::string sweep_svg(const std::vector<SweepRow>& rows) {
  std::vector<Series> series;
  for (const auto& r : rows) {
    if (r.skipped) continue;
    const std::string name = std::string(to_string(r.solver)) + " " + std::string(to_string(r.precision));
    auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
    if (it == series.end()) {
      series.push_back({name, {}, {}});
      it = series.end() - 1;
    }
    it->x.push_back(static_cast<double>(r.n));
    it->y.push_back(r.median_time_s);
  }
  return render_svg({Chart{"Factorization time", "N (points)", "median time [s]", true, true, std::move(series)}});
}

inline std::vector<SweepRow> run_sweep(const SweepOptions& opt) {
  if (opt.sizes.empty() || opt.solvers.empty() || opt.precisions.empty()) {
    throw UsageError("sweep needs at least one size, solver and precision");
  }
  std::vector<SweepRow> rows;
  for (Index n : opt.sizes) {
    for (FactorSolver s : opt.solvers) {
      for (Precision p : opt.precisions) {
        SweepRow row{n, s, p};
        if (s == FactorSolver::dense_baseline && n > opt.dense_max_n) {
          row.skipped = true;
          row.median_time_s = row.recon_err = row.final_energy = std::nan("");
        } else {
          FactorizeOptions f;
          f.n = n;
          f.solver = s;
          f.precision = p;
          f.seed = opt.seed;
          f.repeat = opt.repeat;
          f.noise = opt.noise;
          f.record_time = opt.record_time;
          const auto rep = run_factorize(f);
          row.median_time_s = rep.median_time_s;
          row.recon_err = rep.recon_err;
          row.final_energy = rep.gn_energy;
        }
        rows.push_back(row);
      }
    }
  }
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    write_file(opt.out / "sweep.csv", csv.str());
    write_file(opt.out / "sweep.svg", sweep_svg(rows));
  }
  return rows;
}

}  // namespace qrkit::bench
