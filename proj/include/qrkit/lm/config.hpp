#pragma once

#include <qrkit/core/dense_matrix.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace qrkit {

enum class DampingMode { identity, marquardt };

/// How each damped step is solved.
///  qrkit           single QR of the row-permuted system [J; sqrt(lambda) D]
///  qrkit_cholesky  block-diagonal QR on the left part, Cholesky on the reduced dense part
///  more_qr         QR of J once per iteration, then QR of [R; sqrt(lambda) D] per trial
///  cholesky        normal equations, Schur complement on the block-diagonal part
enum class SolverKind { qrkit, qrkit_cholesky, more_qr, cholesky };

inline std::string_view to_string(DampingMode d) { return d == DampingMode::identity ? "identity" : "marquardt"; }

inline std::string_view to_string(SolverKind s) {
  switch (s) {
    case SolverKind::qrkit: return "qrkit";
    case SolverKind::qrkit_cholesky: return "qrkit-cholesky";
    case SolverKind::more_qr: return "more-qr";
    case SolverKind::cholesky: return "cholesky";
  }
  return "?";
}

inline std::optional<DampingMode> parse_damping_mode(std::string_view s) {
  if (s == "identity") return DampingMode::identity;
  if (s == "marquardt") return DampingMode::marquardt;
  return std::nullopt;
}

inline std::optional<SolverKind> parse_solver_kind(std::string_view s) {
  if (s == "qrkit") return SolverKind::qrkit;
  if (s == "qrkit-cholesky") return SolverKind::qrkit_cholesky;
  if (s == "more-qr") return SolverKind::more_qr;
  if (s == "cholesky") return SolverKind::cholesky;
  return std::nullopt;
}

struct LMConfig {
  /// Initial damping; a value <= 0 selects 1e-3 * max_i (J^T J)_ii at x0
  /// (identity damping) or 1e-3 (Marquardt damping, where D carries the scale).
  double lambda0 = 0;
  double lambda_up = 2;
  double lambda_down = 1.0 / 3.0;
  /// Damping above this is treated as failure.
  double lambda_max = 1e32;
  int max_iterations = 200;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  double energy_tol = 1e-12;
  DampingMode damping = DampingMode::identity;
  SolverKind solver = SolverKind::qrkit;
  /// When false every time stamp is written as 0, which makes traces
  /// byte-for-byte reproducible.
  bool record_time = true;

  template <RealScalar Scalar>
  static LMConfig defaults_for() {
    LMConfig c;
    if constexpr (std::is_same_v<Scalar, float>) {
      c.grad_tol = 1e-4;
      c.step_tol = 1e-5;
      c.energy_tol = 1e-6;
    }
    return c;
  }

  void validate() const {
    if (!(lambda_up > 1)) throw std::invalid_argument("LMConfig: lambda_up must exceed 1");
    if (!(lambda_down > 0 && lambda_down < 1)) throw std::invalid_argument("LMConfig: lambda_down must lie in (0, 1)");
    if (!(grad_tol > 0 && step_tol > 0 && energy_tol > 0)) {
      throw std::invalid_argument("LMConfig: tolerances must be positive");
    }
    if (max_iterations < 0) throw std::invalid_argument("LMConfig: max_iterations must be non-negative");
  }
};

}  // namespace qrkit
