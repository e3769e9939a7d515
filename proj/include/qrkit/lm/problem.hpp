#pragma once

// Nonlinear least-squares problem interface and structured Jacobian helpers.
//
// Sizes follow one convention throughout: n residuals, m parameters, so a
// Jacobian is n x m.

#include <qrkit/core/structured_matrix.hpp>

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qrkit {

/// A Jacobian is either a plain dense matrix or the block-angular
/// [block diagonal | dense] shape of latent-variable problems.
template <RealScalar Scalar>
using Jacobian = std::variant<DenseMatrix<Scalar>, BlockAngularMatrix<Scalar>>;

template <RealScalar Scalar>
Index jacobian_rows(const Jacobian<Scalar>& j) {
  return std::visit([](const auto& a) { return a.rows(); }, j);
}

template <RealScalar Scalar>
Index jacobian_cols(const Jacobian<Scalar>& j) {
  return std::visit([](const auto& a) { return a.cols(); }, j);
}

template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const Jacobian<Scalar>& j) {
  return std::visit([](const auto& a) { return to_dense(a); }, j);
}

/// Block-angular view of any Jacobian. A dense J becomes a single n x 0
/// left block next to J itself, so one code path serves both shapes.
template <RealScalar Scalar>
BlockAngularMatrix<Scalar> as_block_angular(const Jacobian<Scalar>& j) {
  if (const auto* ba = std::get_if<BlockAngularMatrix<Scalar>>(&j)) return *ba;
  const auto& d = std::get<DenseMatrix<Scalar>>(j);
  return {BlockDiagonalMatrix<Scalar>({DenseMatrix<Scalar>(d.rows(), 0)}), d};
}

namespace detail {

template <RealScalar Scalar>
void check_angular(const BlockAngularMatrix<Scalar>& a) {
  if (a.left.rows() != a.right.rows()) {
    throw DimensionError("block angular matrix: left part has " + std::to_string(a.left.rows()) +
                         " rows, right part " + std::to_string(a.right.rows()));
  }
}

}  // namespace detail

/// y = J x.
template <RealScalar Scalar>
std::vector<Scalar> jacobian_multiply(const Jacobian<Scalar>& j, std::span<const Scalar> x) {
  if (static_cast<Index>(x.size()) != jacobian_cols(j)) {
    throw DimensionError("jacobian_multiply: x has " + std::to_string(x.size()) + " entries, J has " +
                         std::to_string(jacobian_cols(j)) + " columns");
  }
  std::vector<Scalar> y(static_cast<std::size_t>(jacobian_rows(j)), Scalar(0));
  const auto dense_part = [&](const DenseMatrix<Scalar>& a, Index x0) {
    for (Index c = 0; c < a.cols(); ++c) {
      const Scalar v = x[static_cast<std::size_t>(x0 + c)];
      if (v != Scalar(0)) axpy(v, a.col(c), y.data(), a.rows());
    }
  };
  if (const auto* d = std::get_if<DenseMatrix<Scalar>>(&j)) {
    dense_part(*d, 0);
    return y;
  }
  const auto& a = std::get<BlockAngularMatrix<Scalar>>(j);
  detail::check_angular(a);
  for (Index k = 0; k < a.left.num_blocks(); ++k) {
    const auto& b = a.left.block(k);
    const Index r0 = a.left.row_offset(k), c0 = a.left.col_offset(k);
    for (Index c = 0; c < b.cols(); ++c) axpy(x[static_cast<std::size_t>(c0 + c)], b.col(c), y.data() + r0, b.rows());
  }
  dense_part(a.right, a.left.cols());
  return y;
}

/// g = J^T v.
template <RealScalar Scalar>
std::vector<Scalar> jacobian_transpose_multiply(const Jacobian<Scalar>& j, std::span<const Scalar> v) {
  if (static_cast<Index>(v.size()) != jacobian_rows(j)) {
    throw DimensionError("jacobian_transpose_multiply: v has " + std::to_string(v.size()) + " entries, J has " +
                         std::to_string(jacobian_rows(j)) + " rows");
  }
  std::vector<Scalar> g(static_cast<std::size_t>(jacobian_cols(j)), Scalar(0));
  const auto dense_part = [&](const DenseMatrix<Scalar>& a, Index g0) {
    for (Index c = 0; c < a.cols(); ++c) g[static_cast<std::size_t>(g0 + c)] = dot(a.col(c), v.data(), a.rows());
  };
  if (const auto* d = std::get_if<DenseMatrix<Scalar>>(&j)) {
    dense_part(*d, 0);
    return g;
  }
  const auto& a = std::get<BlockAngularMatrix<Scalar>>(j);
  detail::check_angular(a);
  for (Index k = 0; k < a.left.num_blocks(); ++k) {
    const auto& b = a.left.block(k);
    const Index r0 = a.left.row_offset(k), c0 = a.left.col_offset(k);
    for (Index c = 0; c < b.cols(); ++c) g[static_cast<std::size_t>(c0 + c)] = dot(b.col(c), v.data() + r0, b.rows());
  }
  dense_part(a.right, a.left.cols());
  return g;
}

/// Euclidean norm of every column, i.e. diag(J^T J)^(1/2).
template <RealScalar Scalar>
std::vector<Scalar> jacobian_column_norms(const Jacobian<Scalar>& j) {
  std::vector<Scalar> out(static_cast<std::size_t>(jacobian_cols(j)), Scalar(0));
  const auto dense_part = [&](const DenseMatrix<Scalar>& a, Index o) {
    for (Index c = 0; c < a.cols(); ++c) out[static_cast<std::size_t>(o + c)] = norm2(a.col(c), a.rows());
  };
  if (const auto* d = std::get_if<DenseMatrix<Scalar>>(&j)) {
    dense_part(*d, 0);
    return out;
  }
  const auto& a = std::get<BlockAngularMatrix<Scalar>>(j);
  for (Index k = 0; k < a.left.num_blocks(); ++k) dense_part(a.left.block(k), a.left.col_offset(k));
  dense_part(a.right, a.left.cols());
  return out;
}

/// Residual vector f(x) and structured Jacobian J(x) of a problem with
/// n = num_residuals() and m = num_params().
template <RealScalar Scalar>
class LeastSquaresProblem {
 public:
  using scalar_type = Scalar;

  virtual ~LeastSquaresProblem() = default;
  virtual Index num_params() const = 0;
  virtual Index num_residuals() const = 0;
  virtual std::vector<Scalar> residuals(std::span<const Scalar> x) const = 0;
  virtual Jacobian<Scalar> jacobian(std::span<const Scalar> x) const = 0;
};

/// Half the squared norm, accumulated in double so that energies of f32
/// runs compare reliably. Throws DomainError naming the first non-finite entry.
template <RealScalar Scalar>
double half_squared_norm(std::span<const Scalar> f) {
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double v = static_cast<double>(f[i]);
    if (!std::isfinite(v)) throw DomainError("non-finite residual", static_cast<Index>(i));
    s += v * v;
  }
  return 0.5 * s;
}

/// Energy 0.5 * sum_i f_i(x)^2.
template <RealScalar Scalar>
double energy(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x) {
  if (static_cast<Index>(x.size()) != problem.num_params()) {
    throw DimensionError("energy: x has " + std::to_string(x.size()) + " entries, problem has " +
                         std::to_string(problem.num_params()) + " parameters");
  }
  const auto f = problem.residuals(x);
  return half_squared_norm<Scalar>(f);
}

/// Central finite-difference Jacobian, h_i = eps^(1/3) * (1 + |x_i|).
template <RealScalar Scalar>
DenseMatrix<Scalar> finite_difference_jacobian(const LeastSquaresProblem<Scalar>& problem, std::span<const Scalar> x) {
  const Index n = problem.num_residuals(), m = problem.num_params();
  DenseMatrix<Scalar> j(n, m);
  std::vector<Scalar> xp(x.begin(), x.end());
  const Scalar base = std::cbrt(machine_epsilon<Scalar>());
  for (Index c = 0; c < m; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const Scalar h = base * (Scalar(1) + std::abs(x[i]));
    xp[i] = x[i] + h;
    const auto fp = problem.residuals(xp);
    xp[i] = x[i] - h;
    const auto fm = problem.residuals(xp);
    xp[i] = x[i];
    const Scalar inv = Scalar(1) / (Scalar(2) * h);
    for (Index r = 0; r < n; ++r) j(r, c) = (fp[static_cast<std::size_t>(r)] - fm[static_cast<std::size_t>(r)]) * inv;
  }
  return j;
}

}  // namespace qrkit
