#pragma once

// Dense Cholesky A = L L^T for the normal-equations baselines.

#include <qrkit/core/dense_matrix.hpp>

#include <cmath>
#include <string>

namespace qrkit {

/// Overwrites the lower triangle of the symmetric matrix `a` with L. Only
/// the lower triangle is read. Throws SingularMatrixError at the first
/// pivot that is not positive.
template <RealScalar Scalar>
void cholesky_inplace(DenseMatrix<Scalar>& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is " + shape_string(a.rows(), a.cols()));
  const Index n = a.rows();
  for (Index j = 0; j < n; ++j) {
    Scalar d = a(j, j);
    for (Index k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > Scalar(0)) || !std::isfinite(d)) throw SingularMatrixError(j);
    const Scalar ljj = std::sqrt(d);
    a(j, j) = ljj;
    const Scalar inv = Scalar(1) / ljj;
    for (Index i = j + 1; i < n; ++i) {
      Scalar s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s * inv;
    }
  }
}

/// Solves L L^T X = B in place, L from cholesky_inplace.
template <RealScalar Scalar>
void cholesky_solve_inplace(const DenseMatrix<Scalar>& l, MatrixView<Scalar> b) {
  if (b.rows != l.rows()) {
    throw DimensionError("cholesky_solve: rhs has " + std::to_string(b.rows) + " rows, factor is " +
                         shape_string(l.rows(), l.cols()));
  }
  const Index n = l.rows();
  for (Index c = 0; c < b.cols; ++c) {
    Scalar* x = b.col(c);
    for (Index i = 0; i < n; ++i) {
      Scalar s = x[i];
      for (Index k = 0; k < i; ++k) s -= l(i, k) * x[k];
      x[i] = s / l(i, i);
    }
    for (Index i = n - 1; i >= 0; --i) {
      Scalar s = x[i];
      for (Index k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
      x[i] = s / l(i, i);
    }
  }
}

}  // namespace qrkit
