#pragma once

#include <qrkit/core/errors.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <initializer_list>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

namespace qrkit {

template <class T>
concept RealScalar = std::same_as<T, float> || std::same_as<T, double>;

template <RealScalar Scalar>
Scalar machine_epsilon() {
  return std::numeric_limits<Scalar>::epsilon();
}

/// Non-owning column-major view with leading dimension `ld`.
template <class Scalar>
struct MatrixView {
  Scalar* ptr = nullptr;
  Index rows = 0;
  Index cols = 0;
  Index ld = 0;

  Scalar& operator()(Index i, Index j) const { return ptr[i + j * ld]; }
  Scalar* col(Index j) const { return ptr + j * ld; }

  MatrixView block(Index r0, Index c0, Index nr, Index nc) const {
    assert(r0 >= 0 && c0 >= 0 && r0 + nr <= rows && c0 + nc <= cols);
    return {ptr + r0 + c0 * ld, nr, nc, ld};
  }
  MatrixView middle_rows(Index r0, Index nr) const { return block(r0, 0, nr, cols); }
};

template <class Scalar>
struct ConstMatrixView {
  const Scalar* ptr = nullptr;
  Index rows = 0;
  Index cols = 0;
  Index ld = 0;

  ConstMatrixView() = default;
  ConstMatrixView(const Scalar* p, Index r, Index c, Index l) : ptr(p), rows(r), cols(c), ld(l) {}
  ConstMatrixView(MatrixView<Scalar> v) : ptr(v.ptr), rows(v.rows), cols(v.cols), ld(v.ld) {}

  const Scalar& operator()(Index i, Index j) const { return ptr[i + j * ld]; }
  const Scalar* col(Index j) const { return ptr + j * ld; }

  ConstMatrixView block(Index r0, Index c0, Index nr, Index nc) const {
    assert(r0 >= 0 && c0 >= 0 && r0 + nr <= rows && c0 + nc <= cols);
    return {ptr + r0 + c0 * ld, nr, nc, ld};
  }
  ConstMatrixView middle_rows(Index r0, Index nr) const { return block(r0, 0, nr, cols); }
};

/// Parameter type that does not take part in deduction, so a MatrixView
/// argument converts to a const view.
template <class Scalar>
using ConstViewArg = std::type_identity_t<ConstMatrixView<Scalar>>;

/// Owning dense matrix, column-major.
template <RealScalar Scalar>
class DenseMatrix {
 public:
  using value_type = Scalar;

  DenseMatrix() = default;

  DenseMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension " + shape_string(rows, cols));
    data_.assign(static_cast<std::size_t>(rows * cols), Scalar(0));
  }

  DenseMatrix(Index rows, Index cols, std::vector<Scalar> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension " + shape_string(rows, cols));
    if (static_cast<Index>(data_.size()) != rows * cols) {
      throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(rows, cols));
    }
  }

  /// Row-major literal, for tests and small fixtures: {{1, 2}, {3, 4}}.
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
    const Index nr = static_cast<Index>(rows.size());
    const Index nc = nr == 0 ? 0 : static_cast<Index>(rows.begin()->size());
    DenseMatrix m(nr, nc);
    Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != nc) throw DimensionError("ragged row literal");
      Index j = 0;
      for (Scalar v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static DenseMatrix identity(Index n) {
    DenseMatrix m(n, n);
    for (Index i = 0; i < n; ++i) m(i, i) = Scalar(1);
    return m;
  }

  static DenseMatrix column(std::span<const Scalar> v) {
    return DenseMatrix(static_cast<Index>(v.size()), 1, std::vector<Scalar>(v.begin(), v.end()));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index size() const noexcept { return rows_ * cols_; }
  bool empty() const noexcept { return size() == 0; }

  Scalar& operator()(Index i, Index j) {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i + j * rows_)];
  }
  const Scalar& operator()(Index i, Index j) const {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i + j * rows_)];
  }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  Scalar* col(Index j) noexcept { return data_.data() + j * rows_; }
  const Scalar* col(Index j) const noexcept { return data_.data() + j * rows_; }

  std::span<Scalar> values() noexcept { return data_; }
  std::span<const Scalar> values() const noexcept { return data_; }

  MatrixView<Scalar> view() noexcept { return {data_.data(), rows_, cols_, std::max<Index>(rows_, 1)}; }
  ConstMatrixView<Scalar> view() const noexcept {
    return {data_.data(), rows_, cols_, std::max<Index>(rows_, 1)};
  }

  DenseMatrix block(Index r0, Index c0, Index nr, Index nc) const {
    if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > rows_ || c0 + nc > cols_) {
      throw DimensionError("block " + shape_string(nr, nc) + " at (" + std::to_string(r0) + "," +
                           std::to_string(c0) + ") outside " + shape_string(rows_, cols_));
    }
    DenseMatrix out(nr, nc);
    for (Index j = 0; j < nc; ++j) std::copy_n(col(c0 + j) + r0, nr, out.col(j));
    return out;
  }

  void set_block(Index r0, Index c0, ConstMatrixView<Scalar> src) {
    if (r0 < 0 || c0 < 0 || r0 + src.rows > rows_ || c0 + src.cols > cols_) {
      throw DimensionError("set_block of " + shape_string(src.rows, src.cols) + " outside " +
                           shape_string(rows_, cols_));
    }
    for (Index j = 0; j < src.cols; ++j) std::copy_n(src.col(j), src.rows, col(c0 + j) + r0);
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (Index j = 0; j < cols_; ++j)
      for (Index i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  template <RealScalar Other>
  DenseMatrix<Other> cast() const {
    std::vector<Other> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](Scalar v) { return static_cast<Other>(v); });
    return DenseMatrix<Other>(rows_, cols_, std::move(out));
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Scalar> data_;
};

template <class Scalar>
DenseMatrix<std::remove_const_t<Scalar>> to_owned(ConstMatrixView<Scalar> v) {
  DenseMatrix<std::remove_const_t<Scalar>> out(v.rows, v.cols);
  for (Index j = 0; j < v.cols; ++j) std::copy_n(v.col(j), v.rows, out.col(j));
  return out;
}

// ---- level-1 helpers -------------------------------------------------------

template <class Scalar>
Scalar dot(const Scalar* x, const Scalar* y, Index n) {
  Scalar s(0);
  for (Index i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class Scalar>
void axpy(Scalar alpha, const Scalar* x, Scalar* y, Index n) {
  for (Index i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// Overflow-safe 2-norm (scaled sum of squares).
template <class Scalar>
Scalar norm2(const Scalar* x, Index n) {
  Scalar scale(0);
  for (Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(x[i]));
  if (scale == Scalar(0) || !std::isfinite(scale)) return scale;
  Scalar ssq(0);
  // 1/scale overflows for subnormal scale, so divide instead in that case.
  if (scale < std::numeric_limits<Scalar>::min()) {
    for (Index i = 0; i < n; ++i) {
      const Scalar t = x[i] / scale;
      ssq += t * t;
    }
    return scale * std::sqrt(ssq);
  }
  const Scalar inv = Scalar(1) / scale;
  for (Index i = 0; i < n; ++i) {
    const Scalar t = x[i] * inv;
    ssq += t * t;
  }
  return scale * std::sqrt(ssq);
}

template <class Scalar>
Scalar norm2(std::span<const Scalar> x) {
  return norm2(x.data(), static_cast<Index>(x.size()));
}

template <class Scalar>
Scalar norm_inf(std::span<const Scalar> x) {
  Scalar m(0);
  for (Scalar v : x) m = std::max(m, std::abs(v));
  return m;
}

template <class Scalar>
Scalar frobenius_norm(ConstMatrixView<Scalar> a) {
  // Column norms combined pairwise-safe through norm2 on the per-column results.
  std::vector<Scalar> colnorms(static_cast<std::size_t>(a.cols));
  for (Index j = 0; j < a.cols; ++j) colnorms[static_cast<std::size_t>(j)] = norm2(a.col(j), a.rows);
  return norm2(colnorms.data(), a.cols);
}

template <RealScalar Scalar>
Scalar frobenius_norm(const DenseMatrix<Scalar>& a) {
  return frobenius_norm(a.view());
}

template <class Scalar>
Scalar max_abs(ConstMatrixView<Scalar> a) {
  Scalar m(0);
  for (Index j = 0; j < a.cols; ++j)
    for (Index i = 0; i < a.rows; ++i) m = std::max(m, std::abs(a(i, j)));
  return m;
}

template <RealScalar Scalar>
Scalar max_abs(const DenseMatrix<Scalar>& a) {
  return max_abs(a.view());
}

// ---- products --------------------------------------------------------------

/// C += A * B on views (no allocation).
template <class Scalar>
void gemm_accumulate(ConstViewArg<Scalar> a, ConstViewArg<Scalar> b, MatrixView<Scalar> c) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  for (Index j = 0; j < b.cols; ++j) {
    Scalar* cj = c.col(j);
    for (Index k = 0; k < a.cols; ++k) {
      const Scalar bkj = b(k, j);
      if (bkj == Scalar(0)) continue;
      axpy(bkj, a.col(k), cj, a.rows);
    }
  }
}

/// C += A^T * B on views.
template <class Scalar>
void gemm_tn_accumulate(ConstViewArg<Scalar> a, ConstViewArg<Scalar> b, MatrixView<Scalar> c) {
  assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
  for (Index j = 0; j < b.cols; ++j)
    for (Index i = 0; i < a.cols; ++i) c(i, j) += dot(a.col(i), b.col(j), a.rows);
}

template <RealScalar Scalar>
DenseMatrix<Scalar> matmul(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.rows(), a.cols()) + " by " +
                         shape_string(b.rows(), b.cols()));
  }
  DenseMatrix<Scalar> c(a.rows(), b.cols());
  if (a.rows() > 0 && a.cols() > 0 && b.cols() > 0) gemm_accumulate(a.view(), b.view(), c.view());
  return c;
}

/// A^T * B without forming the transpose.
template <RealScalar Scalar>
DenseMatrix<Scalar> matmul_tn(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + shape_string(a.rows(), a.cols()) +
                         " by " + shape_string(b.rows(), b.cols()));
  }
  DenseMatrix<Scalar> c(a.cols(), b.cols());
  if (a.rows() > 0) gemm_tn_accumulate(a.view(), b.view(), c.view());
  return c;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> operator-(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("subtract: " + shape_string(a.rows(), a.cols()) + " vs " +
                         shape_string(b.rows(), b.cols()));
  }
  DenseMatrix<Scalar> c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
  return c;
}

}  // namespace qrkit
