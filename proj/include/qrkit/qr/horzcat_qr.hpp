#pragma once

#include <qrkit/qr/qr_solver.hpp>

#include <string>
#include <utility>
#include <vector>

namespace qrkit {

/// QR of [A1 | A2] from a factorization of A1:
///
///   Q1^T [A1 A2] = [[R1, S], [0, C]],   S = (Q1^T A2)[0:m1),  C = Q_perp1^T A2
///   C = Q' R'  (by RightSolver)
///
/// so R = [[R1, S], [0, R']] and Q = Q1 diag(I, Q').
template <QRFactorization LeftSolver, QRFactorization RightSolver = DenseQR<typename LeftSolver::scalar_type>>
  requires std::same_as<typename LeftSolver::scalar_type, typename RightSolver::scalar_type>
class HorzCatQR {
 public:
  using scalar_type = typename LeftSolver::scalar_type;
  using Scalar = scalar_type;

  HorzCatQR() = default;
  HorzCatQR(LeftSolver left, RightSolver right) : left_(std::move(left)), right_(std::move(right)) {}

  /// Factors A1 with the left solver, then finishes with A2.
  template <class LeftInput>
  HorzCatQR& compute(const LeftInput& a1, DenseMatrix<Scalar> a2) {
    left_.compute(a1);
    return finish(std::move(a2));
  }

  /// Uses an already computed factorization of A1.
  HorzCatQR& compute_with_left(LeftSolver left, DenseMatrix<Scalar> a2) {
    left_ = std::move(left);
    return finish(std::move(a2));
  }

  Index rows() const noexcept { return left_.rows(); }
  Index cols() const noexcept { return m1_ + m2_; }
  Index economy_rows() const noexcept { return m1_ + m2_; }
  Index left_cols() const noexcept { return m1_; }
  Index right_cols() const noexcept { return m2_; }

  const LeftSolver& left() const noexcept { return left_; }
  const RightSolver& right() const noexcept { return right_; }
  /// S = (Q1^T A2)[0:m1), the coupling block of R.
  const DenseMatrix<Scalar>& top_right() const noexcept { return top_right_; }

  Scalar r_max_abs() const noexcept { return r_max_; }

  void apply_qt(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    left_.apply_qt(b);
    right_.apply_qt(b.middle_rows(m1_, b.rows - m1_));
  }

  void apply_q(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    right_.apply_q(b.middle_rows(m1_, b.rows - m1_));
    left_.apply_q(b);
  }

  void solve_r(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    auto x1 = x.middle_rows(0, m1_);
    auto x2 = x.middle_rows(m1_, m2_);
    try {
      right_.solve_r(x2, threshold);
    } catch (const SingularMatrixError& e) {
      // Prefer the smallest singular column of the whole R.
      if (m1_ > 0) {
        std::vector<Scalar> zero(static_cast<std::size_t>(m1_), Scalar(0));
        left_.solve_r(MatrixView<Scalar>{zero.data(), m1_, 1, m1_}, threshold);
      }
      throw SingularMatrixError(m1_ + e.column());
    }
    // x1 -= S x2
    for (Index c = 0; c < x.cols; ++c) {
      for (Index j = 0; j < m2_; ++j) {
        const Scalar v = x2(j, c);
        if (v != Scalar(0)) axpy(-v, top_right_.col(j), x1.col(c), m1_);
      }
    }
    left_.solve_r(x1, threshold);
  }
  void solve_r(MatrixView<Scalar> x) const { solve_r(x, default_singular_threshold(r_max_)); }

  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    auto x1 = x.middle_rows(0, m1_);
    auto x2 = x.middle_rows(m1_, m2_);
    left_.solve_rt(x1, threshold);
    // x2 -= S^T z1
    for (Index c = 0; c < x.cols; ++c) {
      for (Index j = 0; j < m2_; ++j) x2(j, c) -= dot(top_right_.col(j), x1.col(c), m1_);
    }
    try {
      right_.solve_rt(x2, threshold);
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(m1_ + e.column());
    }
  }
  void solve_rt(MatrixView<Scalar> x) const { solve_rt(x, default_singular_threshold(r_max_)); }

  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    left_.append_r_triplets(out, row_offset, col_offset);
    for (Index j = 0; j < m2_; ++j)
      for (Index i = 0; i < m1_; ++i)
        if (top_right_(i, j) != Scalar(0)) out.add(row_offset + i, col_offset + m1_ + j, top_right_(i, j));
    right_.append_r_triplets(out, row_offset + m1_, col_offset + m1_);
  }

  TripletMatrix<Scalar> r_triplets() const {
    TripletMatrix<Scalar> t(economy_rows(), cols());
    append_r_triplets(t, 0, 0);
    return t;
  }

  Index q_storage_scalars() const { return left_.q_storage_scalars() + right_.q_storage_scalars(); }

 private:
  HorzCatQR& finish(DenseMatrix<Scalar> a2) {
    const Index n = left_.rows();
    m1_ = left_.cols();
    m2_ = a2.cols();
    if (a2.rows() != n) {
      throw DimensionError("horzcat_qr: A1 has " + std::to_string(n) + " rows, A2 is " +
                           shape_string(a2.rows(), a2.cols()));
    }
    if (left_.economy_rows() != m1_) {
      throw DimensionError("horzcat_qr: left factor of " + shape_string(n, m1_) + " is not portrait");
    }
    if (m1_ + m2_ > n) {
      throw DimensionError("horzcat_qr: [A1 A2] is landscape (" + shape_string(n, m1_ + m2_) + ")");
    }
    left_.apply_qt(a2.view());
    top_right_ = a2.block(0, 0, m1_, m2_);
    right_.compute(a2.block(m1_, 0, n - m1_, m2_));
    r_max_ = std::max({static_cast<Scalar>(left_.r_max_abs()), max_abs(top_right_),
                       static_cast<Scalar>(right_.r_max_abs())});
    return *this;
  }

  void check_rows(Index r) const {
    if (r != rows()) {
      throw DimensionError("horzcat_qr: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows()));
    }
  }

  void check_rhs(Index r) const {
    if (r != cols()) {
      throw DimensionError("horzcat_qr: triangular solve rhs has " + std::to_string(r) + " rows, R is " +
                           shape_string(cols(), cols()));
    }
  }

  LeftSolver left_;
  RightSolver right_;
  DenseMatrix<Scalar> top_right_;
  Index m1_ = 0;
  Index m2_ = 0;
  Scalar r_max_ = Scalar(0);
};

template <QRFactorization LeftSolver, class LeftInput>
HorzCatQR<LeftSolver> horzcat_qr(LeftSolver left, const LeftInput& a1,
                                 const DenseMatrix<typename LeftSolver::scalar_type>& a2) {
  HorzCatQR<LeftSolver> f(std::move(left), DenseQR<typename LeftSolver::scalar_type>{});
  f.compute(a1, a2);
  return f;
}

}  // namespace qrkit
