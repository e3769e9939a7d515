#pragma once

// Damped Gauss-Newton step solvers. Each computes
//
//   p = argmin ||J p - b||^2 + lambda ||D p||^2,   D = diag(d),
//
// i.e. the solution of (J^T J + lambda D^2) p = J^T b, for a fixed
// linearization (J, b) and any number of (lambda, d) trials.

#include <qrkit/lm/cholesky.hpp>
#include <qrkit/lm/config.hpp>
#include <qrkit/lm/problem.hpp>
#include <qrkit/qr/block_diagonal_qr.hpp>
#include <qrkit/qr/horzcat_qr.hpp>
#include <qrkit/qr/vertcat_qr.hpp>

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace qrkit {

template <RealScalar Scalar>
class StepSolver {
 public:
  using scalar_type = Scalar;

  virtual ~StepSolver() = default;
  /// Starts a new linearization; J and b stay fixed across solve() calls.
  virtual void set_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) = 0;
  /// Throws SingularMatrixError when the damped system is numerically singular.
  virtual std::vector<Scalar> solve(Scalar lambda, std::span<const Scalar> d) = 0;
};

namespace detail {

template <RealScalar Scalar>
void check_damping(std::span<const Scalar> d, Index m) {
  if (static_cast<Index>(d.size()) != m) {
    throw DimensionError("step solver: damping has " + std::to_string(d.size()) + " entries for " +
                         std::to_string(m) + " parameters");
  }
}

/// Stacked system of the form [[L1, R1], [L2, R2]] where the left part is
/// block diagonal, laid out so that every left block is followed by its own
/// damping rows and the right-part damping rows come last.
template <RealScalar Scalar>
struct AngularSystem {
  BlockDiagonalMatrix<Scalar> left;
  DenseMatrix<Scalar> right;
  std::vector<Scalar> rhs;
};

/// Row-permuted [J; sqrt(lambda) D] with right-hand side [b; 0]. Block k of
/// the left part becomes [A_k; sqrt(lambda) D_k]; the damping of the right
/// columns forms a trailing block with no left columns.
template <RealScalar Scalar>
AngularSystem<Scalar> augment(const BlockAngularMatrix<Scalar>& j, std::span<const Scalar> b, Scalar sqrt_lambda,
                              std::span<const Scalar> d) {
  const Index m1 = j.left.cols(), m2 = j.right.cols();
  const Index rows = j.rows() + m1 + m2;
  std::vector<DenseMatrix<Scalar>> blocks;
  blocks.reserve(static_cast<std::size_t>(j.left.num_blocks() + 1));
  DenseMatrix<Scalar> right(rows, m2);
  std::vector<Scalar> rhs(static_cast<std::size_t>(rows), Scalar(0));
  Index out = 0;
  for (Index k = 0; k < j.left.num_blocks(); ++k) {
    const auto& a = j.left.block(k);
    const Index nk = a.rows(), ck = a.cols(), r0 = j.left.row_offset(k), c0 = j.left.col_offset(k);
    DenseMatrix<Scalar> blk(nk + ck, ck);
    blk.set_block(0, 0, a.view());
    for (Index c = 0; c < ck; ++c) blk(nk + c, c) = sqrt_lambda * d[static_cast<std::size_t>(c0 + c)];
    blocks.push_back(std::move(blk));
    right.set_block(out, 0, j.right.view().block(r0, 0, nk, m2));
    for (Index i = 0; i < nk; ++i) rhs[static_cast<std::size_t>(out + i)] = b[static_cast<std::size_t>(r0 + i)];
    out += nk + ck;
  }
  if (m2 > 0) {
    blocks.emplace_back(m2, 0);
    for (Index c = 0; c < m2; ++c) right(out + c, c) = sqrt_lambda * d[static_cast<std::size_t>(m1 + c)];
  }
  return {BlockDiagonalMatrix<Scalar>(std::move(blocks)), std::move(right), std::move(rhs)};
}

template <RealScalar Scalar>
std::vector<Scalar> column_to_vector(const DenseMatrix<Scalar>& x) {
  return std::vector<Scalar>(x.col(0), x.col(0) + x.rows());
}

template <RealScalar Scalar>
void check_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) {
  if (static_cast<Index>(b.size()) != jacobian_rows(j)) {
    throw DimensionError("step solver: rhs has " + std::to_string(b.size()) + " entries, J has " +
                         std::to_string(jacobian_rows(j)) + " rows");
  }
}

}  // namespace detail

/// One structured QR of the row-permuted augmented system per trial:
/// horizontal concatenation of the block-diagonal left part and a dense
/// right part.
template <RealScalar Scalar>
class AugmentedQRStep final : public StepSolver<Scalar> {
 public:
  void set_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) override {
    detail::check_system(j, b);
    j_ = as_block_angular(j);
    b_.assign(b.begin(), b.end());
  }

  std::vector<Scalar> solve(Scalar lambda, std::span<const Scalar> d) override {
    detail::check_damping(d, j_.cols());
    auto sys = detail::augment<Scalar>(j_, b_, std::sqrt(lambda), d);
    HorzCatQR<BlockDiagonalQR<Scalar>, DenseQR<Scalar>> f;
    f.compute(sys.left, std::move(sys.right));
    return detail::column_to_vector(solve_least_squares(f, DenseMatrix<Scalar>::column(sys.rhs)));
  }

 private:
  BlockAngularMatrix<Scalar> j_;
  std::vector<Scalar> b_;
};

/// Block-diagonal QR of the augmented left part, then the normal equations
/// of the reduced dense right part by Cholesky.
template <RealScalar Scalar>
class QRCholeskyStep final : public StepSolver<Scalar> {
 public:
  void set_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) override {
    detail::check_system(j, b);
    j_ = as_block_angular(j);
    b_.assign(b.begin(), b.end());
  }

  std::vector<Scalar> solve(Scalar lambda, std::span<const Scalar> d) override {
    detail::check_damping(d, j_.cols());
    auto sys = detail::augment<Scalar>(j_, b_, std::sqrt(lambda), d);
    const Index m1 = j_.left.cols(), m2 = j_.right.cols();
    BlockDiagonalQR<Scalar> left;
    left.compute(sys.left);
    const Index rows = sys.right.rows();
    DenseMatrix<Scalar> work(rows, m2 + 1);
    work.set_block(0, 0, sys.right.view());
    std::copy(sys.rhs.begin(), sys.rhs.end(), work.col(m2));
    left.apply_qt(work.view());

    // Reduced problem min ||C p2 - c2|| on the rows below R1.
    const auto below = ConstMatrixView<Scalar>(work.view()).block(m1, 0, rows - m1, m2 + 1);
    DenseMatrix<Scalar> normal(m2, m2 + 1);
    gemm_tn_accumulate<Scalar>(below.block(0, 0, rows - m1, m2), below, normal.view());
    DenseMatrix<Scalar> l = normal.block(0, 0, m2, m2);
    std::vector<Scalar> p(static_cast<std::size_t>(m1 + m2));
    if (m2 > 0) {
      try {
        cholesky_inplace(l);
      } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(m1 + e.column());
      }
      DenseMatrix<Scalar> p2 = normal.block(0, m2, m2, 1);
      cholesky_solve_inplace(l, p2.view());
      std::copy(p2.col(0), p2.col(0) + m2, p.begin() + m1);
    }
    // R1 p1 = c1 - S p2.
    DenseMatrix<Scalar> x1(m1, 1);
    for (Index i = 0; i < m1; ++i) {
      Scalar s = work(i, m2);
      for (Index c = 0; c < m2; ++c) s -= work(i, c) * p[static_cast<std::size_t>(m1 + c)];
      x1(i, 0) = s;
    }
    left.solve_r(x1.view());
    std::copy(x1.col(0), x1.col(0) + m1, p.begin());
    return p;
  }

 private:
  BlockAngularMatrix<Scalar> j_;
  std::vector<Scalar> b_;
};

/// Normal equations (J^T J + lambda D^2) p = J^T b. The block-diagonal part
/// is eliminated block by block (Schur complement) and the reduced dense
/// system is solved by Cholesky. The products J^T J and J^T b are formed
/// once per linearization.
template <RealScalar Scalar>
class NormalEquationsStep final : public StepSolver<Scalar> {
 public:
  void set_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) override {
    detail::check_system(j, b);
    const auto a = as_block_angular(j);
    m1_ = a.left.cols();
    m2_ = a.right.cols();
    const Index nb = a.left.num_blocks();
    blocks_.assign(static_cast<std::size_t>(nb), Block{});
    for (Index k = 0; k < nb; ++k) {
      const auto& ak = a.left.block(k);
      const Index nk = ak.rows(), ck = ak.cols(), r0 = a.left.row_offset(k);
      auto& blk = blocks_[static_cast<std::size_t>(k)];
      blk.col_offset = a.left.col_offset(k);
      // [U0 | W | g1] = A_k^T [A_k | A2_k | b_k]
      DenseMatrix<Scalar> rhs(nk, ck + m2_ + 1);
      rhs.set_block(0, 0, ak.view());
      rhs.set_block(0, ck, a.right.view().block(r0, 0, nk, m2_));
      std::copy(b.begin() + r0, b.begin() + r0 + nk, rhs.col(ck + m2_));
      blk.gram = DenseMatrix<Scalar>(ck, ck + m2_ + 1);
      gemm_tn_accumulate<Scalar>(ak.view(), rhs.view(), blk.gram.view());
    }
    DenseMatrix<Scalar> rhs(a.rows(), m2_ + 1);
    rhs.set_block(0, 0, a.right.view());
    std::copy(b.begin(), b.end(), rhs.col(m2_));
    camera_gram_ = DenseMatrix<Scalar>(m2_, m2_ + 1);
    gemm_tn_accumulate<Scalar>(a.right.view(), rhs.view(), camera_gram_.view());
  }

  std::vector<Scalar> solve(Scalar lambda, std::span<const Scalar> d) override {
    detail::check_damping(d, m1_ + m2_);
    // Reduced system [V | r2] = [V0 + lambda D2^2 | g2] - sum_k W_k^T U_k^{-1} [W_k | g1_k].
    DenseMatrix<Scalar> reduced = camera_gram_;
    for (Index c = 0; c < m2_; ++c) {
      const Scalar dc = d[static_cast<std::size_t>(m1_ + c)];
      reduced(c, c) += lambda * dc * dc;
    }
    for (auto& blk : blocks_) {
      const Index ck = blk.gram.rows();
      DenseMatrix<Scalar> u = blk.gram.block(0, 0, ck, ck);
      for (Index c = 0; c < ck; ++c) {
        const Scalar dc = d[static_cast<std::size_t>(blk.col_offset + c)];
        u(c, c) += lambda * dc * dc;
      }
      try {
        cholesky_inplace(u);
      } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(blk.col_offset + e.column());
      }
      blk.solved = blk.gram.block(0, ck, ck, m2_ + 1);  // [W | g1]
      const DenseMatrix<Scalar> wg = blk.solved;
      cholesky_solve_inplace(u, blk.solved.view());
      // reduced -= W^T (U^{-1} [W | g1])
      DenseMatrix<Scalar> w = wg.block(0, 0, ck, m2_);
      DenseMatrix<Scalar> update(m2_, m2_ + 1);
      gemm_tn_accumulate<Scalar>(w.view(), blk.solved.view(), update.view());
      auto rv = reduced.values();
      const auto uv = update.values();
      for (std::size_t i = 0; i < rv.size(); ++i) rv[i] -= uv[i];
    }
    std::vector<Scalar> p(static_cast<std::size_t>(m1_ + m2_));
    if (m2_ > 0) {
      DenseMatrix<Scalar> l = reduced.block(0, 0, m2_, m2_);
      try {
        cholesky_inplace(l);
      } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(m1_ + e.column());
      }
      DenseMatrix<Scalar> p2 = reduced.block(0, m2_, m2_, 1);
      cholesky_solve_inplace(l, p2.view());
      std::copy(p2.col(0), p2.col(0) + m2_, p.begin() + m1_);
    }
    // p1_k = U_k^{-1} g1_k - U_k^{-1} W_k p2
    for (const auto& blk : blocks_) {
      const Index ck = blk.gram.rows();
      for (Index i = 0; i < ck; ++i) {
        Scalar s = blk.solved(i, m2_);
        for (Index c = 0; c < m2_; ++c) s -= blk.solved(i, c) * p[static_cast<std::size_t>(m1_ + c)];
        p[static_cast<std::size_t>(blk.col_offset + i)] = s;
      }
    }
    return p;
  }

 private:
  struct Block {
    Index col_offset = 0;
    DenseMatrix<Scalar> gram;    // [U0 | W | g1], c_k x (c_k + m2 + 1)
    DenseMatrix<Scalar> solved;  // U^{-1} [W | g1] of the latest trial
  };
  std::vector<Block> blocks_;
  DenseMatrix<Scalar> camera_gram_;  // [V0 | g2]
  Index m1_ = 0, m2_ = 0;
};

/// Two-step QR: J = Q R once per linearization, then for every trial the
/// QR of [R; sqrt(lambda) D] against [c; 0] with c = (Q^T b)[0:m).
///
/// For a block-angular J the stacked system keeps the block-angular shape
/// ([R1_k; sqrt(lambda) D_k] blocks next to the coupling rows) and is solved
/// by horizontal concatenation. For a dense J it is the vertical
/// concatenation of two triangular factors.
template <RealScalar Scalar>
class TwoStepQRStep final : public StepSolver<Scalar> {
 public:
  void set_system(const Jacobian<Scalar>& j, std::span<const Scalar> b) override {
    detail::check_system(j, b);
    if (jacobian_rows(j) < jacobian_cols(j)) {
      throw DimensionError("two-step QR: J is " + shape_string(jacobian_rows(j), jacobian_cols(j)) +
                           ", needs at least as many residuals as parameters");
    }
    const auto a = as_block_angular(j);
    m1_ = a.left.cols();
    m2_ = a.right.cols();
    base_.compute(a.left, a.right);
    auto qtb = q_transpose_apply(base_, DenseMatrix<Scalar>::column(b));
    c_.assign(qtb.col(0), qtb.col(0) + m1_ + m2_);
    r1_.clear();
    block_cols_.clear();
    for (Index k = 0; k < a.left.num_blocks(); ++k) {
      r1_.push_back(base_.left().block_factor(k).matrix_r());
      block_cols_.push_back(a.left.col_offset(k));
    }
    r2_ = base_.right().matrix_r();
    last_.reset();
    last_is_base_ = false;
  }

  std::vector<Scalar> solve(Scalar lambda, std::span<const Scalar> d) override {
    detail::check_damping(d, m1_ + m2_);
    if (lambda == Scalar(0)) {
      DenseMatrix<Scalar> x = DenseMatrix<Scalar>::column(c_);
      base_.solve_r(x.view());
      last_.reset();
      last_is_base_ = true;
      return detail::column_to_vector(x);
    }
    const Scalar s = std::sqrt(lambda);
    if (m1_ == 0) return solve_dense(s, d);

    const Index rows = 2 * (m1_ + m2_);
    std::vector<DenseMatrix<Scalar>> blocks;
    blocks.reserve(r1_.size() + 1);
    DenseMatrix<Scalar> right(rows, m2_);
    std::vector<Scalar> rhs(static_cast<std::size_t>(rows), Scalar(0));
    const auto& coupling = base_.top_right();
    Index out = 0;
    for (std::size_t k = 0; k < r1_.size(); ++k) {
      const auto& r = r1_[k];
      const Index ck = r.cols(), ek = r.rows(), c0 = block_cols_[k];
      DenseMatrix<Scalar> blk(ek + ck, ck);
      blk.set_block(0, 0, r.view());
      for (Index c = 0; c < ck; ++c) blk(ek + c, c) = s * d[static_cast<std::size_t>(c0 + c)];
      blocks.push_back(std::move(blk));
      right.set_block(out, 0, coupling.view().block(c0, 0, ek, m2_));
      for (Index i = 0; i < ek; ++i) rhs[static_cast<std::size_t>(out + i)] = c_[static_cast<std::size_t>(c0 + i)];
      out += ek + ck;
    }
    if (m2_ > 0) {
      blocks.emplace_back(r2_.rows() + m2_, 0);
      right.set_block(out, 0, r2_.view());
      for (Index i = 0; i < r2_.rows(); ++i) rhs[static_cast<std::size_t>(out + i)] = c_[static_cast<std::size_t>(m1_ + i)];
      out += r2_.rows();
      for (Index c = 0; c < m2_; ++c) right(out + c, c) = s * d[static_cast<std::size_t>(m1_ + c)];
      out += m2_;
    }
    HorzCatQR<BlockDiagonalQR<Scalar>, DenseQR<Scalar>> f;
    f.compute(BlockDiagonalMatrix<Scalar>(std::move(blocks)), right.block(0, 0, out, m2_));
    rhs.resize(static_cast<std::size_t>(out));
    auto x = solve_least_squares(f, DenseMatrix<Scalar>::column(rhs));
    last_ = AnyQR<Scalar>(std::move(f));
    last_is_base_ = false;
    return detail::column_to_vector(x);
  }

  /// ||R_lambda^{-T} (D^2 p / ||D p||)|| for the factor of the latest
  /// solve() call; the slope of ||D p(lambda)|| is -||D p|| times its square.
  Scalar slope_norm(std::span<const Scalar> p, std::span<const Scalar> d) const {
    if (!last_ && !last_is_base_) throw std::logic_error("two-step QR: slope_norm before solve");
    const Index m = m1_ + m2_;
    DenseMatrix<Scalar> z(m, 1);
    for (Index i = 0; i < m; ++i) z(i, 0) = d[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)];
    const Scalar dp = norm2(z.col(0), m);
    if (dp == Scalar(0)) return Scalar(0);
    for (Index i = 0; i < m; ++i) z(i, 0) = d[static_cast<std::size_t>(i)] * z(i, 0) / dp;
    if (last_is_base_) {
      base_.solve_rt(z.view());
    } else {
      last_->solve_rt(z.view(), default_singular_threshold(last_->r_max_abs()));
    }
    return norm2(z.col(0), m);
  }

 private:
  std::vector<Scalar> solve_dense(Scalar s, std::span<const Scalar> d) {
    const Index m = m2_;
    DenseMatrix<Scalar> damping(m, m);
    for (Index c = 0; c < m; ++c) damping(c, c) = s * d[static_cast<std::size_t>(c)];
    auto f = vertcat_qr(TriangularFactor<Scalar>(r2_), TriangularFactor<Scalar>(std::move(damping)));
    std::vector<Scalar> rhs(static_cast<std::size_t>(2 * m), Scalar(0));
    std::copy(c_.begin(), c_.end(), rhs.begin());
    auto x = solve_least_squares(f, DenseMatrix<Scalar>::column(rhs));
    last_ = AnyQR<Scalar>(std::move(f));
    last_is_base_ = false;
    return detail::column_to_vector(x);
  }

  HorzCatQR<BlockDiagonalQR<Scalar>, DenseQR<Scalar>> base_;
  std::vector<Scalar> c_;
  std::vector<DenseMatrix<Scalar>> r1_;
  std::vector<Index> block_cols_;
  DenseMatrix<Scalar> r2_;
  std::optional<AnyQR<Scalar>> last_;
  bool last_is_base_ = false;
  Index m1_ = 0, m2_ = 0;
};

template <RealScalar Scalar>
std::unique_ptr<StepSolver<Scalar>> make_step_solver(SolverKind kind) {
  switch (kind) {
    case SolverKind::qrkit: return std::make_unique<AugmentedQRStep<Scalar>>();
    case SolverKind::qrkit_cholesky: return std::make_unique<QRCholeskyStep<Scalar>>();
    case SolverKind::more_qr: return std::make_unique<TwoStepQRStep<Scalar>>();
    case SolverKind::cholesky: return std::make_unique<NormalEquationsStep<Scalar>>();
  }
  throw std::invalid_argument("unknown solver kind");
}

}  // namespace qrkit
