#pragma once

#include <qrkit/core/parallel.hpp>
#include <qrkit/core/permutation.hpp>
#include <qrkit/qr/qr_solver.hpp>

#include <string>
#include <vector>

namespace qrkit {

/// QR of blkdiag(A_1, ..., A_K): Q = blkdiag(Q_k), R = blkdiag(R_k).
///
/// Blocks are factored independently (in parallel when max_threads() > 1).
/// The Q^T output is reordered so that the economy rows of all blocks come
/// first, in column order, followed by every block's Q_perp rows.
template <RealScalar Scalar, QRFactorization BlockSolver = DenseQR<Scalar>>
class BlockDiagonalQR {
 public:
  using scalar_type = Scalar;
  using block_solver_type = BlockSolver;

  BlockDiagonalQR() = default;

  BlockDiagonalQR& compute(const BlockDiagonalMatrix<Scalar>& a) {
    const Index k = a.num_blocks();
    for (Index b = 0; b < k; ++b) {
      if (a.block(b).rows() < a.block(b).cols()) {
        throw StructureError("block_diagonal_qr: block " + std::to_string(b) + " is landscape (" +
                             shape_string(a.block(b).rows(), a.block(b).cols()) + ")");
      }
    }
    rows_ = a.rows();
    cols_ = a.cols();
    row_offsets_.resize(static_cast<std::size_t>(k));
    col_offsets_.resize(static_cast<std::size_t>(k));
    for (Index b = 0; b < k; ++b) {
      row_offsets_[static_cast<std::size_t>(b)] = a.row_offset(b);
      col_offsets_[static_cast<std::size_t>(b)] = a.col_offset(b);
    }
    factors_.assign(static_cast<std::size_t>(k), BlockSolver{});
    parallel_for(k, [&](Index b) { factors_[static_cast<std::size_t>(b)].compute(a.block(b)); });

    r_max_ = Scalar(0);
    for (const auto& f : factors_) r_max_ = std::max(r_max_, static_cast<Scalar>(f.r_max_abs()));
    diag_.assign(static_cast<std::size_t>(cols_), Scalar(0));
    for (Index b = 0; b < k; ++b) {
      const auto r = factors_[static_cast<std::size_t>(b)].r_triplets();
      for (const auto& t : r.entries())
        if (t.row == t.col) diag_[static_cast<std::size_t>(a.col_offset(b) + t.col)] += t.value;
    }

    // Economy rows of block b land at its column offset; its Q_perp rows
    // follow all economy rows, packed in block order.
    std::vector<Index> map(static_cast<std::size_t>(rows_));
    for (Index b = 0; b < k; ++b) {
      const Index ro = row_offsets_[static_cast<std::size_t>(b)];
      const Index co = col_offsets_[static_cast<std::size_t>(b)];
      const Index nb = a.block(b).rows();
      const Index mb = a.block(b).cols();
      for (Index i = 0; i < mb; ++i) map[static_cast<std::size_t>(ro + i)] = co + i;
      for (Index i = mb; i < nb; ++i) map[static_cast<std::size_t>(ro + i)] = cols_ + (ro - co) + (i - mb);
    }
    output_order_ = Permutation(std::move(map));
    input_order_ = output_order_.inverse();
    return *this;
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index economy_rows() const noexcept { return cols_; }
  Index num_blocks() const noexcept { return static_cast<Index>(factors_.size()); }
  const BlockSolver& block_factor(Index b) const { return factors_[static_cast<std::size_t>(b)]; }
  Index row_offset(Index b) const { return row_offsets_[static_cast<std::size_t>(b)]; }
  Index col_offset(Index b) const { return col_offsets_[static_cast<std::size_t>(b)]; }
  /// Where row i of the block-local Q^T output ends up in apply_qt's result.
  const Permutation& output_order() const noexcept { return output_order_; }

  Scalar r_max_abs() const noexcept { return r_max_; }

  void apply_qt(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    parallel_for(num_blocks(), [&](Index k) { factors_[static_cast<std::size_t>(k)].apply_qt(block_rows(b, k)); });
    permute_rows(output_order_, b);
  }

  void apply_q(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    permute_rows(input_order_, b);
    parallel_for(num_blocks(), [&](Index k) { factors_[static_cast<std::size_t>(k)].apply_q(block_rows(b, k)); });
  }

  void solve_r(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    check_diagonal(threshold);
    parallel_for(num_blocks(), [&](Index k) { factors_[static_cast<std::size_t>(k)].solve_r(block_cols(x, k), threshold); });
  }
  void solve_r(MatrixView<Scalar> x) const { solve_r(x, default_singular_threshold(r_max_)); }

  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    check_diagonal(threshold);
    parallel_for(num_blocks(), [&](Index k) { factors_[static_cast<std::size_t>(k)].solve_rt(block_cols(x, k), threshold); });
  }
  void solve_rt(MatrixView<Scalar> x) const { solve_rt(x, default_singular_threshold(r_max_)); }

  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    for (Index k = 0; k < num_blocks(); ++k) {
      const Index co = col_offsets_[static_cast<std::size_t>(k)];
      factors_[static_cast<std::size_t>(k)].append_r_triplets(out, row_offset + co, col_offset + co);
    }
  }

  TripletMatrix<Scalar> r_triplets() const {
    TripletMatrix<Scalar> t(cols_, cols_);
    append_r_triplets(t, 0, 0);
    return t;
  }

  /// R = blkdiag(R_k) with the block layout preserved.
  BlockDiagonalMatrix<Scalar> matrix_r() const {
    std::vector<DenseMatrix<Scalar>> blocks;
    blocks.reserve(factors_.size());
    for (const auto& f : factors_) blocks.push_back(to_dense(f.r_triplets()));
    return BlockDiagonalMatrix<Scalar>(std::move(blocks));
  }

  Index q_storage_scalars() const {
    Index s = 0;
    for (const auto& f : factors_) s += f.q_storage_scalars();
    return s;
  }

 private:
  void check_rows(Index r) const {
    if (r != rows_) {
      throw DimensionError("block_diagonal_qr: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows_));
    }
  }

  void check_rhs(Index r) const {
    if (r != cols_) {
      throw DimensionError("block_diagonal_qr: triangular solve rhs has " + std::to_string(r) + " rows, R is " +
                           shape_string(cols_, cols_));
    }
  }

  // Report the smallest singular column index globally, not per block.
  void check_diagonal(Scalar threshold) const {
    for (Index j = 0; j < cols_; ++j) {
      if (!(std::abs(diag_[static_cast<std::size_t>(j)]) > threshold)) throw SingularMatrixError(j);
    }
  }

  MatrixView<Scalar> block_rows(MatrixView<Scalar> b, Index k) const {
    const auto& f = factors_[static_cast<std::size_t>(k)];
    return b.block(row_offsets_[static_cast<std::size_t>(k)], 0, f.rows(), b.cols);
  }

  MatrixView<Scalar> block_cols(MatrixView<Scalar> x, Index k) const {
    const auto& f = factors_[static_cast<std::size_t>(k)];
    return x.block(col_offsets_[static_cast<std::size_t>(k)], 0, f.cols(), x.cols);
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<BlockSolver> factors_;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_offsets_;
  Permutation output_order_;
  Permutation input_order_;
  std::vector<Scalar> diag_;
  Scalar r_max_ = Scalar(0);
};

template <RealScalar Scalar>
BlockDiagonalQR<Scalar> block_diagonal_qr(const BlockDiagonalMatrix<Scalar>& a) {
  BlockDiagonalQR<Scalar> f;
  f.compute(a);
  return f;
}

}  // namespace qrkit
