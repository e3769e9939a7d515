#pragma once

#include <qrkit/core/dense_matrix.hpp>

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

namespace qrkit {

template <RealScalar Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Coordinate-list matrix. Duplicates are kept as entered and summed whenever
/// the matrix is converted to another representation.
template <RealScalar Scalar>
class TripletMatrix {
 public:
  using value_type = Scalar;

  TripletMatrix() = default;
  TripletMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension " + shape_string(rows, cols));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  const std::vector<Triplet<Scalar>>& entries() const noexcept { return entries_; }
  Index nonzeros() const noexcept { return static_cast<Index>(entries_.size()); }

  void add(Index row, Index col, Scalar value) {
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_) {
      throw DimensionError("triplet (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                           shape_string(rows_, cols_));
    }
    entries_.push_back({row, col, value});
  }

  void reserve(std::size_t n) { entries_.reserve(n); }

  /// Sums duplicates and sorts column-major; drops nothing (explicit zeros stay).
  TripletMatrix compressed() const {
    std::vector<Triplet<Scalar>> sorted = entries_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.col, a.row) < std::tie(b.col, b.row);
    });
    TripletMatrix out(rows_, cols_);
    for (const auto& t : sorted) {
      if (!out.entries_.empty() && out.entries_.back().row == t.row && out.entries_.back().col == t.col) {
        out.entries_.back().value += t.value;
      } else {
        out.entries_.push_back(t);
      }
    }
    return out;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Triplet<Scalar>> entries_;
};

/// blkdiag(A_1, ..., A_K). Blocks tile the matrix: block k occupies rows
/// [row_offset(k), +rows_k) and cols [col_offset(k), +cols_k).
template <RealScalar Scalar>
class BlockDiagonalMatrix {
 public:
  using value_type = Scalar;

  BlockDiagonalMatrix() : row_offsets_{0}, col_offsets_{0} {}

  explicit BlockDiagonalMatrix(std::vector<DenseMatrix<Scalar>> blocks) : blocks_(std::move(blocks)) {
    row_offsets_.reserve(blocks_.size() + 1);
    col_offsets_.reserve(blocks_.size() + 1);
    row_offsets_.push_back(0);
    col_offsets_.push_back(0);
    for (const auto& b : blocks_) {
      row_offsets_.push_back(row_offsets_.back() + b.rows());
      col_offsets_.push_back(col_offsets_.back() + b.cols());
    }
  }

  Index rows() const noexcept { return row_offsets_.back(); }
  Index cols() const noexcept { return col_offsets_.back(); }
  Index num_blocks() const noexcept { return static_cast<Index>(blocks_.size()); }
  const DenseMatrix<Scalar>& block(Index k) const { return blocks_[static_cast<std::size_t>(k)]; }
  const std::vector<DenseMatrix<Scalar>>& blocks() const noexcept { return blocks_; }
  Index row_offset(Index k) const { return row_offsets_[static_cast<std::size_t>(k)]; }
  Index col_offset(Index k) const { return col_offsets_[static_cast<std::size_t>(k)]; }

 private:
  std::vector<DenseMatrix<Scalar>> blocks_;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_offsets_;
};

/// Chain of dense blocks where consecutive blocks share `overlap(k)` columns:
///   col_offset(k+1) = col_offset(k) + cols_k - overlap(k),  0 <= overlap(k) <= min(cols_k, cols_{k+1}).
/// Row ranges are disjoint and increasing; rows not covered by any block are zero.
template <RealScalar Scalar>
class BandedBlockMatrix {
 public:
  using value_type = Scalar;

  BandedBlockMatrix() = default;

  /// Blocks stacked contiguously in rows, starting at row 0.
  BandedBlockMatrix(std::vector<DenseMatrix<Scalar>> blocks, std::vector<Index> overlaps)
      : BandedBlockMatrix(std::move(blocks), std::move(overlaps), {}, -1) {}

  /// Explicit row offsets; `total_rows` < 0 means "end of the last block".
  BandedBlockMatrix(std::vector<DenseMatrix<Scalar>> blocks, std::vector<Index> overlaps,
                    std::vector<Index> row_offsets, Index total_rows)
      : blocks_(std::move(blocks)), overlaps_(std::move(overlaps)), row_offsets_(std::move(row_offsets)) {
    const std::size_t k = blocks_.size();
    if (overlaps_.size() + 1 != k && !(k == 0 && overlaps_.empty())) {
      throw StructureError("banded matrix: expected " + std::to_string(k == 0 ? 0 : k - 1) +
                           " overlaps, got " + std::to_string(overlaps_.size()));
    }
    if (row_offsets_.empty()) {
      Index r = 0;
      for (const auto& b : blocks_) {
        row_offsets_.push_back(r);
        r += b.rows();
      }
    }
    if (row_offsets_.size() != k) throw StructureError("banded matrix: row offset count mismatch");
    col_offsets_.assign(k, 0);
    Index row_end = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (row_offsets_[i] < row_end) {
        throw StructureError("banded matrix: block " + std::to_string(i) + " rows overlap the previous block");
      }
      row_end = row_offsets_[i] + blocks_[i].rows();
      if (i + 1 < k) {
        const Index r = overlaps_[i];
        if (r < 0 || r > std::min(blocks_[i].cols(), blocks_[i + 1].cols())) {
          throw StructureError("banded matrix: overlap " + std::to_string(r) + " at block " + std::to_string(i) +
                               " exceeds min(" + std::to_string(blocks_[i].cols()) + ", " +
                               std::to_string(blocks_[i + 1].cols()) + ")");
        }
        col_offsets_[i + 1] = col_offsets_[i] + blocks_[i].cols() - r;
      }
    }
    cols_ = 0;
    for (std::size_t i = 0; i < k; ++i) cols_ = std::max(cols_, col_offsets_[i] + blocks_[i].cols());
    rows_ = total_rows < 0 ? row_end : total_rows;
    if (rows_ < row_end) throw StructureError("banded matrix: total rows smaller than block extent");
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index num_blocks() const noexcept { return static_cast<Index>(blocks_.size()); }
  const DenseMatrix<Scalar>& block(Index k) const { return blocks_[static_cast<std::size_t>(k)]; }
  Index row_offset(Index k) const { return row_offsets_[static_cast<std::size_t>(k)]; }
  Index col_offset(Index k) const { return col_offsets_[static_cast<std::size_t>(k)]; }
  Index overlap(Index k) const {
    return k + 1 < num_blocks() ? overlaps_[static_cast<std::size_t>(k)] : 0;
  }

 private:
  std::vector<DenseMatrix<Scalar>> blocks_;
  std::vector<Index> overlaps_;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_offsets_;
  Index rows_ = 0;
  Index cols_ = 0;
};

/// [left | right] with a block-diagonal left part and a dense right part
/// (the "block angular" Jacobian shape of latent-variable problems).
template <RealScalar Scalar>
struct BlockAngularMatrix {
  BlockDiagonalMatrix<Scalar> left;
  DenseMatrix<Scalar> right;

  Index rows() const noexcept { return left.rows(); }
  Index cols() const noexcept { return left.cols() + right.cols(); }
};

// ---- densification ---------------------------------------------------------

template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const DenseMatrix<Scalar>& a) {
  return a;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const TripletMatrix<Scalar>& a) {
  DenseMatrix<Scalar> d(a.rows(), a.cols());
  for (const auto& t : a.entries()) d(t.row, t.col) += t.value;
  return d;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const BlockDiagonalMatrix<Scalar>& a) {
  DenseMatrix<Scalar> d(a.rows(), a.cols());
  for (Index k = 0; k < a.num_blocks(); ++k) d.set_block(a.row_offset(k), a.col_offset(k), a.block(k).view());
  return d;
}

/// Overlapping columns of consecutive blocks live on disjoint rows, so
/// placement never collides.
template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const BandedBlockMatrix<Scalar>& a) {
  DenseMatrix<Scalar> d(a.rows(), a.cols());
  for (Index k = 0; k < a.num_blocks(); ++k) d.set_block(a.row_offset(k), a.col_offset(k), a.block(k).view());
  return d;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> to_dense(const BlockAngularMatrix<Scalar>& a) {
  if (a.left.rows() != a.right.rows()) {
    throw DimensionError("block angular: left has " + std::to_string(a.left.rows()) + " rows, right has " +
                         std::to_string(a.right.rows()));
  }
  DenseMatrix<Scalar> d(a.rows(), a.cols());
  for (Index k = 0; k < a.left.num_blocks(); ++k) {
    d.set_block(a.left.row_offset(k), a.left.col_offset(k), a.left.block(k).view());
  }
  d.set_block(0, a.left.cols(), a.right.view());
  return d;
}

// ---- triplet conversion ----------------------------------------------------

template <RealScalar Scalar>
TripletMatrix<Scalar> to_triplets(const DenseMatrix<Scalar>& a, bool keep_zeros = false) {
  TripletMatrix<Scalar> t(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (keep_zeros || a(i, j) != Scalar(0)) t.add(i, j, a(i, j));
  return t;
}

template <RealScalar Scalar>
TripletMatrix<Scalar> to_triplets(const BlockDiagonalMatrix<Scalar>& a) {
  TripletMatrix<Scalar> t(a.rows(), a.cols());
  for (Index k = 0; k < a.num_blocks(); ++k) {
    const auto& b = a.block(k);
    for (Index j = 0; j < b.cols(); ++j)
      for (Index i = 0; i < b.rows(); ++i)
        if (b(i, j) != Scalar(0)) t.add(a.row_offset(k) + i, a.col_offset(k) + j, b(i, j));
  }
  return t;
}

template <RealScalar Scalar>
TripletMatrix<Scalar> to_triplets(const BandedBlockMatrix<Scalar>& a) {
  TripletMatrix<Scalar> t(a.rows(), a.cols());
  for (Index k = 0; k < a.num_blocks(); ++k) {
    const auto& b = a.block(k);
    for (Index j = 0; j < b.cols(); ++j)
      for (Index i = 0; i < b.rows(); ++i)
        if (b(i, j) != Scalar(0)) t.add(a.row_offset(k) + i, a.col_offset(k) + j, b(i, j));
  }
  return t;
}

}  // namespace qrkit
