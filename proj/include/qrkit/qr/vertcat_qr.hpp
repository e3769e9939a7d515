#pragma once

// QR of [A1; A2] from factorizations of A1 and A2:
//
//   blkdiag(Q1, Q2)^T [A1; A2] = [R1; 0; R2; 0]
//
// The two R factors are stacked, row-interleaved by P so the stack becomes
// banded, and refactored with BlockBandedQR:  P [R1; R2] = Q3 R.

#include <qrkit/core/permutation.hpp>
#include <qrkit/qr/block_banded_qr.hpp>
#include <qrkit/qr/qr_solver.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace qrkit {

/// An already upper-trapezoidal matrix viewed as its own QR factor (Q = I).
/// Lets a known R, or a diagonal damping block, enter a vertcat directly.
template <RealScalar Scalar>
class TriangularFactor {
 public:
  using scalar_type = Scalar;

  TriangularFactor() = default;
  explicit TriangularFactor(DenseMatrix<Scalar> r) { compute(std::move(r)); }

  TriangularFactor& compute(DenseMatrix<Scalar> r) {
    for (Index j = 0; j < r.cols(); ++j)
      for (Index i = j + 1; i < r.rows(); ++i)
        if (r(i, j) != Scalar(0)) {
          throw StructureError("triangular factor: nonzero at (" + std::to_string(i) + "," + std::to_string(j) +
                               ") below the diagonal");
        }
    r_ = std::move(r);
    r_max_ = max_abs(r_);
    return *this;
  }

  Index rows() const noexcept { return r_.rows(); }
  Index cols() const noexcept { return r_.cols(); }
  Index economy_rows() const noexcept { return std::min(r_.rows(), r_.cols()); }
  const DenseMatrix<Scalar>& matrix_r() const noexcept { return r_; }
  Scalar r_max_abs() const noexcept { return r_max_; }

  void apply_qt(MatrixView<Scalar> b) const { check_rows(b.rows); }
  void apply_q(MatrixView<Scalar> b) const { check_rows(b.rows); }

  void solve_r(MatrixView<Scalar> x, Scalar threshold) const {
    check_square(x.rows);
    solve_upper_triangular_inplace(r_.view().block(0, 0, cols(), cols()), x, threshold);
  }
  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const {
    check_square(x.rows);
    solve_upper_triangular_transpose_inplace(r_.view().block(0, 0, cols(), cols()), x, threshold);
  }

  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    for (Index j = 0; j < cols(); ++j)
      for (Index i = 0; i <= std::min(j, economy_rows() - 1); ++i)
        if (r_(i, j) != Scalar(0)) out.add(row_offset + i, col_offset + j, r_(i, j));
  }

  TripletMatrix<Scalar> r_triplets() const {
    TripletMatrix<Scalar> t(economy_rows(), cols());
    append_r_triplets(t, 0, 0);
    return t;
  }

  Index q_storage_scalars() const noexcept { return 0; }

 private:
  void check_rows(Index r) const {
    if (r != rows()) {
      throw DimensionError("triangular factor: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows()));
    }
  }
  void check_square(Index rhs_rows) const {
    if (economy_rows() != cols() || rhs_rows != cols()) {
      throw DimensionError("triangular factor: solve needs square R and matching rhs; R is " +
                           shape_string(rows(), cols()) + ", rhs has " + std::to_string(rhs_rows) + " rows");
    }
  }

  DenseMatrix<Scalar> r_;
  Scalar r_max_ = Scalar(0);
};

/// Stable sort of rows by first nonzero column; all-zero rows go last.
/// Returns the permutation (source row -> position).
template <RealScalar Scalar>
Permutation first_column_interleave(const TripletMatrix<Scalar>& s) {
  std::vector<Index> first(static_cast<std::size_t>(s.rows()), s.cols());
  for (const auto& t : s.entries())
    if (t.value != Scalar(0)) first[static_cast<std::size_t>(t.row)] = std::min(first[static_cast<std::size_t>(t.row)], t.col);
  std::vector<Index> order(static_cast<std::size_t>(s.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return first[static_cast<std::size_t>(a)] < first[static_cast<std::size_t>(b)];
  });
  return Permutation::from_order(order);
}

/// Groups the rows of a matrix whose rows are sorted by first nonzero column
/// into a chain of overlapping dense blocks.
///
/// A block grows while rows start inside its column range. It is cut early
/// once the leading column has advanced by at least max(min_width, overlap
/// that the cut would leave), which keeps banded inputs in narrow steps but
/// does not fragment a dense triangle into many nearly full steps.
template <RealScalar Scalar>
BandedBlockMatrix<Scalar> discover_banded_blocks(const TripletMatrix<Scalar>& sorted, Index min_width) {
  const Index n = sorted.rows();
  const Index m = sorted.cols();
  std::vector<Index> first(static_cast<std::size_t>(n), m), last(static_cast<std::size_t>(n), -1);
  for (const auto& t : sorted.entries()) {
    if (t.value == Scalar(0)) continue;
    auto& f = first[static_cast<std::size_t>(t.row)];
    auto& l = last[static_cast<std::size_t>(t.row)];
    f = std::min(f, t.col);
    l = std::max(l, t.col);
  }
  Index nonzero_rows = 0;
  while (nonzero_rows < n && last[static_cast<std::size_t>(nonzero_rows)] >= 0) ++nonzero_rows;
  for (Index i = nonzero_rows; i < n; ++i) {
    if (last[static_cast<std::size_t>(i)] >= 0) {
      throw StructureError("banded discovery: rows are not sorted with zero rows last");
    }
  }

  struct Range {
    Index row0, row1, col0, col1;
  };
  std::vector<Range> ranges;
  for (Index i = 0; i < nonzero_rows; ++i) {
    const Index f = first[static_cast<std::size_t>(i)];
    const Index l = last[static_cast<std::size_t>(i)] + 1;
    if (!ranges.empty() && f < ranges.back().col0) throw StructureError("banded discovery: rows are not sorted");
    if (!ranges.empty()) {
      auto& cur = ranges.back();
      const bool inside = f < cur.col1;
      const bool advanced = f - cur.col0 >= std::max(min_width, cur.col1 - f);
      if (inside && !advanced) {
        cur.row1 = i + 1;
        cur.col1 = std::max(cur.col1, l);
        continue;
      }
    }
    ranges.push_back({i, i + 1, f, l});
  }

  // Make the column ranges tile [0, m) as a chain.
  if (ranges.empty()) {
    if (m > 0) ranges.push_back({0, 0, 0, m});
  } else {
    ranges.front().col0 = 0;
    for (std::size_t k = 1; k < ranges.size(); ++k) {
      ranges[k].col1 = std::max(ranges[k].col1, ranges[k - 1].col1);
      if (ranges[k].col0 > ranges[k - 1].col1) ranges[k - 1].col1 = ranges[k].col0;
    }
    ranges.back().col1 = m;
  }

  std::vector<DenseMatrix<Scalar>> blocks;
  std::vector<Index> overlaps, row_offsets;
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    const auto& r = ranges[k];
    blocks.emplace_back(r.row1 - r.row0, r.col1 - r.col0);
    row_offsets.push_back(r.row0);
    if (k + 1 < ranges.size()) overlaps.push_back(r.col1 - ranges[k + 1].col0);
  }
  std::vector<Index> block_of_row(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < ranges.size(); ++k)
    for (Index i = ranges[k].row0; i < ranges[k].row1; ++i) block_of_row[static_cast<std::size_t>(i)] = static_cast<Index>(k);
  for (const auto& t : sorted.entries()) {
    const Index k = block_of_row[static_cast<std::size_t>(t.row)];
    if (k < 0) continue;  // explicit zero in an all-zero row
    const auto& r = ranges[static_cast<std::size_t>(k)];
    blocks[static_cast<std::size_t>(k)](t.row - r.row0, t.col - r.col0) += t.value;
  }
  return BandedBlockMatrix<Scalar>(std::move(blocks), std::move(overlaps), std::move(row_offsets), n);
}

template <QRFactorization TopSolver, QRFactorization BottomSolver = TopSolver>
  requires std::same_as<typename TopSolver::scalar_type, typename BottomSolver::scalar_type>
class VertCatQR {
 public:
  using scalar_type = typename TopSolver::scalar_type;
  using Scalar = scalar_type;

  VertCatQR() = default;
  VertCatQR(TopSolver top, BottomSolver bottom) : top_(std::move(top)), bottom_(std::move(bottom)) {}

  template <class TopInput, class BottomInput>
  VertCatQR& compute(const TopInput& a1, const BottomInput& a2) {
    top_.compute(a1);
    bottom_.compute(a2);
    return finish();
  }

  /// Uses already computed factorizations of A1 and A2.
  VertCatQR& compute_with(TopSolver top, BottomSolver bottom) {
    top_ = std::move(top);
    bottom_ = std::move(bottom);
    return finish();
  }

  Index rows() const noexcept { return n1_ + n2_; }
  Index cols() const noexcept { return top_.cols(); }
  Index economy_rows() const noexcept { return cols(); }

  const TopSolver& top() const noexcept { return top_; }
  const BottomSolver& bottom() const noexcept { return bottom_; }
  /// P acting on the stacked [R1; R2] (e1 + e2 rows).
  const Permutation& interleave_permutation() const noexcept { return interleave_; }
  const BlockBandedQR<Scalar>& banded() const noexcept { return banded_; }

  Scalar r_max_abs() const noexcept { return banded_.r_max_abs(); }

  void apply_qt(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    top_.apply_qt(b.middle_rows(0, n1_));
    bottom_.apply_qt(b.middle_rows(n1_, n2_));
    permute_rows(output_order_, b);
    banded_.apply_qt(b.middle_rows(0, e1_ + e2_));
  }

  void apply_q(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    banded_.apply_q(b.middle_rows(0, e1_ + e2_));
    permute_rows(input_order_, b);
    top_.apply_q(b.middle_rows(0, n1_));
    bottom_.apply_q(b.middle_rows(n1_, n2_));
  }

  void solve_r(MatrixView<Scalar> x, Scalar threshold) const { banded_.solve_r(x, threshold); }
  void solve_r(MatrixView<Scalar> x) const { banded_.solve_r(x); }
  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const { banded_.solve_rt(x, threshold); }
  void solve_rt(MatrixView<Scalar> x) const { banded_.solve_rt(x); }

  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    banded_.append_r_triplets(out, row_offset, col_offset);
  }
  TripletMatrix<Scalar> r_triplets() const { return banded_.r_triplets(); }

  Index q_storage_scalars() const {
    return top_.q_storage_scalars() + bottom_.q_storage_scalars() + banded_.q_storage_scalars();
  }

 private:
  VertCatQR& finish() {
    if (top_.cols() != bottom_.cols()) {
      throw DimensionError("vertcat_qr: A1 has " + std::to_string(top_.cols()) + " columns, A2 has " +
                           std::to_string(bottom_.cols()));
    }
    const Index m = top_.cols();
    n1_ = top_.rows();
    n2_ = bottom_.rows();
    e1_ = top_.economy_rows();
    e2_ = bottom_.economy_rows();
    if (e1_ + e2_ < m) {
      throw DimensionError("vertcat_qr: stacked R factors have " + std::to_string(e1_ + e2_) + " rows for " +
                           std::to_string(m) + " columns");
    }
    TripletMatrix<Scalar> stacked(e1_ + e2_, m);
    top_.append_r_triplets(stacked, 0, 0);
    bottom_.append_r_triplets(stacked, e1_, 0);
    interleave_ = first_column_interleave(stacked);
    const auto sorted = apply_row_permutation(interleave_, stacked);
    banded_ = BlockBandedQR<Scalar>();
    banded_.compute(discover_banded_blocks(sorted, kDefaultWyWidth));

    // Component outputs -> [P [R1; R2] rows; Q_perp1 rows; Q_perp2 rows].
    std::vector<Index> map(static_cast<std::size_t>(n1_ + n2_));
    for (Index i = 0; i < e1_; ++i) map[static_cast<std::size_t>(i)] = interleave_[i];
    for (Index i = 0; i < e2_; ++i) map[static_cast<std::size_t>(n1_ + i)] = interleave_[e1_ + i];
    Index out = e1_ + e2_;
    for (Index i = e1_; i < n1_; ++i) map[static_cast<std::size_t>(i)] = out++;
    for (Index i = e2_; i < n2_; ++i) map[static_cast<std::size_t>(n1_ + i)] = out++;
    output_order_ = Permutation(std::move(map));
    input_order_ = output_order_.inverse();
    return *this;
  }

  void check_rows(Index r) const {
    if (r != rows()) {
      throw DimensionError("vertcat_qr: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows()));
    }
  }

  TopSolver top_;
  BottomSolver bottom_;
  Permutation interleave_;
  Permutation output_order_;
  Permutation input_order_;
  BlockBandedQR<Scalar> banded_;
  Index n1_ = 0, n2_ = 0, e1_ = 0, e2_ = 0;
};

template <QRFactorization TopSolver, QRFactorization BottomSolver>
VertCatQR<TopSolver, BottomSolver> vertcat_qr(TopSolver top, BottomSolver bottom) {
  VertCatQR<TopSolver, BottomSolver> f;
  f.compute_with(std::move(top), std::move(bottom));
  return f;
}

}  // namespace qrkit
