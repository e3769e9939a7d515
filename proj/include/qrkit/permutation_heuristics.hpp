#pragma once

// Sort-based orderings that expose banded structure.

#include <qrkit/core/permutation.hpp>

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

namespace qrkit {

struct RowSpan {
  Index first = 0;  // first nonzero column, or cols for an all-zero row
  Index last = -1;  // last nonzero column, or -1
  bool empty() const noexcept { return last < first; }
};

template <RealScalar Scalar>
std::vector<RowSpan> row_spans(const TripletMatrix<Scalar>& a) {
  std::vector<RowSpan> spans(static_cast<std::size_t>(a.rows()), RowSpan{a.cols(), -1});
  for (const auto& t : a.entries()) {
    if (t.value == Scalar(0)) continue;
    auto& s = spans[static_cast<std::size_t>(t.row)];
    s.first = std::min(s.first, t.col);
    s.last = std::max(s.last, t.col);
  }
  return spans;
}

/// Widest row, counted inclusively: max over rows of (last - first + 1).
/// A diagonal matrix has bandwidth 1, a bidiagonal one 2; all-zero rows
/// count as 0.
template <RealScalar Scalar>
Index bandwidth(const TripletMatrix<Scalar>& a) {
  Index w = 0;
  for (const auto& s : row_spans(a))
    if (!s.empty()) w = std::max(w, s.last - s.first + 1);
  return w;
}

template <RealScalar Scalar>
Index bandwidth(const DenseMatrix<Scalar>& a) {
  return bandwidth(to_triplets(a));
}

/// Rows sorted by (first nonzero column, last nonzero column), stable;
/// all-zero rows last. Exact for row-shuffles of banded matrices.
template <RealScalar Scalar>
Permutation row_banding_permutation(const TripletMatrix<Scalar>& pattern) {
  if (pattern.rows() == 0) throw DimensionError("row_banding_permutation: empty pattern");
  const auto spans = row_spans(pattern);
  std::vector<Index> order(spans.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const auto& sa = spans[static_cast<std::size_t>(a)];
    const auto& sb = spans[static_cast<std::size_t>(b)];
    if (sa.empty() != sb.empty()) return sb.empty();
    if (sa.empty()) return false;
    if (sa.first != sb.first) return sa.first < sb.first;
    return sa.last < sb.last;
  });
  return Permutation::from_order(order);
}

/// Columns sorted by (first nonzero row, nonzero count), stable; empty
/// columns last. The returned permutation maps old column -> new column.
template <RealScalar Scalar>
Permutation column_fill_reducing_permutation(const TripletMatrix<Scalar>& pattern) {
  if (pattern.cols() == 0) throw DimensionError("column_fill_reducing_permutation: empty pattern");
  const auto c = pattern.compressed();
  const auto m = static_cast<std::size_t>(pattern.cols());
  std::vector<Index> min_row(m, pattern.rows());
  std::vector<Index> degree(m, 0);
  for (const auto& t : c.entries()) {
    if (t.value == Scalar(0)) continue;
    auto j = static_cast<std::size_t>(t.col);
    min_row[j] = std::min(min_row[j], t.row);
    ++degree[j];
  }
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
    const bool ea = degree[ia] == 0, eb = degree[ib] == 0;
    if (ea != eb) return eb;
    if (ea) return false;
    if (min_row[ia] != min_row[ib]) return min_row[ia] < min_row[ib];
    return degree[ia] < degree[ib];
  });
  return Permutation::from_order(order);
}

/// Row order for the stack [R; D] (2m rows: R rows 0..m-1, then D rows
/// m..2m-1) with R upper triangular and D diagonal. Row D_j is placed right
/// after the last R row whose span [i, last_i] covers column j; with no
/// such row it follows R_j.
///
/// `r_last[i]` is the last nonzero column of R row i (-1 for a zero row).
inline Permutation lm_interleave_permutation(std::span<const Index> r_last, Index m) {
  if (static_cast<Index>(r_last.size()) != m) {
    throw DimensionError("lm_interleave_permutation: profile has " + std::to_string(r_last.size()) +
                         " entries for m = " + std::to_string(m));
  }
  // anchor(j) = max { i <= j : r_last[i] >= j }. The backward search stops at
  // i = j whenever R_jj is nonzero, which is the usual case.
  std::vector<std::vector<Index>> after(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    Index anchor = j;
    for (Index i = j; i >= 0; --i) {
      if (r_last[static_cast<std::size_t>(i)] >= j) {
        anchor = i;
        break;
      }
    }
    after[static_cast<std::size_t>(anchor)].push_back(m + j);
  }
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(2 * m));
  for (Index i = 0; i < m; ++i) {
    order.push_back(i);
    for (Index d : after[static_cast<std::size_t>(i)]) order.push_back(d);
  }
  return Permutation::from_order(order);
}

/// Per-row last nonzero column of an R factor given as triplets.
template <RealScalar Scalar>
std::vector<Index> r_profile(const TripletMatrix<Scalar>& r) {
  std::vector<Index> last(static_cast<std::size_t>(r.rows()), -1);
  const auto spans = row_spans(r);
  for (std::size_t i = 0; i < spans.size(); ++i) last[i] = spans[i].last;
  return last;
}

}  // namespace qrkit
