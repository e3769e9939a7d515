#pragma once

#include <qrkit/core/structured_matrix.hpp>

#include <span>
#include <string>
#include <vector>

namespace qrkit {

/// Bijection on {0..n-1}; map()[i] is the destination of source index i.
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<Index> map) : map_(std::move(map)) {
    std::vector<char> seen(map_.size(), 0);
    const Index n = size();
    for (std::size_t i = 0; i < map_.size(); ++i) {
      const Index d = map_[i];
      if (d < 0 || d >= n || seen[static_cast<std::size_t>(d)]) {
        throw StructureError("permutation: entry " + std::to_string(i) + " -> " + std::to_string(d) +
                             " breaks bijection on 0.." + std::to_string(n - 1));
      }
      seen[static_cast<std::size_t>(d)] = 1;
    }
  }

  static Permutation identity(Index n) {
    std::vector<Index> m(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = i;
    Permutation p;
    p.map_ = std::move(m);
    return p;
  }

  /// Builds the permutation whose output position k holds source order[k].
  static Permutation from_order(std::span<const Index> order) {
    std::vector<Index> m(order.size(), -1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Index src = order[k];
      if (src < 0 || src >= static_cast<Index>(order.size()) || m[static_cast<std::size_t>(src)] != -1) {
        throw StructureError("permutation: order list is not a bijection");
      }
      m[static_cast<std::size_t>(src)] = static_cast<Index>(k);
    }
    Permutation p;
    p.map_ = std::move(m);
    return p;
  }

  Index size() const noexcept { return static_cast<Index>(map_.size()); }
  Index operator[](Index i) const { return map_[static_cast<std::size_t>(i)]; }
  const std::vector<Index>& map() const noexcept { return map_; }

  /// order()[k] = source index that lands on position k.
  std::vector<Index> order() const {
    std::vector<Index> o(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) o[static_cast<std::size_t>(map_[i])] = static_cast<Index>(i);
    return o;
  }

  Permutation inverse() const {
    Permutation p;
    p.map_ = order();
    return p;
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i)
      if (map_[i] != static_cast<Index>(i)) return false;
    return true;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<Index> map_;
};

/// (outer ∘ inner): applying `inner` first, then `outer`.
inline Permutation compose(const Permutation& outer, const Permutation& inner) {
  if (outer.size() != inner.size()) {
    throw DimensionError("compose: permutation sizes " + std::to_string(outer.size()) + " and " +
                         std::to_string(inner.size()));
  }
  std::vector<Index> m(static_cast<std::size_t>(inner.size()));
  for (Index i = 0; i < inner.size(); ++i) m[static_cast<std::size_t>(i)] = outer[inner[i]];
  return Permutation(std::move(m));
}

namespace detail {
inline void check_perm_length(const Permutation& p, Index n, const char* what) {
  if (p.size() != n) {
    throw DimensionError(std::string(what) + ": permutation of length " + std::to_string(p.size()) +
                         " applied to " + std::to_string(n) + " rows");
  }
}
}  // namespace detail

template <class T>
std::vector<T> apply_permutation(const Permutation& p, std::span<const T> v) {
  detail::check_perm_length(p, static_cast<Index>(v.size()), "apply_permutation");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(p[static_cast<Index>(i)])] = v[i];
  return out;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> apply_row_permutation(const Permutation& p, const DenseMatrix<Scalar>& a) {
  detail::check_perm_length(p, a.rows(), "apply_row_permutation");
  DenseMatrix<Scalar> out(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) out(p[i], j) = a(i, j);
  return out;
}

/// In-place row permutation of a view through a scratch copy.
template <class Scalar>
void permute_rows(const Permutation& p, MatrixView<Scalar> a) {
  detail::check_perm_length(p, a.rows, "permute_rows");
  std::vector<Scalar> tmp(static_cast<std::size_t>(a.rows));
  for (Index j = 0; j < a.cols; ++j) {
    Scalar* c = a.col(j);
    for (Index i = 0; i < a.rows; ++i) tmp[static_cast<std::size_t>(p[i])] = c[i];
    std::copy(tmp.begin(), tmp.end(), c);
  }
}

template <RealScalar Scalar>
TripletMatrix<Scalar> apply_row_permutation(const Permutation& p, const TripletMatrix<Scalar>& a) {
  detail::check_perm_length(p, a.rows(), "apply_row_permutation");
  TripletMatrix<Scalar> out(a.rows(), a.cols());
  out.reserve(a.entries().size());
  for (const auto& t : a.entries()) out.add(p[t.row], t.col, t.value);
  return out;
}

/// Block structure does not survive an arbitrary row permutation; the result
/// is the triplet form.
template <RealScalar Scalar>
TripletMatrix<Scalar> apply_row_permutation(const Permutation& p, const BlockDiagonalMatrix<Scalar>& a) {
  return apply_row_permutation(p, to_triplets(a));
}

template <RealScalar Scalar>
TripletMatrix<Scalar> apply_row_permutation(const Permutation& p, const BandedBlockMatrix<Scalar>& a) {
  return apply_row_permutation(p, to_triplets(a));
}

template <RealScalar Scalar>
TripletMatrix<Scalar> apply_column_permutation(const Permutation& p, const TripletMatrix<Scalar>& a) {
  detail::check_perm_length(p, a.cols(), "apply_column_permutation");
  TripletMatrix<Scalar> out(a.rows(), a.cols());
  out.reserve(a.entries().size());
  for (const auto& t : a.entries()) out.add(t.row, p[t.col], t.value);
  return out;
}

}  // namespace qrkit
