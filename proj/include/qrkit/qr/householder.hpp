#pragma once

// Dense Householder QR with compressed WY blocking.
//
// A reflector is H = I - tau v v^T with v[0] = 1 (the unit leading entry is
// implicit; the tail is stored below the diagonal of the packed factor).
// A run of r reflectors H_s ... H_{s+r-1} is held as Q = I + Y T Y^T with Y
// unit lower trapezoidal and T upper triangular, and Q^T B is evaluated as
// B + Y (T^T (Y^T B)).

#include <qrkit/core/structured_matrix.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace qrkit {

/// Default column width of one compressed WY panel.
inline constexpr Index kDefaultWyWidth = 32;

namespace detail {

/// Turns x (length n) into beta * e_0 with beta = ||x|| >= 0. On return x[1..n)
/// holds the reflector tail and `tau` its coefficient. Columns whose norm
/// is below smallest_normal/eps are left alone with tau = 0.
template <class Scalar>
Scalar make_reflector(Scalar* x, Index n, Scalar& tau) {
  const Scalar alpha = x[0];
  const Scalar tail = n > 1 ? norm2(x + 1, n - 1) : Scalar(0);
  const Scalar tiny = std::numeric_limits<Scalar>::min() / std::numeric_limits<Scalar>::epsilon();
  if (tail == Scalar(0)) {
    if (alpha >= Scalar(0)) {
      tau = Scalar(0);
      return alpha;
    }
    tau = Scalar(2);  // pure sign flip of the leading entry
    return -alpha;
  }
  const Scalar norm = std::hypot(alpha, tail);
  if (norm <= tiny) {
    tau = Scalar(0);
    std::fill(x + 1, x + n, Scalar(0));
    return alpha;
  }
  // v0 = alpha - norm, evaluated without cancellation when alpha > 0.
  const Scalar v0 = alpha <= Scalar(0) ? alpha - norm : -(tail / (alpha + norm)) * tail;
  if (v0 == Scalar(0)) {
    tau = Scalar(0);
    return alpha;
  }
  const Scalar ratio = tail / v0;
  tau = Scalar(2) / (Scalar(1) + ratio * ratio);
  const Scalar inv = Scalar(1) / v0;
  for (Index i = 1; i < n; ++i) x[i] *= inv;
  return norm;
}

/// Applies H = I - tau v v^T (v[0] = 1 implicit, v tail at `v+1`) to C.
template <class Scalar>
void apply_reflector(const Scalar* v, Index n, Scalar tau, MatrixView<Scalar> c) {
  if (tau == Scalar(0)) return;
  for (Index j = 0; j < c.cols; ++j) {
    Scalar* cj = c.col(j);
    const Scalar w = tau * (cj[0] + dot(v + 1, cj + 1, n - 1));
    cj[0] -= w;
    axpy(-w, v + 1, cj + 1, n - 1);
  }
}

/// Applies (I + Y T Y^T)^T (transpose = true) or (I + Y T Y^T) to C, where Y
/// is p x r unit lower trapezoidal read implicitly from `y` (entries on and
/// above the diagonal are ignored).
template <class Scalar>
void apply_block_reflector(ConstViewArg<Scalar> y, ConstViewArg<Scalar> t, MatrixView<Scalar> c,
                           bool transpose) {
  const Index p = y.rows;
  const Index r = y.cols;
  if (r == 0 || c.cols == 0) return;
  constexpr Index kChunk = 256;

  // W = Y^T C, r x nc, accumulated over row chunks of Y held row-major.
  std::vector<Scalar> w(static_cast<std::size_t>(r * c.cols), Scalar(0));
  std::vector<Scalar> yt(static_cast<std::size_t>(std::min(p, kChunk) * r));
  for (Index r0 = 0; r0 < p; r0 += kChunk) {
    const Index nr = std::min(kChunk, p - r0);
    for (Index i = 0; i < nr; ++i) {
      const Index gi = r0 + i;
      Scalar* row = yt.data() + i * r;
      for (Index j = 0; j < r; ++j) {
        row[j] = gi > j ? y(gi, j) : (gi == j ? Scalar(1) : Scalar(0));
      }
    }
    for (Index cc = 0; cc < c.cols; ++cc) {
      const Scalar* cj = c.col(cc) + r0;
      Scalar* wc = w.data() + cc * r;
      for (Index i = 0; i < nr; ++i) {
        const Scalar ci = cj[i];
        const Scalar* row = yt.data() + i * r;
        for (Index j = 0; j < r; ++j) wc[j] += row[j] * ci;
      }
    }
  }

  // W = op(T) W with T upper triangular.
  std::vector<Scalar> tmp(static_cast<std::size_t>(r));
  for (Index cc = 0; cc < c.cols; ++cc) {
    Scalar* wc = w.data() + cc * r;
    if (transpose) {
      for (Index i = 0; i < r; ++i) {
        Scalar s(0);
        for (Index k = 0; k <= i; ++k) s += t(k, i) * wc[k];
        tmp[static_cast<std::size_t>(i)] = s;
      }
    } else {
      for (Index i = 0; i < r; ++i) {
        Scalar s(0);
        for (Index k = i; k < r; ++k) s += t(i, k) * wc[k];
        tmp[static_cast<std::size_t>(i)] = s;
      }
    }
    std::copy(tmp.begin(), tmp.end(), wc);
  }

  // C += Y W.
  for (Index cc = 0; cc < c.cols; ++cc) {
    Scalar* cj = c.col(cc);
    const Scalar* wc = w.data() + cc * r;
    for (Index j = 0; j < r; ++j) {
      const Scalar wj = wc[j];
      if (wj == Scalar(0)) continue;
      cj[j] += wj;
      axpy(wj, y.col(j) + j + 1, cj + j + 1, p - j - 1);
    }
  }
}

/// T factor for the reflectors stored in columns of `y` (unit lower
/// trapezoidal, implicit) with coefficients tau, such that
/// H_0 H_1 ... H_{r-1} = I + Y T Y^T.
template <class Scalar>
void form_wy_t(ConstViewArg<Scalar> y, const Scalar* tau, MatrixView<Scalar> t) {
  const Index p = y.rows;
  const Index r = y.cols;
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < r; ++i) t(i, j) = Scalar(0);
    const Scalar tj = tau[j];
    t(j, j) = -tj;
    if (j == 0 || tj == Scalar(0)) continue;
    // z = Y(:,0:j)^T v_j, using v_j[j] = 1 and Y(i,k) implicit.
    std::vector<Scalar> z(static_cast<std::size_t>(j), Scalar(0));
    const Scalar* vj = y.col(j);
    for (Index k = 0; k < j; ++k) {
      const Scalar* yk = y.col(k);
      Scalar s = yk[j];  // row j of Y(:,k) times v_j[j] = 1
      for (Index i = j + 1; i < p; ++i) s += yk[i] * vj[i];
      z[static_cast<std::size_t>(k)] = s;
    }
    // T(0:j, j) = -tau_j * T(0:j, 0:j) z
    for (Index i = 0; i < j; ++i) {
      Scalar s(0);
      for (Index k = i; k < j; ++k) s += t(i, k) * z[static_cast<std::size_t>(k)];
      t(i, j) = -tj * s;
    }
  }
}

}  // namespace detail

/// Back substitution R x = b in place on b. Throws SingularMatrixError when
/// |R_jj| <= threshold (default eps * max|R|).
template <class Scalar>
void solve_upper_triangular_inplace(ConstViewArg<Scalar> r, MatrixView<Scalar> b, Scalar threshold) {
  const Index n = r.cols;
  for (Index j = 0; j < n; ++j) {
    if (!(std::abs(r(j, j)) > threshold)) throw SingularMatrixError(j);
  }
  for (Index c = 0; c < b.cols; ++c) {
    Scalar* x = b.col(c);
    for (Index j = n - 1; j >= 0; --j) {
      x[j] /= r(j, j);
      axpy(-x[j], r.col(j), x, j);
    }
  }
}

/// R^T z = b in place (forward substitution).
template <class Scalar>
void solve_upper_triangular_transpose_inplace(ConstViewArg<Scalar> r, MatrixView<Scalar> b, Scalar threshold) {
  const Index n = r.cols;
  for (Index j = 0; j < n; ++j) {
    if (!(std::abs(r(j, j)) > threshold)) throw SingularMatrixError(j);
  }
  for (Index c = 0; c < b.cols; ++c) {
    Scalar* z = b.col(c);
    for (Index j = 0; j < n; ++j) z[j] = (z[j] - dot(r.col(j), z, j)) / r(j, j);
  }
}

template <class Scalar>
Scalar default_singular_threshold(Scalar r_max) {
  return std::numeric_limits<Scalar>::epsilon() * r_max;
}

/// The (Y, T) pair of one blocked Householder transform acting on rows
/// [row_offset, row_offset + Y.rows()) of its parent.
template <RealScalar Scalar>
struct CompressedWYBlock {
  Index row_offset = 0;
  DenseMatrix<Scalar> y;  // explicit: unit diagonal, zeros above
  DenseMatrix<Scalar> t;

  Index width() const noexcept { return y.cols(); }

  /// Dense (I + Y T Y^T), debugging/oracle aid.
  DenseMatrix<Scalar> to_dense() const {
    DenseMatrix<Scalar> q = DenseMatrix<Scalar>::identity(y.rows());
    detail::apply_block_reflector(y.view(), t.view(), q.view(), false);
    return q;
  }
};

/// Householder QR of a dense m x n matrix (portrait or landscape), packed
/// LAPACK-style: R on and above the diagonal, reflector tails below, tau aside.
/// R has a nonnegative diagonal.
template <RealScalar Scalar>
class DenseQR {
 public:
  using scalar_type = Scalar;
  using matrix_type = DenseMatrix<Scalar>;

  DenseQR() = default;
  explicit DenseQR(Index wy_width) : wy_width_(wy_width) {}

  DenseQR& compute(const DenseMatrix<Scalar>& a) { return compute(DenseMatrix<Scalar>(a)); }

  DenseQR& compute(DenseMatrix<Scalar>&& a) {
    packed_ = std::move(a);
    const Index m = packed_.rows();
    const Index n = packed_.cols();
    const Index k = std::min(m, n);
    tau_.assign(static_cast<std::size_t>(k), Scalar(0));
    panels_.clear();
    if (k == 0) {
      r_max_ = Scalar(0);
      return *this;
    }
    const Index nb = std::max<Index>(1, std::min(wy_width_ > 0 ? wy_width_ : kDefaultWyWidth, n));
    auto a_view = packed_.view();
    for (Index k0 = 0; k0 < k; k0 += nb) {
      const Index kb = std::min(nb, k - k0);
      // Unblocked factorization of the panel.
      for (Index j = k0; j < k0 + kb; ++j) {
        Scalar* x = a_view.col(j) + j;
        Scalar tau;
        const Scalar beta = detail::make_reflector(x, m - j, tau);
        tau_[static_cast<std::size_t>(j)] = tau;
        if (j + 1 < k0 + kb && tau != Scalar(0)) {
          detail::apply_reflector(x, m - j, tau, a_view.block(j, j + 1, m - j, k0 + kb - j - 1));
        }
        x[0] = beta;
      }
      Panel panel{k0, DenseMatrix<Scalar>(kb, kb)};
      const auto y = ConstMatrixView<Scalar>(a_view).block(k0, k0, m - k0, kb);
      detail::form_wy_t(y, tau_.data() + k0, panel.t.view());
      if (k0 + kb < n) {
        detail::apply_block_reflector(y, panel.t.view(), a_view.block(k0, k0 + kb, m - k0, n - k0 - kb), true);
      }
      panels_.push_back(std::move(panel));
    }
    r_max_ = Scalar(0);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i <= std::min(j, k - 1); ++i) r_max_ = std::max(r_max_, std::abs(packed_(i, j)));
    return *this;
  }

  Index rows() const noexcept { return packed_.rows(); }
  Index cols() const noexcept { return packed_.cols(); }
  /// Number of leading rows of the Q^T output that carry R.
  Index economy_rows() const noexcept { return std::min(rows(), cols()); }
  Index num_reflectors() const noexcept { return static_cast<Index>(tau_.size()); }

  const DenseMatrix<Scalar>& packed() const noexcept { return packed_; }
  const std::vector<Scalar>& tau() const noexcept { return tau_; }
  Index wy_width() const noexcept { return wy_width_ > 0 ? wy_width_ : kDefaultWyWidth; }

  /// R as a dense min(m,n) x n upper trapezoid.
  DenseMatrix<Scalar> matrix_r() const {
    const Index k = economy_rows();
    DenseMatrix<Scalar> r(k, cols());
    for (Index j = 0; j < cols(); ++j)
      for (Index i = 0; i <= std::min(j, k - 1); ++i) r(i, j) = packed_(i, j);
    return r;
  }

  /// Upper-triangular R view (leading economy_rows x cols of the packed storage).
  ConstMatrixView<Scalar> r_view() const { return packed_.view().block(0, 0, economy_rows(), cols()); }

  Scalar r_max_abs() const noexcept { return r_max_; }

  /// B <- Q^T B for the full m x m Q.
  void apply_qt(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    if (use_blocked(b.cols)) {
      for (const auto& panel : panels_) apply_panel(panel, b, true);
    } else {
      for (Index j = 0; j < num_reflectors(); ++j) apply_single(j, b);
    }
  }

  /// B <- Q B.
  void apply_q(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    if (use_blocked(b.cols)) {
      for (auto it = panels_.rbegin(); it != panels_.rend(); ++it) apply_panel(*it, b, false);
    } else {
      for (Index j = num_reflectors() - 1; j >= 0; --j) apply_single(j, b);
    }
  }

  /// x <- R^{-1} x for square R (portrait factor); x has cols() rows.
  void solve_r(MatrixView<Scalar> x, Scalar threshold) const {
    check_square_r(x.rows);
    solve_upper_triangular_inplace(r_view(), x, threshold);
  }
  void solve_r(MatrixView<Scalar> x) const { solve_r(x, default_singular_threshold(r_max_)); }

  /// x <- R^{-T} x.
  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const {
    check_square_r(x.rows);
    solve_upper_triangular_transpose_inplace(r_view(), x, threshold);
  }
  void solve_rt(MatrixView<Scalar> x) const { solve_rt(x, default_singular_threshold(r_max_)); }

  /// Appends the nonzeros of R, shifted by (row_offset, col_offset).
  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    const Index k = economy_rows();
    for (Index j = 0; j < cols(); ++j)
      for (Index i = 0; i <= std::min(j, k - 1); ++i)
        if (packed_(i, j) != Scalar(0)) out.add(row_offset + i, col_offset + j, packed_(i, j));
  }

  TripletMatrix<Scalar> r_triplets() const {
    TripletMatrix<Scalar> t(economy_rows(), cols());
    append_r_triplets(t, 0, 0);
    return t;
  }

  /// Number of scalars held for Q: reflector vectors plus T factors.
  Index q_storage_scalars() const noexcept {
    Index s = 0;
    for (Index j = 0; j < num_reflectors(); ++j) s += rows() - j;
    for (const auto& p : panels_) s += p.t.size();
    return s;
  }

  /// (Y, T) of the reflectors [block_start, block_start + r).
  CompressedWYBlock<Scalar> wy_block(Index block_start, Index r) const {
    if (block_start < 0 || r < 0 || block_start + r > num_reflectors()) {
      throw DimensionError("wy_accumulate: reflectors [" + std::to_string(block_start) + ", " +
                           std::to_string(block_start + r) + ") outside 0.." + std::to_string(num_reflectors()));
    }
    CompressedWYBlock<Scalar> blk;
    blk.row_offset = block_start;
    const Index p = rows() - block_start;
    blk.y = DenseMatrix<Scalar>(p, r);
    for (Index j = 0; j < r; ++j) {
      blk.y(j, j) = Scalar(1);
      for (Index i = j + 1; i < p; ++i) blk.y(i, j) = packed_(block_start + i, block_start + j);
    }
    blk.t = DenseMatrix<Scalar>(r, r);
    detail::form_wy_t(blk.y.view(), tau_.data() + block_start, blk.t.view());
    return blk;
  }

 private:
  struct Panel {
    Index start;
    DenseMatrix<Scalar> t;
  };

  void check_rows(Index r) const {
    if (r != rows()) {
      throw DimensionError("Q application: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows()));
    }
  }

  void check_square_r(Index rhs_rows) const {
    if (economy_rows() != cols()) {
      throw DimensionError("triangular solve needs square R; factor is " + shape_string(rows(), cols()));
    }
    if (rhs_rows != cols()) {
      throw DimensionError("triangular solve: rhs has " + std::to_string(rhs_rows) + " rows, R is " +
                           shape_string(cols(), cols()));
    }
  }

  bool use_blocked(Index rhs_cols) const noexcept {
    return num_reflectors() >= 4 && rows() >= 64 && rhs_cols >= 4;
  }

  void apply_single(Index j, MatrixView<Scalar> b) const {
    const Scalar tau = tau_[static_cast<std::size_t>(j)];
    if (tau == Scalar(0)) return;
    const Index len = rows() - j;
    // Reflector tails live in the packed column; the unit head is implicit.
    const Scalar* v = packed_.col(j) + j;
    auto sub = b.block(j, 0, len, b.cols);
    for (Index c = 0; c < sub.cols; ++c) {
      Scalar* cj = sub.col(c);
      const Scalar w = tau * (cj[0] + dot(v + 1, cj + 1, len - 1));
      cj[0] -= w;
      axpy(-w, v + 1, cj + 1, len - 1);
    }
  }

  void apply_panel(const Panel& panel, MatrixView<Scalar> b, bool transpose) const {
    const Index kb = panel.t.rows();
    const Index p = rows() - panel.start;
    const auto y = packed_.view().block(panel.start, panel.start, p, kb);
    detail::apply_block_reflector(y, panel.t.view(), b.block(panel.start, 0, p, b.cols), transpose);
  }

  Index wy_width_ = 0;
  DenseMatrix<Scalar> packed_;
  std::vector<Scalar> tau_;
  std::vector<Panel> panels_;
  Scalar r_max_ = Scalar(0);
};

/// Factor a dense matrix.
template <RealScalar Scalar>
DenseQR<Scalar> dense_qr(const DenseMatrix<Scalar>& a, Index wy_width = 0) {
  DenseQR<Scalar> f(wy_width);
  f.compute(a);
  return f;
}

template <RealScalar Scalar>
CompressedWYBlock<Scalar> wy_accumulate(const DenseQR<Scalar>& factor, Index block_start, Index r) {
  return factor.wy_block(block_start, r);
}

/// Full Q^T B: rows [0, min(m,n)) correspond to the economy Q, the rest to Q_perp.
template <RealScalar Scalar>
DenseMatrix<Scalar> apply_q_transpose(const DenseQR<Scalar>& factor, DenseMatrix<Scalar> b) {
  factor.apply_qt(b.view());
  return b;
}

/// Q^T B for a sequence of compressed WY blocks, applied first to last.
template <RealScalar Scalar>
DenseMatrix<Scalar> apply_q_transpose(const std::vector<CompressedWYBlock<Scalar>>& blocks, DenseMatrix<Scalar> b) {
  for (const auto& blk : blocks) {
    if (blk.row_offset < 0 || blk.row_offset + blk.y.rows() > b.rows()) {
      throw DimensionError("apply_q_transpose: WY block rows [" + std::to_string(blk.row_offset) + ", " +
                           std::to_string(blk.row_offset + blk.y.rows()) + ") outside operand with " +
                           std::to_string(b.rows()) + " rows");
    }
    detail::apply_block_reflector(blk.y.view(), blk.t.view(), b.view().block(blk.row_offset, 0, blk.y.rows(), b.cols()),
                                  true);
  }
  return b;
}

template <RealScalar Scalar>
DenseMatrix<Scalar> solve_upper_triangular(const DenseMatrix<Scalar>& r, DenseMatrix<Scalar> b) {
  if (r.rows() != r.cols()) throw DimensionError("solve_upper_triangular: R is " + shape_string(r.rows(), r.cols()));
  if (b.rows() != r.rows()) {
    throw DimensionError("solve_upper_triangular: R is " + shape_string(r.rows(), r.cols()) + ", b is " +
                         shape_string(b.rows(), b.cols()));
  }
  solve_upper_triangular_inplace(r.view(), b.view(), default_singular_threshold(max_abs(r)));
  return b;
}

}  // namespace qrkit
