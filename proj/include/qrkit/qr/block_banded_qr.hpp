#pragma once

// QR of a block-banded matrix as a chain of small dense factorizations.
//
// Step k factors the working matrix
//
//        [ carry_{k-1}   0 ]     carry rows: the part of step k-1's R that
//   W_k = [   A_k          ]     still touches the r_{k-1} overlap columns
//
// over the m_k columns of block k. Its first m_k - r_k rows of R are final;
// the next rows (up to r_k of them) are carried into step k+1; the rest are
// zero and belong to Q_perp. Every step's Q acts on a fixed list of global
// row slots, so Q^T B is a gather / blocked-WY apply / scatter per step and
// Q is never formed.

#include <qrkit/core/permutation.hpp>
#include <qrkit/qr/qr_solver.hpp>

#include <string>
#include <vector>

namespace qrkit {

template <RealScalar Scalar>
class BlockBandedQR {
 public:
  using scalar_type = Scalar;

  /// One elimination step: its factor, the global rows it acts on, and the
  /// final R rows it produced (rows x block cols, starting at col_offset).
  struct Step {
    DenseQR<Scalar> factor;
    std::vector<Index> slots;
    Index col_offset = 0;
    DenseMatrix<Scalar> r;
  };

  BlockBandedQR() = default;
  /// `wy_width` is the compressed WY panel width used inside each step
  /// (0 selects the library default).
  explicit BlockBandedQR(Index wy_width) : wy_width_(wy_width) {}

  BlockBandedQR& compute(const BandedBlockMatrix<Scalar>& a) {
    rows_ = a.rows();
    cols_ = a.cols();
    if (rows_ < cols_) {
      throw DimensionError("block_banded_qr: matrix is landscape (" + shape_string(rows_, cols_) + ")");
    }
    const Index k = a.num_blocks();
    steps_.clear();
    steps_.reserve(static_cast<std::size_t>(k));
    diag_.assign(static_cast<std::size_t>(cols_), Scalar(0));
    std::vector<Index> r_row_of_col(static_cast<std::size_t>(cols_), -1);
    std::vector<char> touched(static_cast<std::size_t>(rows_), 0);
    std::vector<Index> perp_slots;
    r_max_ = Scalar(0);

    std::vector<Index> carry_slots;
    DenseMatrix<Scalar> carry;  // carry_slots.size() x overlap(k-1)
    for (Index b = 0; b < k; ++b) {
      const auto& blk = a.block(b);
      const Index nb = blk.rows();
      const Index mb = blk.cols();
      const Index ro = a.row_offset(b);
      const Index co = a.col_offset(b);
      const Index overlap_next = a.overlap(b);
      const Index nc = static_cast<Index>(carry_slots.size());
      const Index p = nc + nb;

      Step step;
      step.col_offset = co;
      step.slots = carry_slots;
      for (Index i = 0; i < nb; ++i) {
        step.slots.push_back(ro + i);
        touched[static_cast<std::size_t>(ro + i)] = 1;
      }

      DenseMatrix<Scalar> w(p, mb);
      if (nc > 0) w.set_block(0, 0, carry.view());
      w.set_block(nc, 0, blk.view());
      step.factor = DenseQR<Scalar>(wy_width_);
      step.factor.compute(std::move(w));

      const Index final_rows = std::min(mb - overlap_next, p);
      const Index kept = std::min(mb, p);
      const auto r = step.factor.r_view();
      step.r = DenseMatrix<Scalar>(final_rows, mb);
      for (Index j = 0; j < mb; ++j)
        for (Index i = 0; i <= std::min(j, final_rows - 1); ++i) step.r(i, j) = r(i, j);
      for (Index i = 0; i < final_rows; ++i) {
        diag_[static_cast<std::size_t>(co + i)] = step.r(i, i);
        r_row_of_col[static_cast<std::size_t>(co + i)] = step.slots[static_cast<std::size_t>(i)];
      }
      r_max_ = std::max(r_max_, max_abs(step.r));

      // Rows [final_rows, kept) carry into the overlap columns.
      carry_slots.assign(step.slots.begin() + final_rows, step.slots.begin() + kept);
      carry = DenseMatrix<Scalar>(kept - final_rows, overlap_next);
      for (Index j = 0; j < overlap_next; ++j)
        for (Index i = final_rows; i < std::min(kept, mb - overlap_next + j + 1); ++i)
          carry(i - final_rows, j) = r(i, mb - overlap_next + j);
      for (Index i = kept; i < p; ++i) perp_slots.push_back(step.slots[static_cast<std::size_t>(i)]);
      steps_.push_back(std::move(step));
    }
    // Carry left after the last block (only when trailing columns lack rows)
    // has no columns to act on and is zero.
    perp_slots.insert(perp_slots.end(), carry_slots.begin(), carry_slots.end());
    for (Index i = 0; i < rows_; ++i)
      if (!touched[static_cast<std::size_t>(i)]) perp_slots.push_back(i);

    // Columns without an R row (a step with fewer rows than it must
    // eliminate) borrow a zero row from the Q_perp pool; R stays square and
    // the solve reports the column as singular.
    std::size_t next_perp = 0;
    std::vector<Index> map(static_cast<std::size_t>(rows_), -1);
    for (Index j = 0; j < cols_; ++j) {
      Index slot = r_row_of_col[static_cast<std::size_t>(j)];
      if (slot < 0) slot = perp_slots[next_perp++];
      map[static_cast<std::size_t>(slot)] = j;
    }
    Index out = cols_;
    for (; next_perp < perp_slots.size(); ++next_perp) map[static_cast<std::size_t>(perp_slots[next_perp])] = out++;
    output_order_ = Permutation(std::move(map));
    input_order_ = output_order_.inverse();
    return *this;
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index economy_rows() const noexcept { return cols_; }
  Index num_steps() const noexcept { return static_cast<Index>(steps_.size()); }
  const Step& step(Index k) const { return steps_[static_cast<std::size_t>(k)]; }
  const Permutation& output_order() const noexcept { return output_order_; }

  Scalar r_max_abs() const noexcept { return r_max_; }

  void apply_qt(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    for (const auto& s : steps_) apply_step(s, b, true);
    permute_rows(output_order_, b);
  }

  void apply_q(MatrixView<Scalar> b) const {
    check_rows(b.rows);
    permute_rows(input_order_, b);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) apply_step(*it, b, false);
  }

  void solve_r(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    check_diagonal(threshold);
    for (Index c = 0; c < x.cols; ++c) {
      Scalar* v = x.col(c);
      for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        const auto& r = it->r;
        const Index co = it->col_offset;
        for (Index i = r.rows() - 1; i >= 0; --i) {
          Scalar s = v[co + i];
          for (Index j = i + 1; j < r.cols(); ++j) s -= r(i, j) * v[co + j];
          v[co + i] = s / r(i, i);
        }
      }
    }
  }
  void solve_r(MatrixView<Scalar> x) const { solve_r(x, default_singular_threshold(r_max_)); }

  void solve_rt(MatrixView<Scalar> x, Scalar threshold) const {
    check_rhs(x.rows);
    check_diagonal(threshold);
    for (Index c = 0; c < x.cols; ++c) {
      Scalar* v = x.col(c);
      for (const auto& st : steps_) {
        const auto& r = st.r;
        const Index co = st.col_offset;
        for (Index i = 0; i < r.rows(); ++i) {
          const Scalar z = v[co + i] / r(i, i);
          v[co + i] = z;
          for (Index j = i + 1; j < r.cols(); ++j) v[co + j] -= r(i, j) * z;
        }
      }
    }
  }
  void solve_rt(MatrixView<Scalar> x) const { solve_rt(x, default_singular_threshold(r_max_)); }

  void append_r_triplets(TripletMatrix<Scalar>& out, Index row_offset, Index col_offset) const {
    for (const auto& st : steps_) {
      for (Index j = 0; j < st.r.cols(); ++j)
        for (Index i = 0; i < st.r.rows(); ++i)
          if (st.r(i, j) != Scalar(0))
            out.add(row_offset + st.col_offset + i, col_offset + st.col_offset + j, st.r(i, j));
    }
  }

  TripletMatrix<Scalar> r_triplets() const {
    TripletMatrix<Scalar> t(cols_, cols_);
    append_r_triplets(t, 0, 0);
    return t;
  }

  /// Scalars held for Q: reflectors and T factors of every step.
  Index q_storage_scalars() const {
    Index s = 0;
    for (const auto& st : steps_) s += st.factor.q_storage_scalars();
    return s;
  }

  /// Upper bound on q_storage_scalars(): sum over steps of p*w + w*w for a
  /// p x w working matrix.
  Index q_storage_bound() const {
    Index s = 0;
    for (const auto& st : steps_) s += st.factor.rows() * st.factor.cols() + st.factor.cols() * st.factor.cols();
    return s;
  }

 private:
  void apply_step(const Step& s, MatrixView<Scalar> b, bool transpose) const {
    const Index p = static_cast<Index>(s.slots.size());
    if (p == 0 || b.cols == 0) return;
    DenseMatrix<Scalar> tmp(p, b.cols);
    for (Index c = 0; c < b.cols; ++c) {
      const Scalar* src = b.col(c);
      Scalar* dst = tmp.col(c);
      for (Index i = 0; i < p; ++i) dst[i] = src[s.slots[static_cast<std::size_t>(i)]];
    }
    if (transpose) {
      s.factor.apply_qt(tmp.view());
    } else {
      s.factor.apply_q(tmp.view());
    }
    for (Index c = 0; c < b.cols; ++c) {
      const Scalar* src = tmp.col(c);
      Scalar* dst = b.col(c);
      for (Index i = 0; i < p; ++i) dst[s.slots[static_cast<std::size_t>(i)]] = src[i];
    }
  }

  void check_diagonal(Scalar threshold) const {
    for (Index j = 0; j < cols_; ++j)
      if (!(std::abs(diag_[static_cast<std::size_t>(j)]) > threshold)) throw SingularMatrixError(j);
  }

  void check_rows(Index r) const {
    if (r != rows_) {
      throw DimensionError("block_banded_qr: operand has " + std::to_string(r) + " rows, factor has " +
                           std::to_string(rows_));
    }
  }

  void check_rhs(Index r) const {
    if (r != cols_) {
      throw DimensionError("block_banded_qr: triangular solve rhs has " + std::to_string(r) + " rows, R is " +
                           shape_string(cols_, cols_));
    }
  }

  Index wy_width_ = 0;
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Step> steps_;
  std::vector<Scalar> diag_;
  Permutation output_order_;
  Permutation input_order_;
  Scalar r_max_ = Scalar(0);
};

template <RealScalar Scalar>
BlockBandedQR<Scalar> block_banded_qr(const BandedBlockMatrix<Scalar>& a, Index wy_width = 0) {
  BlockBandedQR<Scalar> f(wy_width);
  f.compute(a);
  return f;
}

}  // namespace qrkit
