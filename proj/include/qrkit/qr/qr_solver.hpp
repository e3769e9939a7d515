#pragma once

// The contract every factorization in the kit satisfies, and the generic
// operations built on it.
//
//   rows(), cols()          shape of the factored matrix A (n x m)
//   economy_rows()          leading rows of the Q^T output that carry R
//   apply_qt(B) / apply_q   full n x n Q^T B / Q B, in place
//   solve_r / solve_rt      R^{-1} x and R^{-T} x on the top cols() rows
//   r_max_abs()             largest |R_ij|, for the singularity threshold
//   r_triplets()            R as coordinates (economy_rows x cols)
//   q_storage_scalars()     scalars stored to represent Q

#include <qrkit/qr/householder.hpp>

#include <concepts>
#include <memory>

namespace qrkit {

template <class F>
concept QRFactorization = requires(const F& f, MatrixView<typename F::scalar_type> b,
                                   typename F::scalar_type threshold) {
  { f.rows() } -> std::convertible_to<Index>;
  { f.cols() } -> std::convertible_to<Index>;
  { f.economy_rows() } -> std::convertible_to<Index>;
  f.apply_qt(b);
  f.apply_q(b);
  f.solve_r(b, threshold);
  f.solve_rt(b, threshold);
  { f.r_max_abs() } -> std::convertible_to<typename F::scalar_type>;
  { f.r_triplets() } -> std::same_as<TripletMatrix<typename F::scalar_type>>;
  { f.q_storage_scalars() } -> std::convertible_to<Index>;
};

template <QRFactorization F>
DenseMatrix<typename F::scalar_type> q_transpose_apply(const F& f, DenseMatrix<typename F::scalar_type> b) {
  f.apply_qt(b.view());
  return b;
}

template <QRFactorization F>
DenseMatrix<typename F::scalar_type> q_apply(const F& f, DenseMatrix<typename F::scalar_type> b) {
  f.apply_q(b.view());
  return b;
}

/// Full n x n Q, by applying the implicit Q to the identity. Debug/oracle aid.
template <QRFactorization F>
DenseMatrix<typename F::scalar_type> materialize_q(const F& f) {
  return q_apply(f, DenseMatrix<typename F::scalar_type>::identity(f.rows()));
}

/// Dense R padded with zero rows to n x m (the "full" R).
template <QRFactorization F>
DenseMatrix<typename F::scalar_type> full_r(const F& f) {
  DenseMatrix<typename F::scalar_type> r(f.rows(), f.cols());
  const auto triplets = f.r_triplets();
  for (const auto& t : triplets.entries()) r(t.row, t.col) += t.value;
  return r;
}

/// x = argmin ||A x - b||: Q^T b, then back substitution with R.
template <QRFactorization F>
DenseMatrix<typename F::scalar_type> solve_least_squares(const F& f, const DenseMatrix<typename F::scalar_type>& b) {
  using Scalar = typename F::scalar_type;
  if (b.rows() != f.rows()) {
    throw DimensionError("solve_least_squares: b is " + shape_string(b.rows(), b.cols()) + ", factor has " +
                         std::to_string(f.rows()) + " rows");
  }
  if (f.economy_rows() < f.cols()) {
    throw DimensionError("solve_least_squares: factor of " + shape_string(f.rows(), f.cols()) +
                         " is not portrait");
  }
  DenseMatrix<Scalar> qtb = q_transpose_apply(f, b);
  DenseMatrix<Scalar> x = qtb.block(0, 0, f.cols(), b.cols());
  f.solve_r(x.view(), default_singular_threshold(f.r_max_abs()));
  return x;
}

/// Runtime-dispatch wrapper over any factorization (used by the CLI).
template <RealScalar Scalar>
class AnyQR {
 public:
  using scalar_type = Scalar;

  AnyQR() = default;

  template <QRFactorization F>
    requires std::same_as<typename F::scalar_type, Scalar>
  explicit AnyQR(F factor) : impl_(std::make_shared<Model<F>>(std::move(factor))) {}

  Index rows() const { return impl_->rows(); }
  Index cols() const { return impl_->cols(); }
  Index economy_rows() const { return impl_->economy_rows(); }
  void apply_qt(MatrixView<Scalar> b) const { impl_->apply_qt(b); }
  void apply_q(MatrixView<Scalar> b) const { impl_->apply_q(b); }
  void solve_r(MatrixView<Scalar> b, Scalar threshold) const { impl_->solve_r(b, threshold); }
  void solve_rt(MatrixView<Scalar> b, Scalar threshold) const { impl_->solve_rt(b, threshold); }
  Scalar r_max_abs() const { return impl_->r_max_abs(); }
  TripletMatrix<Scalar> r_triplets() const { return impl_->r_triplets(); }
  Index q_storage_scalars() const { return impl_->q_storage_scalars(); }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual Index rows() const = 0;
    virtual Index cols() const = 0;
    virtual Index economy_rows() const = 0;
    virtual void apply_qt(MatrixView<Scalar>) const = 0;
    virtual void apply_q(MatrixView<Scalar>) const = 0;
    virtual void solve_r(MatrixView<Scalar>, Scalar) const = 0;
    virtual void solve_rt(MatrixView<Scalar>, Scalar) const = 0;
    virtual Scalar r_max_abs() const = 0;
    virtual TripletMatrix<Scalar> r_triplets() const = 0;
    virtual Index q_storage_scalars() const = 0;
  };

  template <class F>
  struct Model final : Concept {
    explicit Model(F f) : factor(std::move(f)) {}
    Index rows() const override { return factor.rows(); }
    Index cols() const override { return factor.cols(); }
    Index economy_rows() const override { return factor.economy_rows(); }
    void apply_qt(MatrixView<Scalar> b) const override { factor.apply_qt(b); }
    void apply_q(MatrixView<Scalar> b) const override { factor.apply_q(b); }
    void solve_r(MatrixView<Scalar> b, Scalar t) const override { factor.solve_r(b, t); }
    void solve_rt(MatrixView<Scalar> b, Scalar t) const override { factor.solve_rt(b, t); }
    Scalar r_max_abs() const override { return factor.r_max_abs(); }
    TripletMatrix<Scalar> r_triplets() const override { return factor.r_triplets(); }
    Index q_storage_scalars() const override { return factor.q_storage_scalars(); }
    F factor;
  };

  std::shared_ptr<const Concept> impl_;
};

}  // namespace qrkit
