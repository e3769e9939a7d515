#pragma once

// Generic checks of the factorization contract against a dense operand.

#include <qrkit/qr/qr_solver.hpp>

#include "support/oracles.hpp"

namespace qrkit::oracle {

struct ContractErrors {
  double orthogonality = 0;    // ||Q^T Q - I||_max
  double reconstruction = 0;   // ||A - Q R||_F / ||A||_F
  double round_trip = 0;       // ||Q (Q^T B) - B||_max per unit column
  double least_squares = 0;    // relative error vs the dense oracle
};

template <QRFactorization F>
ContractErrors check_contract(const F& f, const DenseMatrix<typename F::scalar_type>& a,
                              const DenseMatrix<typename F::scalar_type>& b, bool solve = true) {
  using S = typename F::scalar_type;
  ContractErrors e;
  const auto q = materialize_q(f);
  e.orthogonality = static_cast<double>(max_abs(matmul_tn(q, q) - DenseMatrix<S>::identity(q.cols())));
  const auto qr = matmul(q, full_r(f));
  const double anorm = static_cast<double>(frobenius_norm(a));
  e.reconstruction = static_cast<double>(frobenius_norm(a - qr)) / (anorm == 0 ? 1 : anorm);
  const auto back = q_apply(f, q_transpose_apply(f, b));
  e.round_trip = static_cast<double>(max_abs(back - b));
  if (solve && f.economy_rows() == f.cols() && f.cols() > 0) {
    const auto x = solve_least_squares(f, b);
    e.least_squares = relative_error(to_eigen(x), least_squares_oracle(a, b));
  }
  return e;
}

}  // namespace qrkit::oracle
