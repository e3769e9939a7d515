#include <qrkit/core/matrix_market.hpp>
#include <qrkit/core/permutation.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "support/oracles.hpp"

using namespace qrkit;

namespace {

template <class Scalar>
DenseMatrix<Scalar> naive_matmul(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  DenseMatrix<Scalar> c(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      Scalar s(0);
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Permutation random_permutation(Index n, std::mt19937_64& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  return Permutation(order);
}

}  // namespace

TEST(DenseMatrix, ShapeAndStorageInvariants) {
  DenseMatrix<double> a(3, 2);
  EXPECT_EQ(a.rows(), 3);
  EXPECT_EQ(a.cols(), 2);
  EXPECT_EQ(static_cast<Index>(a.values().size()), 6);
  EXPECT_THROW(DenseMatrix<double>(-1, 2), DimensionError);
  EXPECT_THROW(DenseMatrix<double>(2, 2, std::vector<double>(3)), DimensionError);
  DenseMatrix<float> empty(0, 4);
  EXPECT_TRUE(empty.empty());
}

TEST(DenseMatrix, ColumnMajorLayout) {
  auto a = DenseMatrix<double>::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(a.values()[0], 1);
  EXPECT_EQ(a.values()[1], 3);
  EXPECT_EQ(a.values()[2], 2);
}

TEST(Matmul, IdentityTimesColumn) {
  auto b = DenseMatrix<double>::from_rows({{1}, {2}});
  EXPECT_EQ(matmul(DenseMatrix<double>::identity(2), b), b);
}

TEST(Matmul, ColumnSelection) {
  auto a = DenseMatrix<double>::from_rows({{1, 2}, {3, 4}});
  auto e = DenseMatrix<double>::from_rows({{0}, {1}});
  EXPECT_EQ(matmul(a, e), DenseMatrix<double>::from_rows({{2}, {4}}));
}

TEST(Matmul, RandomMatchesTripleLoopExactly) {
  std::mt19937_64 rng(7);
  auto a = oracle::random_matrix<double>(5, 4, rng);
  auto b = oracle::random_matrix<double>(4, 3, rng);
  EXPECT_EQ(matmul(a, b), naive_matmul(a, b));
}

TEST(Matmul, MismatchNamesBothShapes) {
  DenseMatrix<double> a(2, 3), b(2, 2);
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativityWithinTolerance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_matrix<float>(6, 5, rng);
    auto b = oracle::random_matrix<float>(5, 4, rng);
    auto c = oracle::random_matrix<float>(4, 3, rng);
    const auto lhs = matmul(matmul(a, b), c);
    const auto rhs = matmul(a, matmul(b, c));
    const float tol = 8 * machine_epsilon<float>() * frobenius_norm(a) * frobenius_norm(b) * frobenius_norm(c);
    EXPECT_LE(frobenius_norm(lhs - rhs), tol);
  }
}

TEST(Permutation, RejectsNonBijection) {
  EXPECT_THROW(Permutation(std::vector<Index>{0, 0}), StructureError);
  EXPECT_THROW(Permutation(std::vector<Index>{0, 2}), StructureError);
}

TEST(Permutation, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(3);
  auto a = oracle::random_matrix<double>(4, 3, rng);
  EXPECT_EQ(apply_row_permutation(Permutation::identity(4), a), a);
}

TEST(Permutation, ReversalOfColumn) {
  auto a = DenseMatrix<double>::from_rows({{1}, {2}, {3}});
  Permutation rev(std::vector<Index>{2, 1, 0});
  EXPECT_EQ(apply_row_permutation(rev, a), DenseMatrix<double>::from_rows({{3}, {2}, {1}}));
}

TEST(Permutation, RoundTripThroughInverse) {
  std::mt19937_64 rng(5);
  auto a = oracle::random_matrix<double>(6, 3, rng);
  auto p = random_permutation(6, rng);
  EXPECT_EQ(apply_row_permutation(p.inverse(), apply_row_permutation(p, a)), a);
}

TEST(Permutation, CompositionMatchesSequentialApplication) {
  std::mt19937_64 rng(9);
  auto a = oracle::random_matrix<double>(7, 2, rng);
  auto p1 = random_permutation(7, rng);
  auto p2 = random_permutation(7, rng);
  EXPECT_EQ(apply_row_permutation(p2, apply_row_permutation(p1, a)), apply_row_permutation(compose(p2, p1), a));
}

TEST(Permutation, LengthMismatchIsRejected) {
  DenseMatrix<double> a(3, 1);
  EXPECT_THROW(apply_row_permutation(Permutation::identity(4), a), DimensionError);
}

TEST(Permutation, FrobeniusNormPreservedBitExactly) {
  std::mt19937_64 rng(13);
  auto a = oracle::random_matrix<float>(9, 4, rng);
  auto p = random_permutation(9, rng);
  const auto b = apply_row_permutation(p, a);
  auto sorted_values = [](const DenseMatrix<float>& m) {
    std::vector<float> v(m.values().begin(), m.values().end());
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(sorted_values(a), sorted_values(b));
}

TEST(Permutation, StructuredTypesCommuteWithDensification) {
  std::mt19937_64 rng(17);
  BlockDiagonalMatrix<double> bd({oracle::random_matrix<double>(3, 2, rng), oracle::random_matrix<double>(2, 1, rng)});
  auto p = random_permutation(bd.rows(), rng);
  EXPECT_EQ(to_dense(apply_row_permutation(p, bd)), apply_row_permutation(p, to_dense(bd)));

  BandedBlockMatrix<double> band({oracle::random_matrix<double>(3, 2, rng), oracle::random_matrix<double>(3, 3, rng)},
                                 {1});
  auto q = random_permutation(band.rows(), rng);
  EXPECT_EQ(to_dense(apply_row_permutation(q, band)), apply_row_permutation(q, to_dense(band)));

  auto t = to_triplets(band);
  EXPECT_EQ(to_dense(apply_row_permutation(q, t)), apply_row_permutation(q, to_dense(t)));
}

TEST(ToDense, BlockDiagonal) {
  BlockDiagonalMatrix<double> bd({DenseMatrix<double>::from_rows({{1}}), DenseMatrix<double>::from_rows({{2}})});
  EXPECT_EQ(to_dense(bd), DenseMatrix<double>::from_rows({{1, 0}, {0, 2}}));
}

TEST(ToDense, TripletDuplicatesAreSummed) {
  TripletMatrix<double> t(1, 1);
  t.add(0, 0, 1);
  t.add(0, 0, 2);
  EXPECT_EQ(to_dense(t), DenseMatrix<double>::from_rows({{3}}));
  EXPECT_EQ(t.compressed().nonzeros(), 1);
}

TEST(ToDense, BandedSharesOneColumn) {
  auto b0 = DenseMatrix<double>::from_rows({{1, 2}, {3, 4}});
  auto b1 = DenseMatrix<double>::from_rows({{5, 6}, {7, 8}});
  BandedBlockMatrix<double> band({b0, b1}, {1});
  EXPECT_EQ(band.col_offset(1), 1);
  EXPECT_EQ(to_dense(band), DenseMatrix<double>::from_rows({{1, 2, 0}, {3, 4, 0}, {0, 5, 6}, {0, 7, 8}}));
}

TEST(BandedBlockMatrix, OverlapBoundIsChecked) {
  DenseMatrix<double> b0(2, 2), b1(2, 1);
  EXPECT_THROW(BandedBlockMatrix<double>({b0, b1}, {2}), StructureError);
  EXPECT_THROW(BandedBlockMatrix<double>({b0, b1}, {}), StructureError);
}

TEST(TripletMatrix, OutOfBoundsEntryIsRejected) {
  TripletMatrix<double> t(2, 2);
  EXPECT_THROW(t.add(2, 0, 1.0), DimensionError);
  EXPECT_THROW(t.add(0, -1, 1.0), DimensionError);
}

TEST(MatrixMarket, RoundTripIsExact) {
  std::mt19937_64 rng(21);
  auto t = to_triplets(oracle::random_matrix<double>(4, 3, rng));
  std::stringstream ss;
  write_matrix_market(ss, t);
  const auto back = read_matrix_market<double>(ss);
  EXPECT_EQ(to_dense(back), to_dense(t));
}

TEST(MatrixMarket, ReportsLineOfMalformedEntry) {
  std::stringstream ss("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n3 1 2.0\n");
  try {
    read_matrix_market<double>(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(MatrixMarket, RejectsUnsupportedHeader) {
  std::stringstream ss("%%MatrixMarket matrix array real general\n1 1\n1.0\n");
  EXPECT_THROW(read_matrix_market<double>(ss), ParseError);
}
