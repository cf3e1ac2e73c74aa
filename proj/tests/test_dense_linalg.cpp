#include <gtest/gtest.h>

#include <cmath>

#include "hpca/dense_linalg.hpp"
#include "hpca/errors.hpp"
#include "hpca/random.hpp"
#include "test_support.hpp"

using namespace hpca;

namespace {

DenseMatrix random_symmetric(std::size_t n, std::uint64_t seed) {
  const auto g = gaussian_matrix(n, n, seed);
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = g(i, j) + g(j, i);
  return a;
}

DenseMatrix reconstruct(const EigenDecomposition& e) {
  DenseMatrix vl = e.eigenvectors;
  for (std::size_t r = 0; r < vl.rows(); ++r)
    for (std::size_t c = 0; c < vl.cols(); ++c) vl(r, c) *= e.eigenvalues[c];
  return multiply(vl, e.eigenvectors.transpose());
}

double fro_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.data().size(); ++t) s += (a.data()[t] - b.data()[t]) * (a.data()[t] - b.data()[t]);
  return std::sqrt(s);
}

void expect_sign_convention(const DenseMatrix& v) {
  for (std::size_t c = 0; c < v.cols(); ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < v.rows(); ++r)
      if (std::abs(v(r, c)) > std::abs(v(best, c))) best = r;
    EXPECT_GE(v(best, c), 0.0);
  }
}

}  // namespace

TEST(Gaussian, DeterministicAndSeedSensitive) {
  EXPECT_EQ(gaussian_matrix(7, 5, 1), gaussian_matrix(7, 5, 1));
  EXPECT_NE(gaussian_matrix(7, 5, 1), gaussian_matrix(7, 5, 2));
}

TEST(Gaussian, MomentsWithinStandardErrorBands) {
  const auto g = gaussian_matrix(1000, 100, 2024);
  double sum = 0.0, sum2 = 0.0;
  for (double v : g.data()) {
    sum += v;
    sum2 += v * v;
  }
  const double n = 1e5;
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  EXPECT_LE(std::abs(mean), 3.0 / std::sqrt(n));
  EXPECT_LE(std::abs(var - 1.0), 3.0 * std::sqrt(2.0 / n));
}

TEST(GramSchmidt, IdentityStaysIdentity) { EXPECT_EQ(gram_schmidt(DenseMatrix::identity(2)), DenseMatrix::identity(2)); }

TEST(GramSchmidt, HandCase) {
  const DenseMatrix y(2, 2, {3, 1, 4, 1});
  const auto q = gram_schmidt(y);
  EXPECT_NEAR(q(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(q(1, 0), 0.8, 1e-15);
  EXPECT_NEAR(q(0, 1), 0.8, 1e-15);
  EXPECT_NEAR(q(1, 1), -0.6, 1e-15);
}

TEST(GramSchmidt, DuplicateColumnIsRankDeficient) {
  const DenseMatrix y(3, 2, {1, 1, 2, 2, 3, 3});
  try {
    gram_schmidt(y);
    FAIL();
  } catch (const RankDeficient& e) {
    EXPECT_EQ(e.column(), 1u);
    EXPECT_EQ(e.category(), ErrorCategory::kNumeric);
  }
}

TEST(GramSchmidt, RandomSizesOrthonormalAndSpanning) {
  std::uint64_t seed = 100;
  for (std::size_t d : {8u, 64u, 512u}) {
    for (std::size_t k : {1u, 4u, 16u}) {
      if (k > d) continue;
      const auto y = gaussian_matrix(d, k, ++seed);
      const auto q = gram_schmidt(y);
      EXPECT_LE(orthonormality_error(q), 1e-10);
      const auto residual = multiply(q, multiply_at_b(q, y));
      EXPECT_LE(fro_diff(residual, y), 1e-9 * frobenius_norm(y));
    }
  }
}

TEST(GramSchmidt, IllConditionedInputStaysOrthonormal) {
  // Columns nearly parallel: classical GS loses orthogonality here, two passes do not.
  auto y = gaussian_matrix(200, 6, 9);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = 1; c < 6; ++c) y(r, c) = y(r, 0) + 1e-7 * y(r, c);
  EXPECT_LE(orthonormality_error(gram_schmidt(y)), 1e-10);
}

TEST(SymEig, Diagonal) {
  const auto e = sym_eig(DenseMatrix(2, 2, {2, 0, 0, 1}));
  EXPECT_EQ(e.eigenvalues, (std::vector<double>{2, 1}));
  EXPECT_EQ(e.eigenvectors, DenseMatrix::identity(2));
}

TEST(SymEig, SwapMatrix) {
  const auto e = sym_eig(DenseMatrix(2, 2, {0, 1, 1, 0}));
  EXPECT_NEAR(e.eigenvalues[0], 1.0, 1e-15);
  EXPECT_NEAR(e.eigenvalues[1], -1.0, 1e-15);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), s, 1e-15);
  EXPECT_NEAR(e.eigenvectors(0, 0), e.eigenvectors(1, 0), 1e-15);
  EXPECT_NEAR(e.eigenvectors(0, 1), -e.eigenvectors(1, 1), 1e-15);
  expect_sign_convention(e.eigenvectors);
}

TEST(SymEig, CharacteristicPolynomialCase) {
  const auto e = sym_eig(DenseMatrix(2, 2, {2, 1, 1, 2}));
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-14);
}

TEST(SymEig, TiesKeepOriginalOrder) {
  const auto e = sym_eig(DenseMatrix(3, 3, {1, 0, 0, 0, 5, 0, 0, 0, 1}));
  EXPECT_EQ(e.eigenvalues, (std::vector<double>{5, 1, 1}));
  EXPECT_EQ(e.eigenvectors(1, 0), 1.0);
  EXPECT_EQ(e.eigenvectors(0, 1), 1.0);
  EXPECT_EQ(e.eigenvectors(2, 2), 1.0);
}

TEST(SymEig, RejectsAsymmetricAndNonSquare) {
  EXPECT_THROW(sym_eig(DenseMatrix(2, 2, {1, 1, 0, 1})), AsymmetricMatrix);
  EXPECT_THROW(sym_eig(DenseMatrix(2, 3)), DimensionError);
}

TEST(SymEig, TinyAsymmetryIsSymmetrized) {
  const auto e = sym_eig(DenseMatrix(2, 2, {2, 1, 1 + 1e-12, 2}));
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-11);
}

TEST(SymEig, ThousandRandomMatricesReconstruct) {
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 32;
    const auto a = random_symmetric(n, 5000 + t);
    const auto e = sym_eig(a);
    ASSERT_LE(fro_diff(reconstruct(e), a), 1e-9 * frobenius_norm(a)) << "trial " << t;
    ASSERT_LE(orthonormality_error(e.eigenvectors), 1e-10);
    ASSERT_TRUE(std::is_sorted(e.eigenvalues.rbegin(), e.eigenvalues.rend()));
  }
}

TEST(SymEig, AgreesWithOracleSingularValuesSquared) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto x = gaussian_matrix(12 + t, 7, 300 + t);
    const auto e = sym_eig(multiply_at_b(x, x));
    const auto svd = oracle_svd(x);
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_NEAR(e.eigenvalues[j], svd.sigma[j] * svd.sigma[j], 1e-8 * e.eigenvalues[0]);
    }
  }
}

TEST(SymEigTridiagonal, MatchesJacobi) {
  for (std::uint64_t t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 40;
    const auto a = random_symmetric(n, 9000 + t);
    const auto ql = sym_eig_tridiagonal(a);
    const auto jac = sym_eig(a);
    ASSERT_LE(fro_diff(reconstruct(ql), a), 1e-9 * frobenius_norm(a));
    ASSERT_LE(orthonormality_error(ql.eigenvectors), 1e-10);
    for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(ql.eigenvalues[j], jac.eigenvalues[j], 1e-10 * frobenius_norm(a));
    expect_sign_convention(ql.eigenvectors);
  }
}

TEST(SymEigTridiagonal, HandlesZeroAndDiagonalMatrices) {
  const auto z = sym_eig_tridiagonal(DenseMatrix(3, 3));
  EXPECT_EQ(z.eigenvalues, (std::vector<double>(3, 0.0)));
  const auto d = sym_eig_tridiagonal(DenseMatrix(3, 3, {1, 0, 0, 0, 3, 0, 0, 0, 2}));
  EXPECT_EQ(d.eigenvalues, (std::vector<double>{3, 2, 1}));
}

TEST(PinvDiag, Cases) {
  EXPECT_EQ(pinv_diag(std::vector<double>{2, 0}), (std::vector<double>{0.5, 0}));
  EXPECT_EQ(pinv_diag(std::vector<double>{0, 0}), (std::vector<double>{0, 0}));
  EXPECT_EQ(pinv_diag(std::vector<double>{1, 1e-15}), (std::vector<double>{1, 0}));
  EXPECT_EQ(pinv_diag(std::vector<double>{1, 2e-12}), (std::vector<double>{1, 5e11}));
  EXPECT_THROW(pinv_diag(std::vector<double>{1, -1}), NumericError);
}

TEST(OracleSvd, HandCases) {
  const auto d = oracle_svd(DenseMatrix(2, 2, {3, 0, 0, 2}));
  EXPECT_NEAR(d.sigma[0], 3.0, 1e-14);
  EXPECT_NEAR(d.sigma[1], 2.0, 1e-14);

  const double s = 1.0 / std::sqrt(2.0);
  const DenseMatrix uvt(2, 3, {s * 0.6, s * 0.8, 0, s * 0.6, s * 0.8, 0});
  const auto r1 = oracle_svd(uvt);
  EXPECT_NEAR(r1.sigma[0], 1.0, 1e-14);
  EXPECT_LE(r1.sigma[1], 1e-14);
}

TEST(OracleSvd, ReconstructsAndIsOrthonormal) {
  for (auto [n, p] : std::vector<std::pair<std::size_t, std::size_t>>{{10, 4}, {4, 10}, {30, 30}, {1, 5}}) {
    const auto x = gaussian_matrix(n, p, n * 100 + p);
    const auto svd = oracle_svd(x);
    DenseMatrix us = svd.u;
    for (std::size_t r = 0; r < us.rows(); ++r)
      for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= svd.sigma[c];
    EXPECT_LE(fro_diff(multiply(us, svd.v.transpose()), x), 1e-8 * frobenius_norm(x));
    EXPECT_LE(orthonormality_error(svd.u), 1e-10);
    EXPECT_LE(orthonormality_error(svd.v), 1e-10);
  }
}

TEST(OracleSvd, RankDeficientInputStillOrthonormal) {
  const auto a = gaussian_matrix(20, 2, 1);
  const auto b = gaussian_matrix(2, 15, 2);
  const auto svd = oracle_svd(multiply(a, b));
  EXPECT_LE(svd.sigma[2], 1e-12 * svd.sigma[0]);
  EXPECT_LE(orthonormality_error(svd.u), 1e-10);
  EXPECT_LE(orthonormality_error(svd.v), 1e-10);
}

TEST(OracleSvd, SizeGuard) { EXPECT_THROW(oracle_svd(DenseMatrix(1001, 1000)), GuardError); }

TEST(DenseMatrix, BasicOps) {
  const DenseMatrix a(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(a.transpose(), DenseMatrix(3, 2, {1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(multiply(a, a.transpose()), DenseMatrix(2, 2, {14, 32, 32, 77}));
  EXPECT_EQ(multiply_at_b(a, a), multiply(a.transpose(), a));
  EXPECT_EQ(a.column(1), (std::vector<double>{2, 5}));
  EXPECT_THROW(DenseMatrix(2, 2, {1, 2, 3}), DimensionError);
  EXPECT_THROW(multiply(a, a), DimensionError);
}
