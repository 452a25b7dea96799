#include "pssl/batchstats.hpp"

#include "test_support.hpp"

#include <cmath>

using namespace pssl;
using pssl::testing::mat;

namespace {

Matrix brute_cov(const Matrix& x) {
  const Index n = x.rows(), d = x.cols();
  Matrix c(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      double mi = 0, mj = 0;
      for (Index r = 0; r < n; ++r) {
        mi += x(r, i);
        mj += x(r, j);
      }
      mi /= n;
      mj /= n;
      double s = 0;
      for (Index r = 0; r < n; ++r) s += (x(r, i) - mi) * (x(r, j) - mj);
      c(i, j) = s / (n - 1);
    }
  return c;
}

double pearson(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  double sab = 0, saa = 0, sbb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    sab += (a(i) - ma) * (b(i) - mb);
    saa += (a(i) - ma) * (a(i) - ma);
    sbb += (b(i) - mb) * (b(i) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Center, Examples) {
  EXPECT_TRUE(stats::center(mat({{1, 2}, {3, 4}})).isApprox(mat({{-1, -1}, {1, 1}})));
  EXPECT_TRUE(stats::center(Matrix::Zero(4, 3)).isZero(0));
  EXPECT_TRUE(stats::center(mat({{5, 7}})).isZero(0));
}

TEST(Center, ZeroMeanAndIdempotent) {
  Rng rng(3);
  const Matrix x = rng.normal_matrix(17, 5) * 3.0;
  const Matrix c = stats::center(x);
  EXPECT_LT(c.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((stats::center(c) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ColumnStd, Examples) {
  const Matrix x = mat({{0}, {2}});
  EXPECT_DOUBLE_EQ(stats::column_std(x, 0.0, stats::Denominator::n)(0), 1.0);
  EXPECT_NEAR(stats::column_std(x, 0.0, stats::Denominator::n_minus_1)(0), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(stats::column_std(Matrix::Constant(5, 1, 3.0), 1e-4, stats::Denominator::n_minus_1)(0), 0.01, 1e-12);
}

TEST(ColumnStd, RejectsSingleRowSampleDenominator) {
  EXPECT_THROW(stats::column_std(mat({{1, 2}}), 0.0, stats::Denominator::n_minus_1), InvalidArgument);
}

TEST(ColumnStd, PermutationInvariantAndFloor) {
  Rng rng(5);
  const Matrix x = rng.normal_matrix(12, 4);
  const auto perm = rng.permutation(12);
  Matrix xp(12, 4);
  for (Index i = 0; i < 12; ++i) xp.row(i) = x.row(static_cast<Index>(perm[static_cast<std::size_t>(i)]));
  const RowVector a = stats::column_std(x, 1e-4, stats::Denominator::n_minus_1);
  const RowVector b = stats::column_std(xp, 1e-4, stats::Denominator::n_minus_1);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(a.minCoeff(), 0.01);
}

TEST(Covariance, Examples) {
  EXPECT_TRUE(stats::covariance_matrix(mat({{1, 1}, {-1, -1}})).isApprox(mat({{2, 2}, {2, 2}})));
  Rng rng(9);
  Matrix x = rng.normal_matrix(6, 3);
  x.col(1).setConstant(4.0);
  const Matrix c = stats::covariance_matrix(x);
  EXPECT_TRUE(c.row(1).isZero(1e-14));
  EXPECT_TRUE(c.col(1).isZero(1e-14));
  EXPECT_THROW(stats::covariance_matrix(mat({{1, 2}})), InvalidArgument);
}

TEST(Covariance, MatchesBruteForce) {
  Rng rng(11);
  const Matrix x = rng.normal_matrix(64, 8);
  const Matrix c = stats::covariance_matrix(x);
  EXPECT_LT((c - brute_cov(x)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(Covariance, TranslationInvariant) {
  Rng rng(12);
  const Matrix x = rng.normal_matrix(20, 5);
  const RowVector shift = rng.normal_matrix(1, 5) * 10.0;
  const Matrix y = x.rowwise() + shift;
  EXPECT_LT((stats::covariance_matrix(x) - stats::covariance_matrix(y)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CrossCorrelation, Examples) {
  const Matrix z = mat({{1, 1}, {-1, -1}});
  EXPECT_TRUE(stats::cross_correlation(z, z, 0.0).isApprox(mat({{1, 1}, {1, 1}})));
  const Matrix za = mat({{1}, {-1}});
  EXPECT_NEAR(stats::cross_correlation(za, -za, 0.0)(0, 0), -1.0, 1e-15);
}

TEST(CrossCorrelation, ZeroVarianceWithoutEpsThrows) {
  EXPECT_THROW(stats::cross_correlation(mat({{1, 0}, {-1, 0}}), mat({{1, 2}, {-1, 3}}), 0.0), InvalidArgument);
}

TEST(CrossCorrelation, MatchesPearsonAndBounded) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix za = rng.normal_matrix(16, 5);
    const Matrix zb = 0.5 * za + rng.normal_matrix(16, 5);
    const Matrix r = stats::cross_correlation(za, zb, 0.0);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) {
        EXPECT_NEAR(r(i, j), pearson(za.col(i), zb.col(j)), 1e-8);
        EXPECT_LE(std::abs(r(i, j)), 1.0 + 1e-6);
      }
    EXPECT_LT((stats::cross_correlation(za, za, 0.0).diagonal().array() - 1.0).abs().maxCoeff(), 1e-8);
  }
}

TEST(CheckBatch, RejectsNonFinite) {
  Matrix x = Matrix::Ones(3, 2);
  x(1, 1) = std::nan("");
  EXPECT_THROW(stats::check_batch(x, "x"), InvalidArgument);
  EXPECT_THROW(stats::check_batch(Matrix(0, 2), "x"), InvalidArgument);
}
