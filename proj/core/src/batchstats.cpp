#include "pssl/batchstats.hpp"

#include <cmath>

namespace pssl::stats {

void check_batch(const Matrix& x, const char* what) {
  require(x.rows() >= 1 && x.cols() >= 1, std::string(what) + ": empty batch");
  require(x.allFinite(), std::string(what) + ": batch contains non-finite entries");
}

Matrix center(const Matrix& x) {
  check_batch(x, "center");
  return x.rowwise() - x.colwise().mean();
}

RowVector column_std(const Matrix& x, double eps, Denominator denom) {
  check_batch(x, "column_std");
  require(eps >= 0.0, "column_std: eps must be non-negative");
  const Index n = x.rows();
  if (denom == Denominator::n_minus_1) require(n >= 2, "column_std: n-1 denominator needs at least 2 rows");
  const double d = denom == Denominator::n ? double(n) : double(n - 1);
  const Matrix c = center(x);
  RowVector var = c.array().square().colwise().sum() / d;
  return (var.array() + eps).sqrt();
}

Matrix covariance_matrix(const Matrix& x) {
  check_batch(x, "covariance_matrix");
  require(x.rows() >= 2, "covariance_matrix: needs at least 2 rows");
  const Matrix c = center(x);
  return (c.transpose() * c) / double(x.rows() - 1);
}

Matrix cross_correlation(const Matrix& za, const Matrix& zb, double eps) {
  check_batch(za, "cross_correlation");
  check_batch(zb, "cross_correlation");
  require(za.rows() == zb.rows() && za.cols() == zb.cols(), "cross_correlation: batches differ in shape");
  require(za.rows() >= 2, "cross_correlation: needs at least 2 rows");
  require(eps >= 0.0, "cross_correlation: eps must be non-negative");
  const RowVector sa = column_std(za, eps, Denominator::n_minus_1);
  const RowVector sb = column_std(zb, eps, Denominator::n_minus_1);
  if (eps == 0.0) {
    require((sa.array() > 0.0).all() && (sb.array() > 0.0).all(),
            "cross_correlation: zero-variance column with eps = 0");
  }
  const Matrix cov = center(za).transpose() * center(zb) / double(za.rows() - 1);
  return cov.array() / (sa.transpose() * sb).array();
}

}  // namespace pssl::stats
