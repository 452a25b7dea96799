#pragma once

// Batch statistics over an n x d embedding batch (rows are samples).

#include "pssl/common.hpp"

namespace pssl::stats {

enum class Denominator { n, n_minus_1 };

inline constexpr double kDefaultVarianceEps = 1e-4;
inline constexpr double kDefaultCorrelationEps = 1e-12;

// Throws unless every entry is finite and the batch is non-empty.
void check_batch(const Matrix& x, const char* what);

Matrix center(const Matrix& x);

// sqrt(Var_j + eps) per column.
RowVector column_std(const Matrix& x, double eps, Denominator denom);

// (1/(n-1)) * center(x)^T center(x).
Matrix covariance_matrix(const Matrix& x);

// Pearson cross-correlation between the columns of za and zb. eps is added to
// each variance under the square root; with eps == 0 a constant column throws.
Matrix cross_correlation(const Matrix& za, const Matrix& zb, double eps = kDefaultCorrelationEps);

}  // namespace pssl::stats
