#pragma once

// Out-of-distribution scores and AUROC. Every detector is oriented so that a
// higher score means "more likely OOD".

#include "pssl/evalprobe.hpp"
#include "pssl/gaussdist.hpp"
#include "pssl/models.hpp"

#include <string>
#include <vector>

namespace pssl::ood {

enum class Detector { sigma_mean, sigma_std, mahalanobis, max_softmax, entropy, odin };

std::string to_string(Detector d);
Detector parse_detector(const std::string& s);
const std::vector<Detector>& all_detectors();
// Only defined for stochastic variants.
bool needs_sigma(Detector d);

Vector sigma_mean_score(const Matrix& sigma);
Vector sigma_mean_score(const gauss::DiagGaussianBatch& dist);
// Population standard deviation over dimensions. With d == 1 every score is 0.
Vector sigma_std_score(const Matrix& sigma);
Vector sigma_std_score(const gauss::DiagGaussianBatch& dist);

struct MahalanobisFit {
  RowVector mean;
  Matrix precision;
};

inline constexpr double kDefaultShrinkage = 0.05;

// Covariance (1 - rho) S + rho diag(S), inverted once. Needs >= d + 1 rows.
MahalanobisFit mahalanobis_fit(const Matrix& train_features, double rho = kDefaultShrinkage);
Vector mahalanobis_score(const MahalanobisFit& fit, const Matrix& features);

Matrix softmax_rows(const Matrix& logits);
// 1 - max softmax.
Vector max_softmax_score(const Matrix& logits);
// Shannon entropy of the softmax, natural log.
Vector entropy_score(const Matrix& logits);

struct OdinConfig {
  double temperature = 1000.0;
  double epsilon = 0.0014;
};

// Perturbs x against the gradient of -log max softmax(logits / T), then scores
// 1 - max softmax(logits / T) on the perturbed input.
Vector odin_score(const models::Model& model, ParamStore& params, const eval::LinearHead& head, const Matrix& x,
                  const OdinConfig& config = {});

// P(out > in) + 0.5 P(out == in), from rank sums with tied ranks averaged.
double auroc(const Vector& in_scores, const Vector& out_scores);
// Direct pairwise count; quadratic, used as an oracle.
double auroc_pairwise(const Vector& in_scores, const Vector& out_scores);

}  // namespace pssl::ood
