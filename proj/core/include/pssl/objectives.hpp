#pragma once

// Barlow Twins and VICReg terms, the KL bottleneck and the Monte Carlo
// expectation wrapper used by the probabilistic variants.

#include "pssl/autodiff.hpp"
#include "pssl/batchstats.hpp"
#include "pssl/forward.hpp"
#include "pssl/gaussdist.hpp"

#include <string>
#include <utility>

namespace pssl::objectives {

struct LossCoefficients {
  double lambda_bt = 0.005;  // Barlow off-diagonal weight
  double alpha = 25.0;       // VICReg invariance
  double tau = 25.0;         // VICReg variance
  double nu = 1.0;           // VICReg covariance
  double gamma = 1.0;        // variance hinge target
  double beta = 0.0;         // KL bottleneck weight
  double var_eps = stats::kDefaultVarianceEps;
  double corr_eps = stats::kDefaultCorrelationEps;

  void validate() const;
};

struct LossBreakdown {
  double inv = 0.0;
  double reg = 0.0;
  double reg_var = 0.0;
  double reg_cov = 0.0;
  double div = 0.0;
  double total = 0.0;

  // Name of the first non-finite term, or empty.
  std::string first_non_finite() const;
};

struct LossTerms {
  ad::Var inv;
  ad::Var reg;
  ad::Var reg_var;
  ad::Var reg_cov;
  ad::Var div;
  ad::Var total;

  LossBreakdown values() const;
};

// ---- tape versions ----

ad::Var center(const ad::Var& x);
// sqrt(Var_j + eps) with the n-1 denominator, 1 x d.
ad::Var column_std(const ad::Var& x, double eps);
ad::Var covariance_matrix(const ad::Var& x);
ad::Var cross_correlation(const ad::Var& za, const ad::Var& zb, double eps);

struct BarlowTerms {
  ad::Var inv;
  ad::Var reg;
};
BarlowTerms barlow_terms(const ad::Var& za, const ad::Var& zb, const LossCoefficients& c);

ad::Var vicreg_invariance(const ad::Var& za, const ad::Var& zb, double alpha);
ad::Var vicreg_variance(const ad::Var& z, double gamma, double eps);
ad::Var vicreg_covariance(const ad::Var& z);

struct VicregRegularization {
  ad::Var reg;
  ad::Var reg_var;
  ad::Var reg_cov;
};
VicregRegularization vicreg_regularization(const ad::Var& za, const ad::Var& zb, const LossCoefficients& c);

// (beta/2) [mean_n KL(qa||p) + mean_n KL(qb||p)]; closed form for the standard
// normal, the sample-based estimate for a mixture prior.
ad::Var divergence_loss(const gauss::GaussVar& qa, const gauss::GaussVar& qb, const gauss::PriorVar& prior,
                        double beta, const std::vector<ad::Var>& samples_a,
                        const std::vector<ad::Var>& samples_b);

// inv and reg averaged over the K sample pairs, plus the divergence term.
// For deterministic outputs the terms are evaluated once on z_point, div = 0.
LossTerms mc_objective(Method method, const ForwardOutput& a, const ForwardOutput& b, const LossCoefficients& c,
                       const gauss::PriorVar& prior);

// ---- matrix versions ----

std::pair<double, double> barlow_terms(const Matrix& za, const Matrix& zb, const LossCoefficients& c);
double vicreg_invariance(const Matrix& za, const Matrix& zb, double alpha);
double vicreg_variance(const Matrix& z, double gamma, double eps);
double vicreg_covariance(const Matrix& z);
// Fills reg, reg_var and reg_cov.
LossBreakdown vicreg_regularization(const Matrix& za, const Matrix& zb, const LossCoefficients& c);
double divergence_loss(const gauss::DiagGaussianBatch& qa, const gauss::DiagGaussianBatch& qb,
                       const gauss::Prior& prior, double beta, const gauss::NoiseStack& noise_a,
                       const gauss::NoiseStack& noise_b);

// Loss-space posteriors (Z-prob. semantics): z_k = mu + sigma * noise[k].
LossBreakdown mc_objective(Method method, const gauss::DiagGaussianBatch& qa, const gauss::DiagGaussianBatch& qb,
                           const gauss::NoiseStack& noise_a, const gauss::NoiseStack& noise_b,
                           const LossCoefficients& c, const gauss::Prior& prior);
// Point embeddings (deterministic variant).
LossBreakdown deterministic_objective(Method method, const Matrix& za, const Matrix& zb, const LossCoefficients& c);

}  // namespace pssl::objectives
