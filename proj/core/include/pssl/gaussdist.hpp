#pragma once

// Diagonal Gaussian posteriors, reparametrized sampling, log-densities and KL
// divergences to a standard-normal or mixture-of-Gaussians prior.
//
// Every quantity is provided twice: over plain matrices (used for evaluation
// and as an oracle) and over tape Vars (used for training).

#include "pssl/autodiff.hpp"
#include "pssl/common.hpp"
#include "pssl/params.hpp"
#include "pssl/rng.hpp"

#include <string>
#include <variant>
#include <vector>

namespace pssl::gauss {

inline constexpr double kDefaultSigmaMin = 1e-4;

// Per-sample q(.|v) = N(mu, diag(sigma^2)); mu and sigma are n x d.
struct DiagGaussianBatch {
  Matrix mu;
  Matrix sigma;

  Index rows() const { return mu.rows(); }
  Index cols() const { return mu.cols(); }
  // Throws on shape mismatch, non-finite entries or sigma <= 0.
  void validate() const;
};

// (1/M) * sum_m N(means_m, diag(sigmas_m^2)); means/sigmas are M x d.
struct MoGPrior {
  Matrix means;
  Matrix sigmas;

  Index components() const { return means.rows(); }
  Index dim() const { return means.cols(); }
  void validate() const;
};

struct StandardNormal {};

struct PriorConfig {
  PriorKind kind = PriorKind::standard_normal;
  int components = 8;
  double init_mean_std = 0.5;
};
using Prior = std::variant<StandardNormal, MoGPrior>;

// K noise draws, each n x d.
using NoiseStack = std::vector<Matrix>;
NoiseStack draw_noise(Rng& rng, int k, Index n, Index d);

Matrix sample_reparam(const DiagGaussianBatch& q, const Matrix& noise);
Vector log_prob_diag(const DiagGaussianBatch& q, const Matrix& x);
Vector standard_normal_log_prob(const Matrix& x);
Vector kl_standard_normal(const DiagGaussianBatch& q);
Vector mog_log_prob(const MoGPrior& prior, const Matrix& x);
Vector prior_log_prob(const Prior& prior, const Matrix& x);
// (1/K) sum_k [log q(z_k) - log p(z_k)], z_k = mu + sigma * noise[k].
Vector kl_to_prior_mc(const DiagGaussianBatch& q, const Prior& prior, const NoiseStack& noise);

// softplus(raw) + sigma_min, the positivity map used by every sigma head.
Matrix sigma_from_raw(const Matrix& raw, double sigma_min);
// Inverse of sigma_from_raw for sigma > sigma_min.
double raw_from_sigma(double sigma, double sigma_min);

// Registers "<prefix>means" and "<prefix>sigma_raw" (M x d) in the store.
void register_mog_prior(ParamStore& store, const std::string& prefix, int components, Index dim, Rng& rng,
                        double init_mean_std, double sigma_min);
MoGPrior mog_from_params(const ParamStore& store, const std::string& prefix, double sigma_min);

// ---- tape versions ----

struct GaussVar {
  ad::Var mu;
  ad::Var sigma;
};

struct MogVar {
  ad::Var means;
  ad::Var sigmas;
};

// Empty mog means the standard-normal prior.
struct PriorVar {
  PriorKind kind = PriorKind::standard_normal;
  MogVar mog;
};

ad::Var sigma_from_raw(const ad::Var& raw, double sigma_min);
ad::Var sample_reparam(const GaussVar& q, const Matrix& noise);
ad::Var log_prob_diag(const GaussVar& q, const ad::Var& x);
ad::Var standard_normal_log_prob(const ad::Var& x);
ad::Var kl_standard_normal(const GaussVar& q);
ad::Var mog_log_prob(const MogVar& prior, const ad::Var& x);
ad::Var prior_log_prob(const PriorVar& prior, const ad::Var& x);
// samples are reparametrized draws from q (so gradients reach mu and sigma).
ad::Var kl_to_prior_mc(const GaussVar& q, const PriorVar& prior, const std::vector<ad::Var>& samples);

}  // namespace pssl::gauss
