#include "pssl/gaussdist.hpp"

#include <cmath>
#include <numbers>

namespace pssl::gauss {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_shape(const Matrix& a, Index rows, Index cols, const char* what) {
  require(a.rows() == rows && a.cols() == cols, std::string(what) + ": shape mismatch");
}

}  // namespace

void DiagGaussianBatch::validate() const {
  require(mu.rows() == sigma.rows() && mu.cols() == sigma.cols(), "DiagGaussianBatch: mu/sigma shape mismatch");
  require(mu.allFinite() && sigma.allFinite(), "DiagGaussianBatch: non-finite entries");
  require((sigma.array() > 0.0).all(), "DiagGaussianBatch: sigma must be strictly positive");
}

void MoGPrior::validate() const {
  require(means.rows() >= 1, "MoGPrior: needs at least one component");
  require(means.rows() == sigmas.rows() && means.cols() == sigmas.cols(), "MoGPrior: means/sigmas shape mismatch");
  require(means.allFinite() && sigmas.allFinite(), "MoGPrior: non-finite parameters");
  require((sigmas.array() > 0.0).all(), "MoGPrior: sigmas must be strictly positive");
}

NoiseStack draw_noise(Rng& rng, int k, Index n, Index d) {
  NoiseStack out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(rng.normal_matrix(n, d));
  return out;
}

Matrix sample_reparam(const DiagGaussianBatch& q, const Matrix& noise) {
  q.validate();
  require_shape(noise, q.rows(), q.cols(), "sample_reparam");
  return q.mu + q.sigma.cwiseProduct(noise);
}

Vector log_prob_diag(const DiagGaussianBatch& q, const Matrix& x) {
  q.validate();
  require_shape(x, q.rows(), q.cols(), "log_prob_diag");
  const auto z = ((x - q.mu).array() / q.sigma.array());
  return (-0.5 * z.square() - q.sigma.array().log() - kHalfLog2Pi).rowwise().sum();
}

Vector standard_normal_log_prob(const Matrix& x) {
  return (-0.5 * x.array().square() - kHalfLog2Pi).rowwise().sum();
}

Vector kl_standard_normal(const DiagGaussianBatch& q) {
  q.validate();
  const auto s2 = q.sigma.array().square();
  return 0.5 * (q.mu.array().square() + s2 - 1.0 - s2.log()).rowwise().sum();
}

Vector mog_log_prob(const MoGPrior& prior, const Matrix& x) {
  prior.validate();
  require(x.cols() == prior.dim(), "mog_log_prob: dimension mismatch");
  const Index m_count = prior.components();
  Matrix comp(x.rows(), m_count);
  for (Index m = 0; m < m_count; ++m) {
    const auto z = (x.rowwise() - prior.means.row(m)).array().rowwise() / prior.sigmas.row(m).array();
    const double log_norm = prior.sigmas.row(m).array().log().sum() + kHalfLog2Pi * double(x.cols());
    comp.col(m) = (-0.5 * z.square()).rowwise().sum() - log_norm;
  }
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double shift = comp.row(i).maxCoeff();
    out(i) = shift + std::log((comp.row(i).array() - shift).exp().sum()) - std::log(double(m_count));
  }
  return out;
}

Vector prior_log_prob(const Prior& prior, const Matrix& x) {
  if (const auto* mog = std::get_if<MoGPrior>(&prior)) return mog_log_prob(*mog, x);
  return standard_normal_log_prob(x);
}

Vector kl_to_prior_mc(const DiagGaussianBatch& q, const Prior& prior, const NoiseStack& noise) {
  require(!noise.empty(), "kl_to_prior_mc: K must be at least 1");
  Vector acc = Vector::Zero(q.rows());
  for (const Matrix& eps : noise) {
    const Matrix z = sample_reparam(q, eps);
    acc += log_prob_diag(q, z) - prior_log_prob(prior, z);
  }
  return acc / double(noise.size());
}

Matrix sigma_from_raw(const Matrix& raw, double sigma_min) {
  return raw.unaryExpr([sigma_min](double r) {
    return std::max(r, 0.0) + std::log1p(std::exp(-std::abs(r))) + sigma_min;
  });
}

double raw_from_sigma(double sigma, double sigma_min) {
  const double s = sigma - sigma_min;
  require(s > 0.0, "raw_from_sigma: sigma must exceed sigma_min");
  // log(exp(s) - 1), written to avoid overflow for large s.
  return s > 30.0 ? s : std::log(std::expm1(s));
}

void register_mog_prior(ParamStore& store, const std::string& prefix, int components, Index dim, Rng& rng,
                        double init_mean_std, double sigma_min) {
  require(components >= 1, "register_mog_prior: component count must be >= 1");
  store.add(prefix + "means", rng.normal_matrix(components, dim) * init_mean_std);
  store.add(prefix + "sigma_raw", Matrix::Constant(components, dim, raw_from_sigma(1.0, sigma_min)));
}

MoGPrior mog_from_params(const ParamStore& store, const std::string& prefix, double sigma_min) {
  return MoGPrior{store.at(prefix + "means").value, sigma_from_raw(store.at(prefix + "sigma_raw").value, sigma_min)};
}

// ---- tape versions ----

ad::Var sigma_from_raw(const ad::Var& raw, double sigma_min) { return ad::softplus(raw) + sigma_min; }

ad::Var sample_reparam(const GaussVar& q, const Matrix& noise) {
  require_shape(noise, q.mu.rows(), q.mu.cols(), "sample_reparam");
  auto& tape = q.mu.tape();
  return q.mu + ad::mul(q.sigma, tape.constant(noise));
}

ad::Var log_prob_diag(const GaussVar& q, const ad::Var& x) {
  require(x.rows() == q.mu.rows() && x.cols() == q.mu.cols(), "log_prob_diag: shape mismatch");
  const ad::Var z = ad::div(x - q.mu, q.sigma);
  const ad::Var per_entry = -0.5 * ad::square(z) - ad::log(q.sigma);
  return ad::add_scalar(ad::row_sum(per_entry), -kHalfLog2Pi * double(x.cols()));
}

ad::Var standard_normal_log_prob(const ad::Var& x) {
  return ad::add_scalar(-0.5 * ad::row_sum(ad::square(x)), -kHalfLog2Pi * double(x.cols()));
}

ad::Var kl_standard_normal(const GaussVar& q) {
  const ad::Var s2 = ad::square(q.sigma);
  const ad::Var per_entry = ad::square(q.mu) + s2 - 2.0 * ad::log(q.sigma);
  return 0.5 * ad::add_scalar(ad::row_sum(per_entry), -double(q.mu.cols()));
}

ad::Var mog_log_prob(const MogVar& prior, const ad::Var& x) {
  require(x.cols() == prior.means.cols(), "mog_log_prob: dimension mismatch");
  const double m_count = double(prior.means.rows());
  // sum_j (x_j - mu_mj)^2 / s_mj^2 expanded into three matrix products (n x M).
  const ad::Var inv_var = ad::reciprocal(ad::square(prior.sigmas));
  const ad::Var quad_x = ad::matmul(ad::square(x), ad::transpose(inv_var));
  const ad::Var cross = ad::matmul(x, ad::transpose(ad::mul(prior.means, inv_var)));
  const ad::Var quad_mu = ad::transpose(ad::row_sum(ad::mul(ad::square(prior.means), inv_var)));  // 1 x M
  const ad::Var log_norm = ad::transpose(ad::row_sum(ad::log(prior.sigmas)));                     // 1 x M
  const ad::Var quad = ad::add_row(quad_x - 2.0 * cross, quad_mu);
  const ad::Var comp = ad::add_row(-0.5 * quad, -1.0 * log_norm);
  return ad::add_scalar(ad::logsumexp_rows(comp), -kHalfLog2Pi * double(x.cols()) - std::log(m_count));
}

ad::Var prior_log_prob(const PriorVar& prior, const ad::Var& x) {
  if (prior.kind == PriorKind::mog) return mog_log_prob(prior.mog, x);
  return standard_normal_log_prob(x);
}

ad::Var kl_to_prior_mc(const GaussVar& q, const PriorVar& prior, const std::vector<ad::Var>& samples) {
  require(!samples.empty(), "kl_to_prior_mc: K must be at least 1");
  ad::Var acc;
  for (const ad::Var& z : samples) {
    const ad::Var term = log_prob_diag(q, z) - prior_log_prob(prior, z);
    acc = acc.valid() ? acc + term : term;
  }
  return ad::scale(acc, 1.0 / double(samples.size()));
}

}  // namespace pssl::gauss
