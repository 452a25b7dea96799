#include "pssl/objectives.hpp"

#include <cmath>

namespace pssl {

void ForwardOutput::validate() const {
  switch (variant) {
    case Variant::deterministic:
      require(h_point && z_point && !h_dist && !z_dist && z_samples.empty() && h_samples.empty(),
              "ForwardOutput: deterministic output must carry only h_point and z_point");
      break;
    case Variant::zprob:
      require(h_point && z_dist && !h_dist && !z_point && !z_samples.empty() && h_samples.empty(),
              "ForwardOutput: zprob output must carry h_point, z_dist and z_samples");
      break;
    case Variant::hprob:
      require(h_dist && !h_point && !z_dist && !z_samples.empty() && h_samples.size() == z_samples.size(),
              "ForwardOutput: hprob output must carry h_dist, h_samples and z_samples");
      break;
  }
}

const gauss::GaussVar& ForwardOutput::stochastic_dist() const {
  require(variant != Variant::deterministic, "deterministic output has no distribution");
  return variant == Variant::zprob ? *z_dist : *h_dist;
}

const std::vector<ad::Var>& ForwardOutput::stochastic_samples() const {
  require(variant != Variant::deterministic, "deterministic output has no samples");
  return variant == Variant::zprob ? z_samples : h_samples;
}

}  // namespace pssl

namespace pssl::objectives {

void LossCoefficients::validate() const {
  std::vector<std::string> bad;
  if (!(lambda_bt >= 0.0)) bad.push_back("lambda_bt");
  if (!(alpha >= 0.0)) bad.push_back("alpha");
  if (!(tau >= 0.0)) bad.push_back("tau");
  if (!(nu >= 0.0)) bad.push_back("nu");
  if (!(gamma > 0.0)) bad.push_back("gamma");
  if (!(beta >= 0.0)) bad.push_back("beta");
  if (!(var_eps >= 0.0)) bad.push_back("var_eps");
  if (!(corr_eps >= 0.0)) bad.push_back("corr_eps");
  if (!bad.empty()) throw ConfigError(bad);
}

std::string LossBreakdown::first_non_finite() const {
  if (!std::isfinite(inv)) return "inv";
  if (!std::isfinite(reg_var)) return "reg_var";
  if (!std::isfinite(reg_cov)) return "reg_cov";
  if (!std::isfinite(reg)) return "reg";
  if (!std::isfinite(div)) return "div";
  if (!std::isfinite(total)) return "total";
  return {};
}

LossBreakdown LossTerms::values() const {
  LossBreakdown b;
  b.inv = inv.item();
  b.reg = reg.item();
  b.reg_var = reg_var.item();
  b.reg_cov = reg_cov.item();
  b.div = div.item();
  b.total = total.item();
  return b;
}

namespace {

ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

void require_pair(const ad::Var& za, const ad::Var& zb, const char* what) {
  require(za.rows() == zb.rows() && za.cols() == zb.cols(), std::string(what) + ": batches differ in shape");
}

}  // namespace

ad::Var center(const ad::Var& x) { return ad::add_row(x, -1.0 * ad::col_mean(x)); }

ad::Var column_std(const ad::Var& x, double eps) {
  require(x.rows() >= 2, "column_std: needs at least 2 rows");
  const ad::Var c = center(x);
  return ad::sqrt(ad::add_scalar(ad::scale(ad::col_sum(ad::square(c)), 1.0 / double(x.rows() - 1)), eps));
}

ad::Var covariance_matrix(const ad::Var& x) {
  require(x.rows() >= 2, "covariance_matrix: needs at least 2 rows");
  const ad::Var c = center(x);
  return ad::scale(ad::matmul(ad::transpose(c), c), 1.0 / double(x.rows() - 1));
}

ad::Var cross_correlation(const ad::Var& za, const ad::Var& zb, double eps) {
  require_pair(za, zb, "cross_correlation");
  require(za.rows() >= 2, "cross_correlation: needs at least 2 rows");
  require(eps >= 0.0, "cross_correlation: eps must be non-negative");
  const ad::Var sa = column_std(za, eps);
  const ad::Var sb = column_std(zb, eps);
  if (eps == 0.0) {
    require((sa.value().array() > 0.0).all() && (sb.value().array() > 0.0).all(),
            "cross_correlation: zero-variance column with eps = 0");
  }
  const ad::Var cov =
      ad::scale(ad::matmul(ad::transpose(center(za)), center(zb)), 1.0 / double(za.rows() - 1));
  return ad::div(cov, ad::matmul(ad::transpose(sa), sb));
}

BarlowTerms barlow_terms(const ad::Var& za, const ad::Var& zb, const LossCoefficients& c) {
  const ad::Var r = cross_correlation(za, zb, c.corr_eps);
  const ad::Var diag = ad::diagonal(r);
  BarlowTerms t;
  t.inv = ad::sum(ad::square(1.0 - diag));
  t.reg = c.lambda_bt * (ad::sum(ad::square(r)) - ad::sum(ad::square(diag)));
  return t;
}

ad::Var vicreg_invariance(const ad::Var& za, const ad::Var& zb, double alpha) {
  require_pair(za, zb, "vicreg_invariance");
  return ad::scale(ad::sum(ad::square(za - zb)), alpha / double(za.rows()));
}

ad::Var vicreg_variance(const ad::Var& z, double gamma, double eps) {
  require(z.rows() >= 2, "vicreg_variance: needs at least 2 rows");
  const ad::Var hinge = ad::relu(gamma - column_std(z, eps));
  return ad::scale(ad::sum(hinge), 1.0 / double(z.cols()));
}

ad::Var vicreg_covariance(const ad::Var& z) {
  const ad::Var cov = covariance_matrix(z);
  const ad::Var off = ad::sum(ad::square(cov)) - ad::sum(ad::square(ad::diagonal(cov)));
  return ad::scale(off, 1.0 / double(z.cols()));
}

VicregRegularization vicreg_regularization(const ad::Var& za, const ad::Var& zb, const LossCoefficients& c) {
  require_pair(za, zb, "vicreg_regularization");
  VicregRegularization r;
  r.reg_var = c.tau * (vicreg_variance(za, c.gamma, c.var_eps) + vicreg_variance(zb, c.gamma, c.var_eps));
  r.reg_cov = c.nu * (vicreg_covariance(za) + vicreg_covariance(zb));
  r.reg = r.reg_var + r.reg_cov;
  return r;
}

ad::Var divergence_loss(const gauss::GaussVar& qa, const gauss::GaussVar& qb, const gauss::PriorVar& prior,
                        double beta, const std::vector<ad::Var>& samples_a,
                        const std::vector<ad::Var>& samples_b) {
  ad::Var kl_a;
  ad::Var kl_b;
  if (prior.kind == PriorKind::standard_normal) {
    kl_a = gauss::kl_standard_normal(qa);
    kl_b = gauss::kl_standard_normal(qb);
  } else {
    kl_a = gauss::kl_to_prior_mc(qa, prior, samples_a);
    kl_b = gauss::kl_to_prior_mc(qb, prior, samples_b);
  }
  return (0.5 * beta) * (ad::mean(kl_a) + ad::mean(kl_b));
}

namespace {

struct PairTerms {
  ad::Var inv;
  ad::Var reg;
  ad::Var reg_var;
  ad::Var reg_cov;
};

PairTerms pair_terms(Method method, const ad::Var& za, const ad::Var& zb, const LossCoefficients& c) {
  PairTerms p;
  if (method == Method::barlow) {
    const BarlowTerms t = barlow_terms(za, zb, c);
    p.inv = t.inv;
    p.reg = t.reg;
    p.reg_var = zero_scalar(za.tape());
    p.reg_cov = zero_scalar(za.tape());
  } else {
    p.inv = vicreg_invariance(za, zb, c.alpha);
    const VicregRegularization r = vicreg_regularization(za, zb, c);
    p.reg = r.reg;
    p.reg_var = r.reg_var;
    p.reg_cov = r.reg_cov;
  }
  return p;
}

}  // namespace

LossTerms mc_objective(Method method, const ForwardOutput& a, const ForwardOutput& b, const LossCoefficients& c,
                       const gauss::PriorVar& prior) {
  a.validate();
  b.validate();
  require(a.variant == b.variant, "mc_objective: views come from different variants");
  LossTerms out;
  if (a.variant == Variant::deterministic) {
    const PairTerms p = pair_terms(method, *a.z_point, *b.z_point, c);
    out.inv = p.inv;
    out.reg = p.reg;
    out.reg_var = p.reg_var;
    out.reg_cov = p.reg_cov;
    out.div = zero_scalar(p.inv.tape());
  } else {
    const std::size_t k = a.z_samples.size();
    require(k >= 1, "mc_objective: K must be at least 1");
    require(b.z_samples.size() == k, "mc_objective: views carry different sample counts");
    PairTerms acc;
    for (std::size_t i = 0; i < k; ++i) {
      const PairTerms p = pair_terms(method, a.z_samples[i], b.z_samples[i], c);
      if (i == 0) {
        acc = p;
      } else {
        acc.inv = acc.inv + p.inv;
        acc.reg = acc.reg + p.reg;
        acc.reg_var = acc.reg_var + p.reg_var;
        acc.reg_cov = acc.reg_cov + p.reg_cov;
      }
    }
    const double inv_k = 1.0 / double(k);
    out.inv = ad::scale(acc.inv, inv_k);
    out.reg = ad::scale(acc.reg, inv_k);
    out.reg_var = ad::scale(acc.reg_var, inv_k);
    out.reg_cov = ad::scale(acc.reg_cov, inv_k);
    out.div = divergence_loss(a.stochastic_dist(), b.stochastic_dist(), prior, c.beta, a.stochastic_samples(),
                              b.stochastic_samples());
  }
  out.total = out.inv + out.reg + out.div;
  return out;
}

// ---- matrix versions ----

std::pair<double, double> barlow_terms(const Matrix& za, const Matrix& zb, const LossCoefficients& c) {
  ad::Tape tape;
  const BarlowTerms t = barlow_terms(tape.constant(za), tape.constant(zb), c);
  return {t.inv.item(), t.reg.item()};
}

double vicreg_invariance(const Matrix& za, const Matrix& zb, double alpha) {
  ad::Tape tape;
  return vicreg_invariance(tape.constant(za), tape.constant(zb), alpha).item();
}

double vicreg_variance(const Matrix& z, double gamma, double eps) {
  ad::Tape tape;
  return vicreg_variance(tape.constant(z), gamma, eps).item();
}

double vicreg_covariance(const Matrix& z) {
  ad::Tape tape;
  return vicreg_covariance(tape.constant(z)).item();
}

LossBreakdown vicreg_regularization(const Matrix& za, const Matrix& zb, const LossCoefficients& c) {
  ad::Tape tape;
  const VicregRegularization r = vicreg_regularization(tape.constant(za), tape.constant(zb), c);
  LossBreakdown b;
  b.reg = r.reg.item();
  b.reg_var = r.reg_var.item();
  b.reg_cov = r.reg_cov.item();
  return b;
}

namespace {

gauss::PriorVar constant_prior(ad::Tape& tape, const gauss::Prior& prior) {
  gauss::PriorVar p;
  if (const auto* mog = std::get_if<gauss::MoGPrior>(&prior)) {
    mog->validate();
    p.kind = PriorKind::mog;
    p.mog.means = tape.constant(mog->means);
    p.mog.sigmas = tape.constant(mog->sigmas);
  }
  return p;
}

ForwardOutput constant_zprob(ad::Tape& tape, const gauss::DiagGaussianBatch& q, const gauss::NoiseStack& noise) {
  q.validate();
  ForwardOutput f;
  f.variant = Variant::zprob;
  f.h_point = tape.constant(Matrix::Zero(q.rows(), 1));
  f.z_dist = gauss::GaussVar{tape.constant(q.mu), tape.constant(q.sigma)};
  for (const Matrix& eps : noise) f.z_samples.push_back(gauss::sample_reparam(*f.z_dist, eps));
  return f;
}

}  // namespace

double divergence_loss(const gauss::DiagGaussianBatch& qa, const gauss::DiagGaussianBatch& qb,
                       const gauss::Prior& prior, double beta, const gauss::NoiseStack& noise_a,
                       const gauss::NoiseStack& noise_b) {
  ad::Tape tape;
  const ForwardOutput fa = constant_zprob(tape, qa, noise_a);
  const ForwardOutput fb = constant_zprob(tape, qb, noise_b);
  return divergence_loss(*fa.z_dist, *fb.z_dist, constant_prior(tape, prior), beta, fa.z_samples, fb.z_samples)
      .item();
}

LossBreakdown mc_objective(Method method, const gauss::DiagGaussianBatch& qa, const gauss::DiagGaussianBatch& qb,
                           const gauss::NoiseStack& noise_a, const gauss::NoiseStack& noise_b,
                           const LossCoefficients& c, const gauss::Prior& prior) {
  require(!noise_a.empty() && noise_a.size() == noise_b.size(), "mc_objective: K must be >= 1 for both views");
  ad::Tape tape;
  const ForwardOutput fa = constant_zprob(tape, qa, noise_a);
  const ForwardOutput fb = constant_zprob(tape, qb, noise_b);
  return mc_objective(method, fa, fb, c, constant_prior(tape, prior)).values();
}

LossBreakdown deterministic_objective(Method method, const Matrix& za, const Matrix& zb, const LossCoefficients& c) {
  ad::Tape tape;
  ForwardOutput fa;
  fa.h_point = tape.constant(Matrix::Zero(za.rows(), 1));
  fa.z_point = tape.constant(za);
  ForwardOutput fb;
  fb.h_point = tape.constant(Matrix::Zero(zb.rows(), 1));
  fb.z_point = tape.constant(zb);
  return mc_objective(method, fa, fb, c, gauss::PriorVar{}).values();
}

}  // namespace pssl::objectives
