#include "pssl/ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pssl::ood {

std::string to_string(Detector d) {
  switch (d) {
    case Detector::sigma_mean: return "sigma_mean";
    case Detector::sigma_std: return "sigma_std";
    case Detector::mahalanobis: return "mahalanobis";
    case Detector::max_softmax: return "max_softmax";
    case Detector::entropy: return "entropy";
    case Detector::odin: return "odin";
  }
  return "?";
}

Detector parse_detector(const std::string& s) {
  for (Detector d : all_detectors())
    if (to_string(d) == s) return d;
  throw InvalidArgument("unknown detector '" + s + "'");
}

const std::vector<Detector>& all_detectors() {
  static const std::vector<Detector> all{Detector::sigma_mean,  Detector::sigma_std, Detector::mahalanobis,
                                         Detector::max_softmax, Detector::entropy,   Detector::odin};
  return all;
}

bool needs_sigma(Detector d) { return d == Detector::sigma_mean || d == Detector::sigma_std; }

Vector sigma_mean_score(const Matrix& sigma) {
  require(sigma.cols() > 0, "sigma_mean_score: empty sigma");
  return sigma.rowwise().mean();
}

Vector sigma_mean_score(const gauss::DiagGaussianBatch& dist) {
  dist.validate();
  return sigma_mean_score(dist.sigma);
}

Vector sigma_std_score(const Matrix& sigma) {
  require(sigma.cols() > 0, "sigma_std_score: empty sigma");
  const Vector mean = sigma.rowwise().mean();
  return ((sigma.colwise() - mean).array().square().rowwise().sum() / double(sigma.cols())).sqrt().matrix();
}

Vector sigma_std_score(const gauss::DiagGaussianBatch& dist) {
  dist.validate();
  return sigma_std_score(dist.sigma);
}

MahalanobisFit mahalanobis_fit(const Matrix& x, double rho) {
  require(rho >= 0.0 && rho <= 1.0, "mahalanobis_fit: shrinkage must be in [0, 1]");
  require(x.rows() >= x.cols() + 1, "mahalanobis_fit: need at least d + 1 samples");
  require(x.allFinite(), "mahalanobis_fit: non-finite features");
  MahalanobisFit fit;
  fit.mean = x.colwise().mean();
  const Matrix c = x.rowwise() - fit.mean;
  Matrix cov = (c.transpose() * c) / double(x.rows() - 1);
  cov = (1.0 - rho) * cov + rho * Matrix(cov.diagonal().asDiagonal());
  Eigen::LDLT<Matrix> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-300)
    throw NumericError("mahalanobis_fit: covariance is singular after shrinkage");
  fit.precision = ldlt.solve(Matrix::Identity(cov.rows(), cov.cols()));
  fit.precision = 0.5 * (fit.precision + fit.precision.transpose());
  return fit;
}

Vector mahalanobis_score(const MahalanobisFit& fit, const Matrix& features) {
  require(features.cols() == fit.mean.cols(), "mahalanobis_score: feature width mismatch");
  const Matrix c = features.rowwise() - fit.mean;
  const Vector q = (c * fit.precision).cwiseProduct(c).rowwise().sum();
  return q.cwiseMax(0.0).cwiseSqrt();
}

Matrix softmax_rows(const Matrix& logits) {
  require(logits.cols() > 0, "softmax_rows: no classes");
  const Vector m = logits.rowwise().maxCoeff();
  Matrix e = (logits.colwise() - m).array().exp().matrix();
  const Vector s = e.rowwise().sum();
  return e.array().colwise() / s.array();
}

Vector max_softmax_score(const Matrix& logits) {
  return (1.0 - softmax_rows(logits).rowwise().maxCoeff().array()).matrix();
}

Vector entropy_score(const Matrix& logits) {
  const Matrix p = softmax_rows(logits);
  Vector h(p.rows());
  for (Index i = 0; i < p.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) acc -= p(i, j) * std::log(p(i, j));
    h(i) = acc;
  }
  return h;
}

Vector odin_score(const models::Model& model, ParamStore& params, const eval::LinearHead& head, const Matrix& x,
                  const OdinConfig& config) {
  if (config.epsilon < 0.0) throw InvalidArgument("odin_score: perturbation epsilon must be >= 0");
  require(config.temperature > 0.0, "odin_score: temperature must be positive");
  Matrix input = x;
  if (config.epsilon > 0.0) {
    const Matrix base = eval::probe_logits(model, params, head, x);
    Matrix target = Matrix::Zero(base.rows(), base.cols());
    for (Index i = 0; i < base.rows(); ++i) {
      Index best = 0;
      base.row(i).maxCoeff(&best);
      target(i, best) = 1.0;
    }
    // Rows are independent (no batch statistics in the encoder), so the
    // gradient of the summed loss gives each row its own gradient.
    ad::Tape tape;
    models::Bound b(tape, params);
    const ad::Var xv = tape.variable(x);
    const models::StageOutput enc = model.encoder_forward(b, xv);
    const ad::Var h = enc.dist ? enc.dist->mu : *enc.point;
    const ad::Var hn = ad::mul_col(h, ad::reciprocal(ad::sqrt(ad::row_sum(ad::square(h)))));
    const ad::Var logits = ad::add_row(ad::matmul(hn, tape.constant(head.weight)), tape.constant(head.bias));
    const ad::Var scaled = ad::scale(logits, 1.0 / config.temperature);
    const ad::Var nll = ad::sum(ad::sub(ad::logsumexp_rows(scaled), ad::row_sum(ad::mul(scaled, tape.constant(target)))));
    tape.backward(nll);
    const Matrix g = tape.grad(xv);
    input = x - config.epsilon * g.unaryExpr([](double v) { return double((v > 0.0) - (v < 0.0)); });
  }
  return max_softmax_score(eval::probe_logits(model, params, head, input) / config.temperature);
}

double auroc(const Vector& in_scores, const Vector& out_scores) {
  require(in_scores.size() > 0 && out_scores.size() > 0, "auroc: both sides must be non-empty");
  require(in_scores.allFinite() && out_scores.allFinite(), "auroc: non-finite score");
  const Index n_in = in_scores.size();
  const Index n_out = out_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(static_cast<std::size_t>(n_in + n_out));
  for (Index i = 0; i < n_in; ++i) all.emplace_back(in_scores(i), false);
  for (Index i = 0; i < n_out; ++i) all.emplace_back(out_scores(i), true);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Doubled ranks keep tied averages integral, so the result is exact.
  long long rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const long long doubled_avg = static_cast<long long>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum_x2 += doubled_avg;
    i = j;
  }
  const long long u_x2 = rank_sum_x2 - static_cast<long long>(n_out) * (n_out + 1);
  return double(u_x2) / (2.0 * double(n_in) * double(n_out));
}

double auroc_pairwise(const Vector& in_scores, const Vector& out_scores) {
  require(in_scores.size() > 0 && out_scores.size() > 0, "auroc_pairwise: both sides must be non-empty");
  long long twice = 0;
  for (Index i = 0; i < out_scores.size(); ++i)
    for (Index j = 0; j < in_scores.size(); ++j) {
      if (out_scores(i) > in_scores(j)) twice += 2;
      else if (out_scores(i) == in_scores(j)) twice += 1;
    }
  return double(twice) / (2.0 * double(in_scores.size()) * double(out_scores.size()));
}

}  // namespace pssl::ood
