#include "pssl/mi.hpp"

#include "pssl/optim.hpp"

#include <cmath>

namespace pssl::mi {

StatisticNet::StatisticNet(Index x_dim, Index y_dim, int width, std::uint64_t seed)
    : x_dim_(x_dim), y_dim_(y_dim), width_(width) {
  require(x_dim > 0 && y_dim > 0 && width > 0, "StatisticNet: dimensions must be positive");
  Rng rng(derive_seed({seed, 0x6d696e65ULL}));
  const auto add = [&](const std::string& name, Index in, Index out) {
    const double bound = 1.0 / std::sqrt(double(in));
    params_.add(name + ".weight", rng.uniform_matrix(in, out, -bound, bound));
    params_.add(name + ".bias", rng.uniform_matrix(1, out, -bound, bound));
  };
  add("t.fc1", x_dim + y_dim, width);
  add("t.fc2", width, width);
  add("t.out", width, 1);
}

ad::Var StatisticNet::forward(models::Bound& b, const Matrix& x, const Matrix& y) const {
  require(x.rows() == y.rows() && x.rows() > 0, "StatisticNet: x and y must have the same non-zero row count");
  require(x.cols() == x_dim_ && y.cols() == y_dim_, "StatisticNet: input width mismatch");
  ad::Tape& tape = b.tape();
  const auto linear = [&](const std::string& name, const ad::Var& in) {
    return ad::add_row(ad::matmul(in, b(name + ".weight")), b(name + ".bias"));
  };
  ad::Var a = ad::hconcat(tape.constant(x), tape.constant(y));
  a = ad::relu(linear("t.fc1", a));
  a = ad::relu(linear("t.fc2", a));
  return linear("t.out", a);
}

Vector StatisticNet::evaluate(const Matrix& x, const Matrix& y) {
  ad::Tape tape;
  models::Bound b(tape, params_);
  return forward(b, x, y).value().col(0);
}

double dv_bound(const Vector& t_joint, const Vector& t_marginal) {
  require(t_joint.size() > 0 && t_marginal.size() > 0, "dv_bound: empty batch");
  const double shift = t_marginal.maxCoeff();
  const double log_mean_exp = shift + std::log((t_marginal.array() - shift).exp().mean());
  return t_joint.mean() - log_mean_exp;
}

double dv_bound(StatisticNet& net, const Matrix& x, const Matrix& y, const Matrix& y_marginal) {
  return dv_bound(net.evaluate(x, y), net.evaluate(x, y_marginal));
}

Matrix shuffle_rows(const Matrix& y, Rng& rng) {
  const auto perm = rng.permutation(static_cast<std::size_t>(y.rows()));
  Matrix out(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) out.row(i) = y.row(static_cast<Index>(perm[static_cast<std::size_t>(i)]));
  return out;
}

void MineConfig::validate() const {
  std::vector<std::string> bad;
  if (width < 1) bad.push_back("mine.width");
  if (steps < 1) bad.push_back("mine.steps");
  if (batch_size < 2) bad.push_back("mine.batch_size");
  if (!(lr > 0.0)) bad.push_back("mine.lr");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) bad.push_back("mine.ema_decay");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) bad.push_back("mine.tail_fraction");
  if (!bad.empty()) throw ConfigError(bad);
}

MIEstimate mine_train(const PairSource& source, Index x_dim, Index y_dim, const MineConfig& config,
                      const std::string& label) {
  config.validate();
  StatisticNet net(x_dim, y_dim, config.width, config.seed);
  optim::AdamState state;
  const optim::AdamConfig adam{0.9, 0.999, 1e-8, 0.0};
  Rng rng(derive_seed({config.seed, 0x70616972ULL}));

  MIEstimate est;
  est.label = label;
  double ema = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    auto [x, y] = source(rng, config.batch_size);
    const Matrix y_marg = shuffle_rows(y, rng);

    ad::Tape tape;
    models::Bound b(tape, net.params());
    const ad::Var tj = net.forward(b, x, y);
    const ad::Var tm = net.forward(b, x, y_marg);
    const double bound = dv_bound(tj.value().col(0), tm.value().col(0));
    if (!std::isfinite(bound)) throw NumericError("mine_train: non-finite bound at step " + std::to_string(step));
    est.curve.push_back(bound);

    const ad::Var exp_tm = ad::mean(ad::exp(tm));
    const double batch_mean_exp = exp_tm.item();
    if (!std::isfinite(batch_mean_exp) || batch_mean_exp <= 0.0)
      throw NumericError("mine_train: marginal exp term overflowed at step " + std::to_string(step));
    ema = step == 0 ? batch_mean_exp : config.ema_decay * ema + (1.0 - config.ema_decay) * batch_mean_exp;
    const ad::Var surrogate = ad::sub(ad::scale(exp_tm, 1.0 / ema), ad::mean(tj));

    net.params().zero_grad();
    tape.backward(surrogate);
    optim::adamw_step(net.params(), state, adam, config.lr);
  }
  est.window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.tail_fraction * est.curve.size())));
  double acc = 0.0;
  for (std::size_t i = est.curve.size() - est.window; i < est.curve.size(); ++i) acc += est.curve[i];
  est.value = acc / double(est.window);
  return est;
}

PairSource gaussian_pairs(double rho, Index dim) {
  require(rho > -1.0 && rho < 1.0, "gaussian_pairs: |rho| must be < 1");
  require(dim > 0, "gaussian_pairs: dim must be positive");
  return [rho, dim](Rng& rng, Index batch) {
    Matrix x = rng.normal_matrix(batch, dim);
    Matrix y = rho * x + std::sqrt(1.0 - rho * rho) * rng.normal_matrix(batch, dim);
    return std::pair{std::move(x), std::move(y)};
  };
}

double gaussian_mi(double rho, Index dim) { return -0.5 * double(dim) * std::log(1.0 - rho * rho); }

std::string to_string(Pair p) {
  switch (p) {
    case Pair::v_h: return "v:h";
    case Pair::h_hp: return "h:h'";
    case Pair::h_z: return "h:z";
    case Pair::z_zp: return "z:z'";
  }
  return "?";
}

Pair parse_pair(const std::string& s) {
  for (Pair p : all_pairs())
    if (to_string(p) == s) return p;
  throw InvalidArgument("unknown pair '" + s + "' (expected v:h, h:h', h:z or z:z')");
}

const std::vector<Pair>& all_pairs() {
  static const std::vector<Pair> all{Pair::v_h, Pair::h_hp, Pair::h_z, Pair::z_zp};
  return all;
}

std::pair<Index, Index> pair_dims(const models::Model& model, Pair pair) {
  const auto& c = model.config();
  switch (pair) {
    case Pair::v_h: return {c.input_width(), c.repr_dim};
    case Pair::h_hp: return {c.repr_dim, c.repr_dim};
    case Pair::h_z: return {c.repr_dim, c.embed_dim};
    case Pair::z_zp: return {c.embed_dim, c.embed_dim};
  }
  return {0, 0};
}

namespace {

struct Spaces {
  Matrix h;
  Matrix z;
};

Spaces forward_spaces(const models::Model& model, ParamStore& params, const Matrix& v, Rng& rng) {
  ad::Tape tape;
  models::Bound b(tape, params);
  gauss::NoiseStack noise;
  if (is_stochastic(model.variant())) noise.push_back(rng.normal_matrix(v.rows(), model.stochastic_dim()));
  const ForwardOutput out = model.pipeline_forward(b, tape.constant(v), noise, models::Mode::eval);
  Spaces s;
  s.h = out.h_point ? out.h_point->value() : out.h_samples.front().value();
  s.z = out.z_point ? out.z_point->value() : out.z_samples.front().value();
  return s;
}

}  // namespace

PairSource probe_pairs(const models::Model& model, ParamStore& params, const Matrix& x, const data::AugmentSpec& aug,
                       Pair pair, bool is_image, const ad::ImageShape& shape) {
  require(x.rows() > 0, "probe_pairs: empty data");
  require(x.cols() == model.config().input_width(), "probe_pairs: data width does not match the model");
  return [&model, &params, &x, aug, pair, is_image, shape](Rng& rng, Index batch) {
    std::vector<std::size_t> rows(static_cast<std::size_t>(batch));
    for (auto& r : rows) r = rng.below(static_cast<std::uint64_t>(x.rows()));
    std::vector<std::uint64_t> seeds(rows.size());
    for (auto& s : seeds) s = rng.next_u64();
    const data::ViewPair views = data::make_views(data::gather_rows(x, rows), aug, seeds, is_image, shape);
    const Spaces a = forward_spaces(model, params, views.v, rng);
    switch (pair) {
      case Pair::v_h: return std::pair{views.v, a.h};
      case Pair::h_z: return std::pair{a.h, a.z};
      case Pair::h_hp: return std::pair{a.h, forward_spaces(model, params, views.v_prime, rng).h};
      case Pair::z_zp: break;
    }
    return std::pair{a.z, forward_spaces(model, params, views.v_prime, rng).z};
  };
}

}  // namespace pssl::mi
