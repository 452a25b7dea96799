#include "pssl/models.hpp"

#include "pssl/rng.hpp"

#include <cmath>

namespace pssl::models {

std::string to_string(EncoderKind k) { return k == EncoderKind::mlp ? "mlp" : "conv"; }

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "mlp") return EncoderKind::mlp;
  if (s == "conv") return EncoderKind::conv;
  throw InvalidArgument("unknown encoder kind '" + s + "' (expected mlp|conv)");
}

void ModelConfig::validate() const {
  std::vector<std::string> bad;
  if (encoder == EncoderKind::mlp && input_dim < 1) bad.push_back("model.input_dim");
  for (int w : encoder_hidden)
    if (w < 1) bad.push_back("model.encoder_hidden");
  if (encoder == EncoderKind::conv) {
    if (image.channels < 1 || image.height < 2 || image.width < 2) bad.push_back("model.image");
    if (conv_channels.empty()) bad.push_back("model.conv_channels");
    for (int c : conv_channels)
      if (c < 1) bad.push_back("model.conv_channels");
  }
  if (repr_dim < 1) bad.push_back("model.repr_dim");
  if (proj_width < 1) bad.push_back("model.proj_width");
  if (embed_dim < 1) bad.push_back("model.embed_dim");
  if (!(sigma_min > 0.0)) bad.push_back("model.sigma_min");
  if (!(sigma_init > sigma_min)) bad.push_back("model.sigma_init");
  if (!(bn_eps > 0.0)) bad.push_back("model.bn_eps");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) bad.push_back("model.bn_momentum");
  if (!bad.empty()) throw ConfigError(bad);
}

ad::Var Bound::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  ad::Var v = tape_.bind(store_.at(name));
  vars_.emplace(name, v);
  return v;
}

Model::Model(ModelConfig config, Variant variant, gauss::PriorConfig prior)
    : config_(std::move(config)), variant_(variant), prior_(prior) {
  config_.validate();
}

Index Model::stochastic_dim() const {
  switch (variant_) {
    case Variant::zprob: return config_.embed_dim;
    case Variant::hprob: return config_.repr_dim;
    case Variant::deterministic: break;
  }
  return 0;
}

namespace {

void add_linear(ParamStore& store, Rng& rng, const std::string& name, Index in, Index out,
                std::optional<double> bias_value = std::nullopt) {
  const double bound = 1.0 / std::sqrt(double(in));
  store.add(name + ".weight", rng.uniform_matrix(in, out, -bound, bound));
  store.add(name + ".bias",
            bias_value ? Matrix::Constant(1, out, *bias_value) : rng.uniform_matrix(1, out, -bound, bound));
}

void add_batch_norm(ParamStore& store, const std::string& name, Index width) {
  store.add(name + ".gamma", Matrix::Ones(1, width));
  store.add(name + ".beta", Matrix::Zero(1, width));
  store.add(name + ".running_mean", Matrix::Zero(1, width), false);
  store.add(name + ".running_var", Matrix::Ones(1, width), false);
}

}  // namespace

void Model::init(ParamStore& store, std::uint64_t seed) const {
  Rng rng(derive_seed({seed, 0x6d6f64656cULL}));
  const double sigma_bias = gauss::raw_from_sigma(config_.sigma_init, config_.sigma_min);

  Index width = 0;
  if (config_.encoder == EncoderKind::mlp) {
    width = config_.input_dim;
    for (std::size_t i = 0; i < config_.encoder_hidden.size(); ++i) {
      add_linear(store, rng, "enc.fc" + std::to_string(i + 1), width, config_.encoder_hidden[i]);
      width = config_.encoder_hidden[i];
    }
  } else {
    int in_c = config_.image.channels;
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
      const int out_c = config_.conv_channels[i];
      const Index fan_in = static_cast<Index>(in_c) * 9;
      const double bound = 1.0 / std::sqrt(double(fan_in));
      const std::string name = "enc.conv" + std::to_string(i + 1);
      store.add(name + ".weight", rng.uniform_matrix(out_c, fan_in, -bound, bound));
      store.add(name + ".bias", rng.uniform_matrix(1, out_c, -bound, bound));
      in_c = out_c;
    }
    width = in_c;
  }
  if (variant_ == Variant::hprob) {
    add_linear(store, rng, "enc.mu", width, config_.repr_dim);
    add_linear(store, rng, "enc.sigma", width, config_.repr_dim, sigma_bias);
  } else {
    add_linear(store, rng, "enc.out", width, config_.repr_dim);
  }

  add_linear(store, rng, "proj.fc1", config_.repr_dim, config_.proj_width);
  add_batch_norm(store, "proj.bn1", config_.proj_width);
  add_linear(store, rng, "proj.fc2", config_.proj_width, config_.proj_width);
  add_batch_norm(store, "proj.bn2", config_.proj_width);
  if (variant_ == Variant::zprob) {
    add_linear(store, rng, "proj.mu", config_.proj_width, config_.embed_dim);
    add_linear(store, rng, "proj.sigma", config_.proj_width, config_.embed_dim, sigma_bias);
  } else {
    add_linear(store, rng, "proj.out", config_.proj_width, config_.embed_dim);
  }

  // Deterministic runs still register the prior so it is present (and off the loss path).
  if (prior_.kind == PriorKind::mog) {
    const Index dim = is_stochastic(variant_) ? stochastic_dim() : Index(config_.embed_dim);
    gauss::register_mog_prior(store, kPriorPrefix, prior_.components, dim, rng, prior_.init_mean_std,
                              config_.sigma_min);
  }
}

ad::Var Model::linear(Bound& b, const std::string& name, const ad::Var& x) const {
  return ad::add_row(ad::matmul(x, b(name + ".weight")), b(name + ".bias"));
}

ad::Var Model::batch_norm(Bound& b, const std::string& name, const ad::Var& x, Mode mode) const {
  ad::Tape& tape = b.tape();
  const ad::Var gamma = b(name + ".gamma");
  const ad::Var beta = b(name + ".beta");
  Tensor& running_mean = b.store().at(name + ".running_mean");
  Tensor& running_var = b.store().at(name + ".running_var");
  ad::Var normalized;
  if (mode == Mode::train) {
    require(x.rows() >= 2, "batch_norm: training mode needs at least 2 rows");
    const ad::Var mu = ad::col_mean(x);
    const ad::Var centered = ad::add_row(x, -1.0 * mu);
    const ad::Var var = ad::col_mean(ad::square(centered));
    normalized = ad::mul_row(centered, ad::reciprocal(ad::sqrt(ad::add_scalar(var, config_.bn_eps))));

    const double m = config_.bn_momentum;
    const double n = double(x.rows());
    running_mean.value = to_float_grid((1.0 - m) * running_mean.value + m * mu.value());
    running_var.value = to_float_grid((1.0 - m) * running_var.value + m * var.value() * (n / (n - 1.0)));
  } else {
    const Matrix shift = -running_mean.value;
    const Matrix inv_std = (running_var.value.array() + config_.bn_eps).rsqrt().matrix();
    normalized = ad::mul_row(ad::add_row(x, tape.constant(shift)), tape.constant(inv_std));
  }
  return ad::add_row(ad::mul_row(normalized, gamma), beta);
}

StageOutput Model::head(Bound& b, const std::string& prefix, const ad::Var& x, bool stochastic) const {
  StageOutput out;
  if (stochastic) {
    const ad::Var mu = linear(b, prefix + ".mu", x);
    const ad::Var sigma = gauss::sigma_from_raw(linear(b, prefix + ".sigma", x), config_.sigma_min);
    out.dist = gauss::GaussVar{mu, sigma};
  } else {
    out.point = linear(b, prefix + ".out", x);
  }
  return out;
}

StageOutput Model::encoder_forward(Bound& b, const ad::Var& v) const {
  require(v.cols() == config_.input_width(),
          "encoder_forward: input width " + std::to_string(v.cols()) + " does not match model input " +
              std::to_string(config_.input_width()));
  ad::Var x = v;
  if (config_.encoder == EncoderKind::mlp) {
    for (std::size_t i = 0; i < config_.encoder_hidden.size(); ++i) {
      x = ad::relu(linear(b, "enc.fc" + std::to_string(i + 1), x));
    }
  } else {
    ad::ImageShape shape = config_.image;
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
      const std::string name = "enc.conv" + std::to_string(i + 1);
      x = ad::relu(ad::conv2d(x, b(name + ".weight"), b(name + ".bias"), shape, 3, 2, 1));
      shape = ad::conv2d_output_shape(shape, config_.conv_channels[i], 3, 2, 1);
    }
    x = ad::global_avg_pool(x, shape);
  }
  return head(b, "enc", x, variant_ == Variant::hprob);
}

StageOutput Model::projector_forward(Bound& b, const ad::Var& h, Mode mode) const {
  require(h.cols() == config_.repr_dim, "projector_forward: representation width mismatch");
  ad::Var x = ad::relu(batch_norm(b, "proj.bn1", linear(b, "proj.fc1", h), mode));
  x = ad::relu(batch_norm(b, "proj.bn2", linear(b, "proj.fc2", x), mode));
  return head(b, "proj", x, variant_ == Variant::zprob);
}

ForwardOutput Model::pipeline_forward(Bound& b, const ad::Var& v, const gauss::NoiseStack& noise,
                                      Mode mode) const {
  ForwardOutput out;
  out.variant = variant_;
  const StageOutput enc = encoder_forward(b, v);
  switch (variant_) {
    case Variant::deterministic:
      out.h_point = enc.point;
      out.z_point = projector_forward(b, *enc.point, mode).point;
      break;
    case Variant::zprob: {
      require(!noise.empty(), "pipeline_forward: K must be at least 1 for zprob");
      out.h_point = enc.point;
      out.z_dist = projector_forward(b, *enc.point, mode).dist;
      for (const Matrix& eps : noise) out.z_samples.push_back(gauss::sample_reparam(*out.z_dist, eps));
      break;
    }
    case Variant::hprob: {
      require(!noise.empty(), "pipeline_forward: K must be at least 1 for hprob");
      out.h_dist = enc.dist;
      for (const Matrix& eps : noise) {
        const ad::Var h = gauss::sample_reparam(*out.h_dist, eps);
        out.h_samples.push_back(h);
        out.z_samples.push_back(*projector_forward(b, h, mode).point);
      }
      break;
    }
  }
  return out;
}

gauss::PriorVar Model::bind_prior(Bound& b) const {
  gauss::PriorVar p;
  if (is_stochastic(variant_) && prior_.kind == PriorKind::mog) {
    p.kind = PriorKind::mog;
    p.mog.means = b(kPriorPrefix + "means");
    p.mog.sigmas = gauss::sigma_from_raw(b(kPriorPrefix + "sigma_raw"), config_.sigma_min);
  }
  return p;
}

}  // namespace pssl::models
