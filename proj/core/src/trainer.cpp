#include "pssl/trainer.hpp"

#include "pssl/checkpoint.hpp"
#include "pssl/rng.hpp"

#include <cmath>
#include <limits>

namespace pssl::train {

data::Dataset load_dataset(const RunConfig& config) {
  if (config.data.kind == DataKind::synthetic) return data::synth_multiview_dataset(config.data.synthetic, config.data.seed);
  std::vector<std::filesystem::path> files(config.data.train_files.begin(), config.data.train_files.end());
  return data::load_cifar_binary(files, config.data.test_file, config.data.ood_file);
}

models::Model make_model(const RunConfig& config) { return models::Model(config.model, config.variant, config.prior); }

long steps_per_epoch(const RunConfig& config, Index train_rows) {
  return std::max<long>(1, static_cast<long>(train_rows) / config.schedule.batch_size);
}

namespace {

constexpr std::uint64_t kPermTag = 0x7065726d;
constexpr std::uint64_t kNoiseTag = 0x6e6f697365;

void sigma_summary(const ForwardOutput& a, const ForwardOutput& b, double& mean, double& std) {
  const Matrix& sa = a.stochastic_dist().sigma.value();
  const Matrix& sb = b.stochastic_dist().sigma.value();
  const double n = double(sa.size() + sb.size());
  mean = (sa.sum() + sb.sum()) / n;
  const double sq = (sa.array() - mean).square().sum() + (sb.array() - mean).square().sum();
  std = std::sqrt(sq / n);
}

}  // namespace

TrainResult train(const RunConfig& config, const data::Dataset& dataset, const StepCallback& on_step) {
  config.validate();
  require(dataset.train_x.cols() == config.model.input_width(), "train: dataset width does not match the model");
  require(dataset.train_x.rows() >= config.schedule.batch_size, "train: fewer training rows than one batch");

  const models::Model model = make_model(config);
  TrainResult result;
  model.init(result.params, config.seed);

  const Index n = dataset.train_x.rows();
  const Index batch = config.schedule.batch_size;
  const long per_epoch = steps_per_epoch(config, n);
  const long total = per_epoch * config.schedule.epochs;
  const long warmup = per_epoch * config.schedule.warmup_epochs;
  const int k = is_stochastic(config.variant) ? config.mc_samples : 0;
  const Index sdim = model.stochastic_dim();

  long step = 0;
  for (int epoch = 0; epoch < config.schedule.epochs; ++epoch) {
    Rng perm_rng(derive_seed({config.seed, static_cast<std::uint64_t>(epoch), kPermTag}));
    const auto order = perm_rng.permutation(static_cast<std::size_t>(n));
    for (long s = 0; s < per_epoch; ++s, ++step) {
      std::vector<std::size_t> rows(order.begin() + s * batch, order.begin() + (s + 1) * batch);
      std::vector<std::uint64_t> seeds;
      seeds.reserve(rows.size());
      for (auto r : rows) seeds.push_back(derive_seed({config.seed, static_cast<std::uint64_t>(epoch), r}));
      const data::ViewPair views = data::make_views(data::gather_rows(dataset.train_x, rows), config.augment, seeds,
                                                    dataset.is_image, dataset.image);

      Rng noise_rng(derive_seed({config.seed, static_cast<std::uint64_t>(step), kNoiseTag}));
      const auto noise_a = gauss::draw_noise(noise_rng, k, batch, sdim);
      const auto noise_b = gauss::draw_noise(noise_rng, k, batch, sdim);

      const double lr = optim::cosine_schedule(step + 1, total, warmup, config.optimizer.lr_peak,
                                               config.optimizer.lr_final);
      ad::Tape tape;
      models::Bound b(tape, result.params);
      const ForwardOutput fa = model.pipeline_forward(b, tape.constant(views.v), noise_a, models::Mode::train);
      const ForwardOutput fb = model.pipeline_forward(b, tape.constant(views.v_prime), noise_b, models::Mode::train);
      const objectives::LossTerms terms = objectives::mc_objective(config.method, fa, fb, config.loss, model.bind_prior(b));

      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.lr = lr;
      row.loss = terms.values();
      const std::string bad = row.loss.first_non_finite();
      if (!bad.empty())
        throw NumericError("non-finite loss term '" + bad + "' at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + ")");
      if (is_stochastic(config.variant)) {
        sigma_summary(fa, fb, row.mean_sigma, row.std_sigma);
      } else {
        row.mean_sigma = std::numeric_limits<double>::quiet_NaN();
        row.std_sigma = std::numeric_limits<double>::quiet_NaN();
      }

      result.params.zero_grad();
      tape.backward(terms.total);
      optim::adamw_step(result.params, result.opt, config.optimizer.adam, lr);
      result.params.quantize();

      result.history.push_back(row);
      if (on_step) on_step(row, result.params);
    }
  }
  return result;
}

csv::Table metrics_table(const std::vector<MetricsRow>& history) {
  csv::Table t({"step", "epoch", "lr", "loss_total", "loss_inv", "loss_reg", "loss_reg_var", "loss_reg_cov",
                "loss_div", "mean_sigma", "std_sigma"});
  for (const auto& r : history) {
    t.add({csv::format(r.step), csv::format(r.epoch), csv::format(r.lr), csv::format(r.loss.total),
           csv::format(r.loss.inv), csv::format(r.loss.reg), csv::format(r.loss.reg_var), csv::format(r.loss.reg_cov),
           csv::format(r.loss.div), csv::format(r.mean_sigma), csv::format(r.std_sigma)});
  }
  return t;
}

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const ParamStore& params,
                     const optim::AdamState& opt) {
  ckpt::Contents c;
  c.meta = {{"config", to_json(config)}, {"optimizer_step", opt.step}};
  for (const auto& [name, t] : params) c.tensors.push_back({name, t.value, ckpt::Dtype::f32});
  for (const auto& [name, m] : opt.moments) {
    c.tensors.push_back({"opt.m." + name, m.m, ckpt::Dtype::f64});
    c.tensors.push_back({"opt.v." + name, m.v, ckpt::Dtype::f64});
  }
  ckpt::write(dir, c);
}

LoadedRun load_checkpoint(const std::filesystem::path& dir) {
  const ckpt::Contents c = ckpt::read(dir);
  if (!c.meta.contains("config")) throw IoError(dir.string() + ": checkpoint has no config");
  LoadedRun run{run_config_from_json(c.meta.at("config")), {}, {}};
  make_model(run.config).init(run.params, run.config.seed);
  for (const auto& [name, t] : run.params) {
    if (!c.contains(name)) throw IoError(dir.string() + ": checkpoint is missing tensor " + name);
    const auto& stored = c.at(name).value;
    if (stored.rows() != t.value.rows() || stored.cols() != t.value.cols())
      throw IoError(dir.string() + ": shape mismatch for " + name);
    run.params.assign(name, stored);
    if (c.contains("opt.m." + name)) {
      run.opt.moments[name] = optim::Moments{c.at("opt.m." + name).value, c.at("opt.v." + name).value};
    }
  }
  run.opt.step = c.meta.value("optimizer_step", 0L);
  return run;
}

}  // namespace pssl::train
