#include "pssl/evalprobe.hpp"

#include "pssl/data.hpp"
#include "pssl/optim.hpp"
#include "pssl/rng.hpp"

#include <cmath>
#include <limits>

namespace pssl::eval {

const gauss::DiagGaussianBatch* Embeddings::stochastic_dist() const {
  if (z_dist) return &*z_dist;
  if (h_dist) return &*h_dist;
  return nullptr;
}

Embeddings embed(const models::Model& model, ParamStore& params, const Matrix& x, Index chunk) {
  require(chunk > 0, "embed: chunk must be positive");
  const Variant variant = model.variant();
  const auto& cfg = model.config();
  Embeddings out;
  out.h.resize(x.rows(), cfg.repr_dim);
  out.z.resize(x.rows(), cfg.embed_dim);
  if (variant == Variant::hprob) out.h_dist = gauss::DiagGaussianBatch{out.h, Matrix(x.rows(), cfg.repr_dim)};
  if (variant == Variant::zprob) out.z_dist = gauss::DiagGaussianBatch{out.z, Matrix(x.rows(), cfg.embed_dim)};

  for (Index start = 0; start < x.rows(); start += chunk) {
    const Index rows = std::min(chunk, x.rows() - start);
    ad::Tape tape;
    models::Bound b(tape, params);
    const models::StageOutput enc = model.encoder_forward(b, tape.constant(x.middleRows(start, rows)));
    ad::Var h;
    if (enc.dist) {
      h = enc.dist->mu;
      out.h_dist->mu.middleRows(start, rows) = enc.dist->mu.value();
      out.h_dist->sigma.middleRows(start, rows) = enc.dist->sigma.value();
    } else {
      h = *enc.point;
    }
    out.h.middleRows(start, rows) = h.value();
    const models::StageOutput proj = model.projector_forward(b, h, models::Mode::eval);
    if (proj.dist) {
      out.z.middleRows(start, rows) = proj.dist->mu.value();
      out.z_dist->mu.middleRows(start, rows) = proj.dist->mu.value();
      out.z_dist->sigma.middleRows(start, rows) = proj.dist->sigma.value();
    } else {
      out.z.middleRows(start, rows) = proj.point->value();
    }
  }
  return out;
}

Matrix extract_representation(const models::Model& model, ParamStore& params, const Matrix& x, Variant expected,
                              const RepresentationOptions& options) {
  if (model.variant() != expected)
    throw InvalidArgument("extract_representation: checkpoint variant is " + to_string(model.variant()) +
                          ", expected " + to_string(expected));
  require(options.samples >= 0, "extract_representation: samples must be >= 0");
  Embeddings e = embed(model, params, x);
  if (options.samples == 0 || model.variant() != Variant::hprob) return e.h;
  Rng rng(derive_seed({options.seed, 0x72657072ULL}));
  Matrix acc = Matrix::Zero(x.rows(), e.h.cols());
  for (int k = 0; k < options.samples; ++k)
    acc += gauss::sample_reparam(*e.h_dist, rng.normal_matrix(x.rows(), e.h.cols()));
  return acc / double(options.samples);
}

Matrix l2_normalize(const Matrix& x) {
  Matrix out = x;
  for (Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0)) throw InvalidArgument("l2_normalize: row " + std::to_string(i) + " has zero norm");
    out.row(i) /= norm;
  }
  return out;
}

void ProbeConfig::validate() const {
  std::vector<std::string> bad;
  if (epochs < 1) bad.push_back("probe.epochs");
  if (batch_size < 1) bad.push_back("probe.batch_size");
  if (!(lr > 0.0)) bad.push_back("probe.lr");
  if (!(weight_decay >= 0.0)) bad.push_back("probe.weight_decay");
  for (double f : decay_at)
    if (!(f > 0.0 && f < 1.0)) bad.push_back("probe.decay_at");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) bad.push_back("probe.decay_factor");
  if (finetune_epochs < 1) bad.push_back("probe.finetune_epochs");
  if (!(head_lr > 0.0)) bad.push_back("probe.head_lr");
  if (!(backbone_lr >= 0.0)) bad.push_back("probe.backbone_lr");
  if (!(finetune_weight_decay >= 0.0)) bad.push_back("probe.finetune_weight_decay");
  if (!bad.empty()) throw ConfigError(bad);
}

Matrix LinearHead::logits(const Matrix& features) const {
  require(features.cols() == weight.rows(), "LinearHead: feature width mismatch");
  return (features * weight).rowwise() + bias;
}

std::vector<int> LinearHead::predict(const Matrix& features) const {
  const Matrix l = logits(features);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Index i = 0; i < l.rows(); ++i) {
    Index best = 0;
    l.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

int count_classes(const std::vector<int>& labels) {
  int max_label = -1;
  for (int y : labels) {
    require(y >= 0, "labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  return max_label + 1;
}

namespace {

const std::string kHeadWeight = "probe.weight";
const std::string kHeadBias = "probe.bias";

void check_labels(const std::vector<int>& labels, Index rows, int num_classes) {
  require(static_cast<Index>(labels.size()) == rows, "probe: features and labels are not aligned");
  int first = -1;
  bool multi = false;
  for (int y : labels) {
    require(y >= 0 && y < num_classes, "probe: label out of range");
    if (first < 0) first = y;
    else if (y != first) multi = true;
  }
  if (!multi) throw InvalidArgument("probe: training labels contain a single class");
}

Matrix one_hot(const std::vector<int>& labels, std::span<const std::size_t> rows, int num_classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(rows.size()), num_classes);
  for (std::size_t i = 0; i < rows.size(); ++i) m(static_cast<Index>(i), labels[rows[i]]) = 1.0;
  return m;
}

ad::Var cross_entropy(const ad::Var& logits, const Matrix& targets) {
  const ad::Var lse = ad::logsumexp_rows(logits);
  const ad::Var picked = ad::row_sum(ad::mul(logits, logits.tape().constant(targets)));
  return ad::mean(ad::sub(lse, picked));
}

ad::Var l2_normalize_rows(const ad::Var& x) {
  return ad::mul_col(x, ad::reciprocal(ad::sqrt(ad::row_sum(ad::square(x)))));
}

LinearHead read_head(const ParamStore& store) {
  return LinearHead{store.at(kHeadWeight).value, store.at(kHeadBias).value};
}

std::vector<std::size_t> batch_rows(const std::vector<std::size_t>& order, std::size_t start, std::size_t size) {
  const std::size_t end = std::min(order.size(), start + size);
  return {order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end)};
}

}  // namespace

void score(ProbeResult& result, const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
  require(predictions.size() == labels.size() && !labels.empty(), "score: predictions and labels are not aligned");
  result.per_class.assign(static_cast<std::size_t>(num_classes), 0.0);
  result.class_counts.assign(static_cast<std::size_t>(num_classes), 0);
  Index correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++result.class_counts[c];
    if (predictions[i] == labels[i]) {
      ++correct;
      result.per_class[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < result.per_class.size(); ++c)
    result.per_class[c] = result.class_counts[c] ? result.per_class[c] / double(result.class_counts[c])
                                                 : std::numeric_limits<double>::quiet_NaN();
  result.accuracy = double(correct) / double(labels.size());
}

ProbeResult train_probe(const Matrix& train_features, const std::vector<int>& train_labels,
                        const Matrix& test_features, const std::vector<int>& test_labels, int num_classes,
                        const ProbeConfig& config) {
  config.validate();
  check_labels(train_labels, train_features.rows(), num_classes);
  require(test_features.cols() == train_features.cols(), "train_probe: train/test width mismatch");
  const Matrix xtr = l2_normalize(train_features);

  ParamStore store;
  store.add(kHeadWeight, Matrix::Zero(xtr.cols(), num_classes));
  store.add(kHeadBias, Matrix::Zero(1, num_classes));
  optim::AdamState state;
  const optim::AdamConfig adam{0.9, 0.999, 1e-8, config.weight_decay};

  ProbeResult result;
  const auto n = static_cast<std::size_t>(xtr.rows());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.lr;
    for (double f : config.decay_at)
      if (epoch >= f * config.epochs) lr *= config.decay_factor;
    Rng rng(derive_seed({config.seed, static_cast<std::uint64_t>(epoch), 0x70726f6265ULL}));
    const auto order = rng.permutation(n);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const auto rows = batch_rows(order, start, batch);
      ad::Tape tape;
      models::Bound b(tape, store);
      const ad::Var x = tape.constant(data::gather_rows(xtr, rows));
      const ad::Var logits = ad::add_row(ad::matmul(x, b(kHeadWeight)), b(kHeadBias));
      const ad::Var loss = cross_entropy(logits, one_hot(train_labels, rows, num_classes));
      store.zero_grad();
      tape.backward(loss);
      optim::adamw_step(store, state, adam, lr);
      loss_sum += loss.item();
      ++batches;
    }
    result.curve.push_back(loss_sum / batches);
  }
  result.head = read_head(store);
  score(result, result.head.predict(l2_normalize(test_features)), test_labels, num_classes);
  return result;
}

namespace {

ad::Var representation_var(const models::Model& model, models::Bound& b, const ad::Var& x) {
  const models::StageOutput enc = model.encoder_forward(b, x);
  return enc.dist ? enc.dist->mu : *enc.point;
}

}  // namespace

Matrix probe_logits(const models::Model& model, ParamStore& params, const LinearHead& head, const Matrix& x) {
  return head.logits(l2_normalize(embed(model, params, x).h));
}

ProbeResult finetune(const models::Model& model, ParamStore& params, const Matrix& train_x,
                     const std::vector<int>& train_labels, const Matrix& test_x, const std::vector<int>& test_labels,
                     int num_classes, const ProbeConfig& config) {
  config.validate();
  check_labels(train_labels, train_x.rows(), num_classes);
  const ProbeResult frozen =
      train_probe(embed(model, params, train_x).h, train_labels, embed(model, params, test_x).h, test_labels,
                  num_classes, config);

  for (const auto& [name, value] : {std::pair{kHeadWeight, frozen.head.weight}, std::pair{kHeadBias, Matrix(frozen.head.bias)}}) {
    if (params.contains(name)) params.assign(name, to_float_grid(value));
    else params.add(name, value);
  }
  optim::AdamState state;
  const optim::AdamConfig adam{0.9, 0.999, 1e-8, config.finetune_weight_decay};
  const auto n = static_cast<std::size_t>(train_x.rows());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const long per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total = per_epoch * config.finetune_epochs;

  ProbeResult result;
  result.curve = frozen.curve;
  long step = 0;
  for (int epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    Rng rng(derive_seed({config.seed, static_cast<std::uint64_t>(epoch), 0x66696e65ULL}));
    const auto order = rng.permutation(n);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const auto rows = batch_rows(order, start, batch);
      const double progress = optim::cosine_schedule(step, total, 0, 1.0, 0.0);
      ad::Tape tape;
      models::Bound b(tape, params);
      const ad::Var h = l2_normalize_rows(representation_var(model, b, tape.constant(data::gather_rows(train_x, rows))));
      const ad::Var logits = ad::add_row(ad::matmul(h, b(kHeadWeight)), b(kHeadBias));
      const ad::Var loss = cross_entropy(logits, one_hot(train_labels, rows, num_classes));
      params.zero_grad();
      tape.backward(loss);
      optim::adamw_step(params, state, adam, [&](const std::string& name) {
        if (name.rfind("probe.", 0) == 0) return config.head_lr * progress;
        if (name.rfind("enc.", 0) == 0) return config.backbone_lr * progress;
        return 0.0;
      });
      loss_sum += loss.item();
      ++batches;
    }
    result.curve.push_back(loss_sum / batches);
  }
  result.head = read_head(params);
  score(result, result.head.predict(l2_normalize(embed(model, params, test_x).h)), test_labels, num_classes);
  return result;
}

SigmaPartition sigma_by_correctness(const Matrix& sigma, const std::vector<int>& predictions,
                                    const std::vector<int>& labels) {
  require(static_cast<Index>(predictions.size()) == sigma.rows() && predictions.size() == labels.size(),
          "sigma_by_correctness: sigma, predictions and labels must be aligned");
  require(sigma.cols() > 0, "sigma_by_correctness: empty sigma");
  SigmaPartition p;
  double sum_correct = 0.0;
  double sum_incorrect = 0.0;
  for (Index i = 0; i < sigma.rows(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    SigmaRow row{i, sigma.row(i).mean(), labels[u], predictions[u], predictions[u] == labels[u]};
    if (row.correct) {
      sum_correct += row.mean_sigma;
      ++p.count_correct;
    } else {
      sum_incorrect += row.mean_sigma;
      ++p.count_incorrect;
    }
    p.table.push_back(row);
  }
  if (p.count_correct) p.mean_correct = sum_correct / double(p.count_correct);
  if (p.count_incorrect) p.mean_incorrect = sum_incorrect / double(p.count_incorrect);
  return p;
}

}  // namespace pssl::eval
