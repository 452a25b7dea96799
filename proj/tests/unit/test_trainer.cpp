#include "pssl/data.hpp"
#include "pssl/evalprobe.hpp"
#include "pssl/optim.hpp"
#include "pssl/trainer.hpp"

#include "test_support.hpp"

#include <cmath>
#include <limits>

using namespace pssl;

namespace {

RunConfig tiny_run(Method method = Method::barlow, Variant variant = Variant::deterministic) {
  RunConfig rc;
  rc.method = method;
  rc.variant = variant;
  rc.data.synthetic.num_classes = 4;
  rc.data.synthetic.latent_dim = 6;
  rc.data.synthetic.observed_dim = 12;
  rc.data.synthetic.train_size = 256;
  rc.data.synthetic.test_size = 128;
  rc.data.synthetic.ood_size = 64;
  rc.model.input_dim = 12;
  rc.model.encoder_hidden = {32};
  rc.model.repr_dim = 16;
  rc.model.proj_width = 32;
  rc.model.embed_dim = 16;
  rc.schedule.batch_size = 32;
  rc.schedule.epochs = 3;
  rc.schedule.warmup_epochs = 1;
  rc.seed = 5;
  return rc;
}

RowVector col_std(const Matrix& z) {
  const Matrix c = z.rowwise() - z.colwise().mean();
  return (c.colwise().squaredNorm() / double(z.rows() - 1)).array().sqrt();
}

// Embeddings under batch statistics, the space the loss sees during training.
Matrix train_mode_z(const models::Model& m, ParamStore params, const Matrix& x) {
  ad::Tape t;
  models::Bound b(t, params);
  return m.pipeline_forward(b, t.constant(x), {}, models::Mode::train).z_point->value();
}

}  // namespace

TEST(Dataset, ZeroNoiseClassesAreIdentical) {
  data::SyntheticSpec spec;
  spec.latent_noise = 0;
  spec.observation_noise = 0;
  spec.train_size = 200;
  const data::Dataset d = data::synth_multiview_dataset(spec, 3);
  std::map<int, RowVector> first;
  for (Index i = 0; i < d.train_x.rows(); ++i) {
    auto [it, inserted] = first.emplace(d.train_y[i], d.train_x.row(i));
    if (!inserted) EXPECT_EQ(it->second, RowVector(d.train_x.row(i)));
  }
  EXPECT_GT(first.size(), 5u);
}

TEST(Dataset, SeededRegenerationIsIdentical) {
  data::SyntheticSpec spec;
  spec.train_size = 100;
  const data::Dataset a = data::synth_multiview_dataset(spec, 11), b = data::synth_multiview_dataset(spec, 11);
  EXPECT_EQ(a.train_x, b.train_x);
  EXPECT_EQ(a.train_y, b.train_y);
  EXPECT_EQ(a.test_x, b.test_x);
  EXPECT_EQ(a.ood_x, b.ood_x);
  const data::Dataset c = data::synth_multiview_dataset(spec, 12);
  EXPECT_NE(a.train_x, c.train_x);
  EXPECT_EQ(a.train_x.cols(), spec.observed_dim);
  EXPECT_EQ(a.ood_x.rows(), spec.ood_size);
}

TEST(Dataset, InvalidSpecThrows) {
  data::SyntheticSpec spec;
  spec.num_classes = 1;
  spec.latent_noise = -1;
  EXPECT_EQ(spec.problems().size(), 2u);
  EXPECT_ANY_THROW(data::synth_multiview_dataset(spec, 1));
}

TEST(Dataset, WellSeparatedClassesAreLinearlyProbeable) {
  data::SyntheticSpec spec;
  spec.center_scale = 5.0;
  spec.latent_noise = 0.2;  // separation 25x the noise scale
  spec.observation_noise = 0.1;
  spec.train_size = 1024;
  spec.test_size = 512;
  const data::Dataset d = data::synth_multiview_dataset(spec, 2);
  eval::ProbeConfig pc;
  pc.epochs = 40;
  const eval::ProbeResult r = eval::train_probe(d.train_x, d.train_y, d.test_x, d.test_y, d.num_classes, pc);
  EXPECT_GE(r.accuracy, 0.95);
}

TEST(Views, ZeroStrengthIsIdentity) {
  Rng rng(1);
  const Matrix x = rng.normal_matrix(5, 8);
  data::AugmentSpec s;
  s.noise_std = s.mask_prob = s.gain = 0;
  const data::ViewPair vp = data::make_views(x, s, rng);
  EXPECT_EQ(vp.v, x);
  EXPECT_EQ(vp.v_prime, x);
  EXPECT_EQ(vp.item_seeds.size(), 5u);

  const ad::ImageShape shape{3, 6, 6};
  const Matrix img = rng.uniform_matrix(3, shape.size(), 0, 1);
  data::AugmentSpec is;
  is.crop_min_scale = 1.0;
  is.flip_prob = 0;
  is.brightness = is.contrast = 0;
  const data::ViewPair ip = data::make_views(img, is, rng, true, shape);
  EXPECT_LT((ip.v - img).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ip.v_prime - img).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Views, FullMaskGivesZeros) {
  Rng rng(2);
  data::AugmentSpec s;
  s.mask_prob = 1.0;
  const data::ViewPair vp = data::make_views(rng.normal_matrix(4, 7), s, rng);
  EXPECT_EQ(vp.v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(vp.v_prime.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Views, AdditiveNoiseHasZeroMean) {
  Rng rng(3);
  data::AugmentSpec s;
  s.mask_prob = s.gain = 0;
  s.noise_std = 1.0;
  const Matrix x = Matrix::Zero(100000, 1);
  const data::ViewPair vp = data::make_views(x, s, rng);
  // 5 standard errors of the mean for unit-variance noise.
  EXPECT_LT(std::abs(vp.v.mean()), 5.0 / std::sqrt(1e5));
  EXPECT_NEAR(std::sqrt(vp.v.squaredNorm() / 1e5), 1.0, 0.01);
}

TEST(Views, FlipAndCropStayInRangeAndDiffer) {
  Rng rng(4);
  const ad::ImageShape shape{3, 8, 8};
  const Matrix img = rng.uniform_matrix(6, shape.size(), 0, 1);
  const data::ViewPair vp = data::make_views(img, data::AugmentSpec{}, rng, true, shape);
  EXPECT_EQ(vp.v.rows(), 6);
  EXPECT_EQ(vp.v.cols(), shape.size());
  EXPECT_TRUE(vp.v.allFinite());
  EXPECT_NE(vp.v, vp.v_prime);
}

TEST(Views, PerItemSeedsIgnoreBatchComposition) {
  Rng rng(5);
  const Matrix x = rng.normal_matrix(6, 5);
  const std::vector<std::uint64_t> seeds{10, 11, 12, 13, 14, 15};
  const data::ViewPair all = data::make_views(x, data::AugmentSpec{}, seeds);
  const std::vector<std::size_t> rows{4, 1};
  const std::vector<std::uint64_t> sub_seeds{14, 11};
  const data::ViewPair sub = data::make_views(data::gather_rows(x, rows), data::AugmentSpec{}, sub_seeds);
  EXPECT_EQ(RowVector(sub.v.row(0)), RowVector(all.v.row(4)));
  EXPECT_EQ(RowVector(sub.v_prime.row(1)), RowVector(all.v_prime.row(1)));
  EXPECT_NE(all.v, all.v_prime);
}

TEST(Views, StratifiedSubsetKeepsClassProportions) {
  std::vector<int> y;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 50 * (c + 1); ++i) y.push_back(c);
  const auto idx = data::stratified_subset(y, 4, 0.1, 7);
  std::vector<int> counts(4, 0);
  for (auto i : idx) ++counts[y[i]];
  EXPECT_EQ(counts, (std::vector<int>{5, 10, 15, 20}));
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(idx, data::stratified_subset(y, 4, 0.1, 7));
  const auto tiny = data::stratified_subset(y, 4, 0.001, 7);
  EXPECT_EQ(tiny.size(), 4u);
}

TEST(Schedule, CosineEndpoints) {
  const long total = 1000, warm = 100;
  EXPECT_EQ(optim::cosine_schedule(0, total, warm, 1e-3, 5e-4), 0.0);
  EXPECT_DOUBLE_EQ(optim::cosine_schedule(warm, total, warm, 1e-3, 5e-4), 1e-3);
  EXPECT_DOUBLE_EQ(optim::cosine_schedule(total, total, warm, 1e-3, 5e-4), 5e-4);
  EXPECT_DOUBLE_EQ(optim::cosine_schedule(50, total, warm, 1e-3, 5e-4), 5e-4);
  EXPECT_NEAR(optim::cosine_schedule(550, total, warm, 1e-3, 5e-4), 7.5e-4, 1e-15);
  double prev = 1.0;
  for (long s = warm; s <= total; ++s) {
    const double lr = optim::cosine_schedule(s, total, warm, 1e-3, 5e-4);
    EXPECT_LE(lr, prev + 1e-18);
    prev = lr;
  }
  EXPECT_THROW(optim::cosine_schedule(5, 10, 10, 1e-3, 5e-4), InvalidArgument);
  EXPECT_THROW(optim::cosine_schedule(11, 10, 2, 1e-3, 5e-4), InvalidArgument);
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParams) {
  ParamStore s;
  s.add("p", Matrix::Constant(2, 2, 0.5));
  optim::AdamState st;
  optim::AdamConfig c;
  c.weight_decay = 0;
  s.zero_grad();
  for (int i = 0; i < 3; ++i) optim::adamw_step(s, st, c, 1e-2);
  EXPECT_EQ(s.at("p").value, Matrix::Constant(2, 2, 0.5));
}

TEST(AdamW, ZeroGradientDecaysGeometrically) {
  ParamStore s;
  s.add("p", Matrix::Constant(1, 3, 2.0));
  optim::AdamState st;
  optim::AdamConfig c;
  c.weight_decay = 0.1;
  s.zero_grad();
  double expect = 2.0;
  for (int i = 0; i < 5; ++i) {
    optim::adamw_step(s, st, c, 0.01);
    expect *= 1 - 0.01 * 0.1;
  }
  EXPECT_NEAR(s.at("p").value(0, 1), expect, 1e-15);
}

TEST(AdamW, HandIteratedScalar) {
  ParamStore s;
  s.add("p", Matrix::Constant(1, 1, 1.0));
  optim::AdamState st;
  optim::AdamConfig c;
  c.weight_decay = 0.01;
  const double lr = 0.1, grads[3] = {0.5, -0.2, 0.3};
  double p = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    s.at("p").grad(0, 0) = grads[t - 1];
    optim::adamw_step(s, st, c, lr);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    p = p - lr * mh / (std::sqrt(vh) + 1e-8) - lr * 0.01 * p;
    EXPECT_NEAR(s.at("p").value(0, 0), p, 1e-12);
  }
  EXPECT_EQ(st.step, 3);
}

TEST(AdamW, ShapeMismatchThrows) {
  ParamStore s;
  s.add("p", Matrix::Zero(2, 2));
  s.at("p").grad = Matrix::Zero(1, 2);
  optim::AdamState st;
  EXPECT_THROW(optim::adamw_step(s, st, {}, 0.1), InvalidArgument);
}

TEST(AdamW, PerTensorRateZeroFreezes) {
  ParamStore s;
  s.add("a", Matrix::Constant(1, 1, 1.0));
  s.add("b", Matrix::Constant(1, 1, 1.0));
  s.at("a").grad(0, 0) = s.at("b").grad(0, 0) = 1.0;
  optim::AdamState st;
  optim::adamw_step(s, st, {}, [](const std::string& n) { return n == "a" ? 0.1 : 0.0; });
  EXPECT_NE(s.at("a").value(0, 0), 1.0);
  EXPECT_EQ(s.at("b").value(0, 0), 1.0);
  EXPECT_EQ(st.moments.count("b"), 0u);
}

TEST(Train, StepsPerEpochDropsTail) {
  RunConfig rc = tiny_run();
  EXPECT_EQ(train::steps_per_epoch(rc, 256), 8);
  EXPECT_EQ(train::steps_per_epoch(rc, 255), 7);
}

TEST(Train, IdenticalConfigsGiveIdenticalHistories) {
  for (Variant v : {Variant::deterministic, Variant::zprob, Variant::hprob}) {
    RunConfig rc = tiny_run(Method::vicreg, v);
    rc.schedule.epochs = 2;
    rc.loss.beta = 1e-3;
    const data::Dataset d = train::load_dataset(rc);
    const train::TrainResult a = train::train(rc, d), b = train::train(rc, d);
    ASSERT_EQ(a.history.size(), 16u);
    EXPECT_EQ(train::metrics_table(a.history).str(), train::metrics_table(b.history).str());
    for (const auto& [name, t] : a.params) EXPECT_EQ(t.value, b.params.at(name).value) << name;
    rc.seed = 6;
    const train::TrainResult c = train::train(rc, d);
    EXPECT_NE(train::metrics_table(a.history).str(), train::metrics_table(c.history).str());
  }
}

TEST(Train, HistoryRowsAreConsistent) {
  RunConfig rc = tiny_run(Method::barlow, Variant::zprob);
  rc.loss.beta = 1e-2;
  rc.mc_samples = 2;
  const data::Dataset d = train::load_dataset(rc);
  long calls = 0;
  const train::TrainResult r = train::train(rc, d, [&](const train::MetricsRow&, const ParamStore&) { ++calls; });
  EXPECT_EQ(calls, long(r.history.size()));
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const train::MetricsRow& row = r.history[i];
    EXPECT_EQ(row.step, long(i));
    EXPECT_NEAR(row.loss.total, row.loss.inv + row.loss.reg + row.loss.div, 1e-6);
    EXPECT_GT(row.loss.div, 0.0);
    EXPECT_TRUE(std::isfinite(row.mean_sigma));
    EXPECT_GE(row.std_sigma, 0.0);
    EXPECT_EQ(row.epoch, int(i / 8));
  }
  EXPECT_GT(r.history[1].lr, r.history[0].lr);
  const csv::Table t = train::metrics_table(r.history);
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')),
            "step,epoch,lr,loss_total,loss_inv,loss_reg,loss_reg_var,loss_reg_cov,loss_div,mean_sigma,std_sigma");

  const train::TrainResult det = train::train(tiny_run(), d);
  EXPECT_TRUE(std::isnan(det.history[0].mean_sigma));
  EXPECT_EQ(det.history[0].loss.div, 0.0);
}

TEST(Train, LossDecreasesOverFiveHundredSteps) {
  RunConfig rc = tiny_run(Method::barlow);
  rc.schedule.epochs = 63;  // 8 steps per epoch
  const data::Dataset d = train::load_dataset(rc);
  const train::TrainResult r = train::train(rc, d);
  ASSERT_GE(r.history.size(), 500u);
  double start = 0, end = 0;
  for (int i = 0; i < 8; ++i) {
    start += r.history[i].loss.total;
    end += r.history[r.history.size() - 1 - i].loss.total;
  }
  EXPECT_LT(end, start);
  EXPECT_LT(r.history.back().loss.total, r.history.front().loss.total);
}

TEST(Train, RegularizationOffCollapsesEmbeddings) {
  RunConfig rc = tiny_run(Method::vicreg);
  rc.loss.tau = rc.loss.nu = rc.loss.lambda_bt = 0;
  rc.schedule.epochs = 100;
  rc.optimizer.lr_peak = 3e-3;
  rc.optimizer.lr_final = 1e-3;
  const data::Dataset d = train::load_dataset(rc);
  const models::Model m = train::make_model(rc);
  ParamStore init;
  m.init(init, rc.seed);
  const RowVector before = col_std(train_mode_z(m, init, d.test_x));
  train::TrainResult r = train::train(rc, d);
  const RowVector after = col_std(train_mode_z(m, r.params, d.test_x));
  for (Index j = 0; j < before.size(); ++j) EXPECT_LT(after(j), 0.1 * before(j)) << "dim " << j;
}

TEST(Train, NonFiniteLossAbortsNamingTerm) {
  RunConfig rc = tiny_run(Method::vicreg);
  const data::Dataset base = train::load_dataset(rc);
  data::Dataset d = base;
  d.train_x.col(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  try {
    train::train(rc, d);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite loss term '"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
  }
}

TEST(Train, DatasetSeedIsIndependentOfRunSeed) {
  RunConfig a = tiny_run(), b = tiny_run();
  b.seed = 99;
  EXPECT_EQ(train::load_dataset(a).train_x, train::load_dataset(b).train_x);
  b.data.seed = 3;
  EXPECT_NE(train::load_dataset(a).train_x, train::load_dataset(b).train_x);
}
