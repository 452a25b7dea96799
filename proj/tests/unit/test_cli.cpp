#include "pssl/commands.hpp"
#include "pssl/csv.hpp"

#include "test_support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace pssl;
using namespace pssl::cli;
using nlohmann::json;
using pssl::testing::temp_dir;

namespace {

RunConfig tiny_run(Variant v = Variant::deterministic, std::uint64_t seed = 1) {
  RunConfig rc;
  rc.method = Method::vicreg;
  rc.variant = v;
  rc.loss.beta = is_stochastic(v) ? 1e-3 : 0.0;
  rc.data.synthetic.num_classes = 4;
  rc.data.synthetic.latent_dim = 6;
  rc.data.synthetic.observed_dim = 12;
  rc.data.synthetic.train_size = 400;
  rc.data.synthetic.test_size = 200;
  rc.data.synthetic.ood_size = 100;
  rc.model.input_dim = 12;
  rc.model.encoder_hidden = {24};
  rc.model.repr_dim = 12;
  rc.model.proj_width = 16;
  rc.model.embed_dim = 12;
  rc.schedule.batch_size = 50;
  rc.schedule.epochs = 3;
  rc.schedule.warmup_epochs = 1;
  rc.seed = seed;
  return rc;
}

fs::path write_config(const fs::path& dir, const json& doc, const std::string& name = "config.json") {
  fs::create_directories(dir);
  std::ofstream(dir / name) << doc.dump(2);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t column(const csv::Table& t, const std::string& name) {
  const auto& h = t.header();
  const auto it = std::find(h.begin(), h.end(), name);
  EXPECT_NE(it, h.end()) << name;
  return static_cast<std::size_t>(it - h.begin());
}

eval::ProbeConfig quick_probe() {
  eval::ProbeConfig pc;
  pc.epochs = 10;
  pc.finetune_epochs = 4;
  return pc;
}

}  // namespace

TEST(Pretrain, WritesRunDirectoryContract) {
  const fs::path root = temp_dir("cli_pretrain");
  const fs::path cfg = write_config(root, to_json(tiny_run()));
  const PretrainResult r = cmd_pretrain(cfg, root / "run");
  for (const char* f : {"manifest.json", "config.json", "metrics.csv", "checkpoint.json", "checkpoint.bin"})
    EXPECT_TRUE(fs::exists(root / "run" / f)) << f;
  EXPECT_FALSE(fs::exists(root / "run" / ".lock"));
  const json manifest = json::parse(slurp(root / "run" / "manifest.json"));
  EXPECT_EQ(manifest.at("status"), "complete");
  EXPECT_EQ(manifest.at("seed"), 1);
  EXPECT_EQ(manifest.at("config"), to_json(tiny_run()));
  EXPECT_FALSE(manifest.at("files").empty());
  for (const auto& f : manifest.at("files")) {
    const fs::path p = root / "run" / f.at("path").get<std::string>();
    EXPECT_EQ(f.at("crc32"), checksum_file(p)) << p;
    EXPECT_EQ(f.at("bytes"), fs::file_size(p)) << p;
  }
  const csv::Table metrics = csv::read(root / "run" / "metrics.csv");
  EXPECT_EQ(metrics.rows().size(), r.train.history.size());
  EXPECT_EQ(metrics.rows().size(), 24u);
}

TEST(Pretrain, NegativeBetaIsRejectedByName) {
  const fs::path root = temp_dir("cli_negbeta");
  json doc = to_json(tiny_run());
  doc["loss"]["beta"] = -1.0;
  const fs::path cfg = write_config(root, doc);
  try {
    cmd_pretrain(cfg, root / "run");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
    EXPECT_EQ(e.keys(), std::vector<std::string>{"loss.beta"});
  }
  EXPECT_FALSE(fs::exists(root / "run" / "metrics.csv"));
}

TEST(Pretrain, NonEmptyDirectoryNeedsForce) {
  const fs::path root = temp_dir("cli_force");
  fs::create_directories(root / "run");
  std::ofstream(root / "run" / "notes.txt") << "keep me";
  const fs::path cfg = write_config(root, to_json(tiny_run()));
  EXPECT_THROW(cmd_pretrain(cfg, root / "run"), IoError);
  EXPECT_NO_THROW(cmd_pretrain(cfg, root / "run", true));
  EXPECT_EQ(slurp(root / "run" / "notes.txt"), "keep me");
}

TEST(Pretrain, IdenticalConfigsGiveIdenticalOutputs) {
  const fs::path root = temp_dir("cli_determinism");
  const fs::path cfg = write_config(root, to_json(tiny_run(Variant::zprob)));
  cmd_pretrain(cfg, root / "a");
  cmd_pretrain(cfg, root / "b");
  for (const char* f : {"metrics.csv", "config.json", "checkpoint.json", "checkpoint.bin"})
    EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f;
  // Rerunning in place with --force reproduces the same bytes; only the
  // manifest's update timestamp may move.
  const std::string before = slurp(root / "a" / "metrics.csv");
  json m1 = json::parse(slurp(root / "a" / "manifest.json"));
  cmd_pretrain(cfg, root / "a", true);
  json m2 = json::parse(slurp(root / "a" / "manifest.json"));
  EXPECT_EQ(slurp(root / "a" / "metrics.csv"), before);
  for (json* m : {&m1, &m2}) {
    m->erase("created_at");
    m->erase("updated_at");
  }
  EXPECT_EQ(m1, m2);
}

TEST(Pretrain, LockPreventsConcurrentWriters) {
  const fs::path root = temp_dir("cli_lock");
  RunLock lock(root);
  EXPECT_THROW(RunLock second(root), IoError);
  EXPECT_THROW(pretrain_config(tiny_run(), root), IoError);
}

TEST(Pretrain, NumericAbortMarksManifest) {
  const fs::path root = temp_dir("cli_nan");
  RunConfig rc = tiny_run();
  rc.optimizer.lr_peak = 1e300;
  rc.optimizer.lr_final = 1e300;
  rc.data.synthetic.observation_noise = 1e150;
  try {
    pretrain_config(rc, root / "run");
  } catch (const NumericError&) {
    const json m = json::parse(slurp(root / "run" / "manifest.json"));
    EXPECT_EQ(m.at("status").get<std::string>().rfind("failed", 0), 0u);
    return;
  }
  GTEST_SKIP() << "configuration stayed finite";
}

class RunFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = temp_dir("cli_runs");
    pretrain_config(tiny_run(Variant::deterministic), root_ / "det");
    pretrain_config(tiny_run(Variant::zprob), root_ / "zprob");
  }
  static inline fs::path root_;
};

TEST_F(RunFixture, ProbeFreezeWritesResults) {
  ProbeOptions o;
  o.probe = quick_probe();
  const ProbeOutcome out = cmd_probe(root_ / "det", o);
  EXPECT_GE(out.result.accuracy, 0.0);
  EXPECT_LE(out.result.accuracy, 1.0);
  EXPECT_EQ(out.result_dir, root_ / "det" / "results" / "probe-freeze-1");
  const csv::Table t = csv::read(out.result_dir / "probe_result.csv");
  ASSERT_EQ(t.rows().size(), 1u);
  EXPECT_EQ(std::stod(t.rows()[0][column(t, "accuracy")]), out.result.accuracy);
  EXPECT_EQ(t.rows()[0][column(t, "train_size")], "400");
  EXPECT_TRUE(fs::exists(out.result_dir / "per_class.csv"));
  EXPECT_TRUE(fs::exists(out.result_dir / "curve.csv"));
  EXPECT_FALSE(fs::exists(out.result_dir / "sigma_by_correctness.csv"));
  const json m = json::parse(slurp(root_ / "det" / "manifest.json"));
  bool listed = false;
  for (const auto& f : m.at("files")) listed |= f.at("path") == "results/probe-freeze-1/probe_result.csv";
  EXPECT_TRUE(listed);
}

TEST_F(RunFixture, LabelFractionIsStratified) {
  ProbeOptions o;
  o.probe = quick_probe();
  o.label_fraction = 0.1;
  const ProbeOutcome out = cmd_probe(root_ / "det", o);
  const data::Dataset d = train::load_dataset(tiny_run());
  std::vector<int> counts(4, 0);
  for (int y : d.train_y) ++counts[y];
  std::size_t expect = 0;
  for (int c : counts) expect += std::max<std::size_t>(1, std::size_t(std::lround(0.1 * c)));
  EXPECT_EQ(out.train_size, expect);
  EXPECT_TRUE(fs::exists(root_ / "det" / "results" / "probe-freeze-0.1" / "probe_result.csv"));
  o.label_fraction = 0.0;
  EXPECT_ANY_THROW(cmd_probe(root_ / "det", o));
}

TEST_F(RunFixture, StochasticProbeWritesSigmaTables) {
  ProbeOptions o;
  o.probe = quick_probe();
  const ProbeOutcome out = cmd_probe(root_ / "zprob", o);
  const csv::Table t = csv::read(out.result_dir / "sigma_by_correctness.csv");
  EXPECT_EQ(t.rows().size(), 200u);
  const csv::Table s = csv::read(out.result_dir / "sigma_summary.csv");
  EXPECT_EQ(s.rows().size(), 2u);
}

TEST_F(RunFixture, OodMarksSigmaDetectorsNotApplicable) {
  OodOptions o;
  o.probe = quick_probe();
  o.out_spec = {"builtin", "shift:8"};
  const std::vector<AurocRow> rows = cmd_ood(root_ / "det", o);
  EXPECT_EQ(rows.size(), 6u * 2u);
  const csv::Table t = csv::read(root_ / "det" / "results" / "ood" / "auroc.csv");
  EXPECT_EQ(t.rows().size(), 12u);
  for (const auto& r : t.rows()) {
    const std::string det = r[column(t, "detector")];
    if (det == "sigma_mean" || det == "sigma_std") EXPECT_EQ(r[column(t, "auroc")], "N/A");
    else EXPECT_NE(r[column(t, "auroc")], "N/A");
  }
  const csv::Table scores = csv::read(root_ / "det" / "results" / "ood" / "scores_builtin.csv");
  // Four applicable detectors, 200 in + 100 out samples each.
  EXPECT_EQ(scores.rows().size(), 4u * 300u);
}

TEST_F(RunFixture, OodStochasticRunScoresEveryDetector) {
  OodOptions o;
  o.probe = quick_probe();
  o.detectors = {ood::Detector::sigma_mean, ood::Detector::mahalanobis};
  const std::vector<AurocRow> rows = cmd_ood(root_ / "zprob", o);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.auroc.has_value()) << r.detector;
    EXPECT_GE(*r.auroc, 0.0);
    EXPECT_LE(*r.auroc, 1.0);
  }
  o.out_spec = {"nonsense"};
  EXPECT_THROW(cmd_ood(root_ / "zprob", o), InvalidArgument);
}

TEST_F(RunFixture, MiWritesPerPairOutputs) {
  MiOptions o;
  o.pairs = {mi::Pair::v_h, mi::Pair::z_zp};
  o.mine.steps = 40;
  o.mine.batch_size = 64;
  o.mine.width = 16;
  const auto est = cmd_mi(root_ / "zprob", o);
  ASSERT_EQ(est.size(), 2u);
  const csv::Table curve = csv::read(root_ / "zprob" / "results" / "mi" / "curve.csv");
  EXPECT_EQ(curve.rows().size(), 80u);
  const csv::Table summary = csv::read(root_ / "zprob" / "results" / "mi" / "summary.csv");
  ASSERT_EQ(summary.rows().size(), 2u);
  EXPECT_EQ(summary.rows()[0][column(summary, "pair")], "v:h");
  EXPECT_EQ(summary.rows()[1][column(summary, "pair")], "z:z'");
  EXPECT_EQ(summary.rows()[0][column(summary, "train_step")], "23");
}

TEST_F(RunFixture, ReportJoinsRuns) {
  MiOptions o;
  o.pairs = {mi::Pair::h_z};
  o.mine.steps = 20;
  o.mine.batch_size = 32;
  o.mine.width = 8;
  cmd_mi(root_ / "det", o);
  const fs::path out = root_ / "report";
  cmd_report({root_ / "det", root_ / "zprob"}, out);
  const csv::Table runs = csv::read(out / "runs.csv");
  EXPECT_EQ(runs.rows().size(), 2u);
  const csv::Table density = csv::read(out / "sigma_density.csv");
  // Only the stochastic run contributes: 200 in + 100 out samples.
  EXPECT_EQ(density.rows().size(), 300u);
  for (const auto& r : density.rows()) EXPECT_GT(std::stod(r[column(density, "mean_sigma")]), 0.0);
  const csv::Table join = csv::read(out / "mi_vs_loss.csv");
  EXPECT_GE(join.rows().size(), 1u);
  const csv::Table metrics = csv::read(root_ / "det" / "metrics.csv");
  bool matched = false;
  for (const auto& r : join.rows())
    if (r[column(join, "step")] == "23" && r[column(join, "pair")] == "h:z")
      matched = r[column(join, "loss_total")] == metrics.rows()[23][column(metrics, "loss_total")];
  EXPECT_TRUE(matched);
  EXPECT_THROW(cmd_report({}, out), InvalidArgument);
}

TEST(Grid, ParsesAxesAndSeeds) {
  const GridAxis b = parse_grid_axis("beta=1e-4,1e-3,1e-2");
  EXPECT_EQ(b.key, "loss.beta");
  EXPECT_EQ(b.values.size(), 3u);
  EXPECT_EQ(parse_grid_axis("K=1,12").key, "loss.mc_samples");
  EXPECT_EQ(parse_grid_axis("prior=standard_normal,mog").key, "prior.kind");
  EXPECT_EQ(parse_grid_axis("model.embed_dim=8").key, "model.embed_dim");
  EXPECT_ANY_THROW(parse_grid_axis("beta"));
  EXPECT_ANY_THROW(parse_grid_axis("beta="));
  EXPECT_EQ(parse_seeds("3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(parse_seeds("4,7"), (std::vector<std::uint64_t>{4, 7}));
  EXPECT_ANY_THROW(parse_seeds("0"));
}

TEST(Summarize, MatchesHandComputation) {
  const SummaryStat s = summarize({1.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 7.0 / 3);
  EXPECT_NEAR(s.std, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2),
              1e-15);
  EXPECT_EQ(summarize({5.0}).std, 0.0);
}

TEST(Ablate, GridTimesSeedsRunsAndSummarizes) {
  const fs::path root = temp_dir("cli_ablate");
  RunConfig rc = tiny_run(Variant::zprob);
  rc.schedule.epochs = 2;
  const fs::path cfg = write_config(root, to_json(rc), "base.json");
  AblateOptions o;
  o.grid = {parse_grid_axis("beta=1e-4,1e-3,1e-2")};
  o.seeds = parse_seeds("3");
  o.probe_config = quick_probe();
  const auto rows = cmd_ablate(cfg, root / "grid", o);
  ASSERT_EQ(rows.size(), 9u);
  for (const auto& r : rows) EXPECT_TRUE(fs::exists(r.run_dir / "metrics.csv")) << r.run_dir;
  EXPECT_TRUE(fs::exists(root / "grid" / "beta=1e-3_seed=2" / "checkpoint.bin"));

  const csv::Table ab = csv::read(root / "grid" / "ablation.csv");
  EXPECT_EQ(ab.rows().size(), 9u);
  const csv::Table sum = csv::read(root / "grid" / "summary.csv");
  ASSERT_EQ(sum.rows().size(), 3u);
  // Hand check of the per-beta mean and sample std of the probe accuracy.
  for (const auto& srow : sum.rows()) {
    const std::string beta = srow[column(sum, "beta")];
    std::vector<double> acc;
    for (const auto& r : ab.rows())
      if (r[column(ab, "beta")] == beta) acc.push_back(std::stod(r[column(ab, "probe_accuracy")]));
    ASSERT_EQ(acc.size(), 3u);
    const double mean = (acc[0] + acc[1] + acc[2]) / 3;
    double ss = 0;
    for (double a : acc) ss += (a - mean) * (a - mean);
    EXPECT_NEAR(std::stod(srow[column(sum, "accuracy_mean")]), mean, 1e-12);
    EXPECT_NEAR(std::stod(srow[column(sum, "accuracy_std")]), std::sqrt(ss / 2), 1e-12);
    EXPECT_EQ(srow[column(sum, "runs")], "3");
  }
}

TEST(Ablate, InvalidGridPointFailsBeforeRunning) {
  const fs::path root = temp_dir("cli_ablate_bad");
  const fs::path cfg = write_config(root, to_json(tiny_run()), "base.json");
  AblateOptions o;
  o.grid = {parse_grid_axis("beta=1e-3,-1")};
  o.seeds = {1};
  EXPECT_THROW(cmd_ablate(cfg, root / "grid", o), ConfigError);
  EXPECT_FALSE(fs::exists(root / "grid" / "beta=1e-3_seed=1" / "metrics.csv"));
}

TEST(ExitCodes, MapExceptionTypes) {
  const auto code = [](auto thrower) {
    std::ostringstream err;
    try {
      thrower();
    } catch (...) {
      return exit_code_for_current_exception(err);
    }
    return -1;
  };
  EXPECT_EQ(code([] { throw ConfigError({"loss.beta"}); }), kConfig);
  EXPECT_EQ(code([] { throw InvalidArgument("x"); }), kConfig);
  EXPECT_EQ(code([] { throw NumericError("x"); }), kNumeric);
  EXPECT_EQ(code([] { throw IoError("x"); }), kIo);
  EXPECT_EQ(code([] { throw json::parse_error::create(101, 0, "bad", nullptr); }), kConfig);
}

TEST(Probe, FinetuneMatchesOrBeatsFreezeAcrossSeeds) {
  const fs::path root = temp_dir("cli_finetune");
  double freeze = 0, tuned = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const fs::path dir = root / ("seed" + std::to_string(seed));
    pretrain_config(tiny_run(Variant::deterministic, seed), dir);
    ProbeOptions o;
    o.probe = quick_probe();
    const double f = cmd_probe(dir, o).result.accuracy;
    o.finetune = true;
    const ProbeOutcome t = cmd_probe(dir, o);
    EXPECT_TRUE(fs::exists(dir / "results" / "probe-finetune-1" / "probe_result.csv"));
    freeze += f / 3;
    tuned += t.result.accuracy / 3;
  }
  EXPECT_GE(tuned, freeze);
}
