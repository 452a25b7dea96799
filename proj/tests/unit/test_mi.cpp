#include "pssl/mi.hpp"

#include "test_support.hpp"

#include <cmath>

using namespace pssl;
using namespace pssl::mi;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

models::ModelConfig tiny_model() {
  models::ModelConfig c;
  c.input_dim = 6;
  c.encoder_hidden = {8};
  c.repr_dim = 5;
  c.proj_width = 8;
  c.embed_dim = 4;
  return c;
}

MIEstimate gaussian_estimate(double rho, Index dim, std::uint64_t seed) {
  MineConfig c;
  c.seed = seed;
  return mine_train(gaussian_pairs(rho, dim), dim, dim, c, "gauss");
}

}  // namespace

TEST(DvBound, Examples) {
  EXPECT_EQ(dv_bound(Vector::Zero(5), Vector::Zero(7)), 0.0);
  EXPECT_DOUBLE_EQ(dv_bound(vec({1, 1}), vec({0, 0})), 1.0);
  EXPECT_THROW(dv_bound(Vector(0), vec({1})), InvalidArgument);
  EXPECT_THROW(dv_bound(vec({1}), Vector(0)), InvalidArgument);
}

TEST(DvBound, BruteForceAndShiftInvariance) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Vector j = rng.normal_matrix(30, 1).col(0) * 2.0, m = rng.normal_matrix(25, 1).col(0) * 2.0;
    double sj = 0, se = 0;
    for (Index i = 0; i < j.size(); ++i) sj += j(i);
    for (Index i = 0; i < m.size(); ++i) se += std::exp(m(i));
    EXPECT_NEAR(dv_bound(j, m), sj / 30 - std::log(se / 25), 1e-10);
    const double c = rng.uniform(-50, 50);
    EXPECT_NEAR(dv_bound((j.array() + c).matrix(), (m.array() + c).matrix()), dv_bound(j, m), 1e-8);
  }
  // Large values stay finite thanks to the max shift.
  EXPECT_NEAR(dv_bound(vec({1000}), vec({1000, 1000})), 0.0, 1e-12);
}

TEST(DvBound, NetworkFormMatchesVectorForm) {
  Rng rng(2);
  StatisticNet net(3, 2, 16, 4);
  const Matrix x = rng.normal_matrix(10, 3), y = rng.normal_matrix(10, 2);
  const Matrix ym = shuffle_rows(y, rng);
  EXPECT_NEAR(dv_bound(net, x, y, ym), dv_bound(net.evaluate(x, y), net.evaluate(x, ym)), 1e-14);
  EXPECT_EQ(net.params().size(), 6u);
}

TEST(ShuffleRows, IsAPermutation) {
  Rng rng(3);
  const Matrix y = rng.normal_matrix(50, 2);
  const Matrix s = shuffle_rows(y, rng);
  EXPECT_NE(s, y);
  EXPECT_NEAR(s.sum(), y.sum(), 1e-12);
  for (Index i = 0; i < 50; ++i) {
    bool found = false;
    for (Index k = 0; k < 50 && !found; ++k) found = s.row(i) == y.row(k);
    EXPECT_TRUE(found);
  }
}

TEST(Mine, GaussianMiFormula) {
  EXPECT_NEAR(gaussian_mi(0.5, 1), 0.1438, 1e-4);
  EXPECT_NEAR(gaussian_mi(0.8, 1), 0.5108, 1e-4);
  EXPECT_EQ(gaussian_mi(0.0, 4), 0.0);
}

TEST(Mine, IndependentPairsGiveZero) {
  const MIEstimate e = gaussian_estimate(0.0, 4, 1);
  EXPECT_NEAR(e.value, 0.0, 0.05);
  EXPECT_EQ(e.curve.size(), 2000u);
  EXPECT_EQ(e.window, 200u);
  for (double v : e.curve) EXPECT_TRUE(std::isfinite(v));
}

TEST(Mine, CorrelatedGaussiansWithinTwentyPercent) {
  for (double rho : {0.5, 0.8}) {
    const MIEstimate e = gaussian_estimate(rho, 1, 2);
    const double truth = gaussian_mi(rho, 1);
    EXPECT_NEAR(e.value, truth, 0.2 * truth) << "rho " << rho;
  }
}

TEST(Mine, EstimateIncreasesWithDependence) {
  for (std::uint64_t seed : {11, 12, 13}) {
    const double e0 = gaussian_estimate(0.0, 1, seed).value;
    const double e5 = gaussian_estimate(0.5, 1, seed).value;
    const double e8 = gaussian_estimate(0.8, 1, seed).value;
    EXPECT_LT(e0, e5) << seed;
    EXPECT_LT(e5, e8) << seed;
    EXPECT_LE(e8, 1.2 * gaussian_mi(0.8, 1)) << seed;
  }
}

TEST(Mine, ConfigValidation) {
  MineConfig c;
  c.ema_decay = 1.0;
  EXPECT_ANY_THROW(c.validate());
  c = {};
  c.tail_fraction = 0;
  EXPECT_ANY_THROW(c.validate());
}

TEST(Mine, NonFiniteBoundAborts) {
  const PairSource bad = [](Rng& rng, Index n) {
    Matrix x = rng.normal_matrix(n, 1);
    x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return std::pair{x, rng.normal_matrix(n, 1)};
  };
  MineConfig c;
  c.steps = 5;
  EXPECT_THROW(mine_train(bad, 1, 1, c), NumericError);
}

TEST(PairNames, RoundTrip) {
  for (Pair p : all_pairs()) EXPECT_EQ(parse_pair(to_string(p)), p);
  EXPECT_EQ(to_string(Pair::h_hp), "h:h'");
  EXPECT_THROW(parse_pair("v:z"), InvalidArgument);
}

TEST(ProbePairs, ShapesFollowSpaces) {
  Rng rng(4);
  const Matrix x = rng.normal_matrix(64, 6);
  for (Variant v : {Variant::deterministic, Variant::zprob, Variant::hprob}) {
    models::Model m(tiny_model(), v);
    ParamStore s;
    m.init(s, 2);
    for (Pair p : all_pairs()) {
      const auto [xd, yd] = pair_dims(m, p);
      const auto [a, b] = probe_pairs(m, s, x, data::AugmentSpec{}, p)(rng, 16);
      EXPECT_EQ(a.rows(), 16);
      EXPECT_EQ(b.rows(), 16);
      EXPECT_EQ(a.cols(), xd);
      EXPECT_EQ(b.cols(), yd);
    }
    EXPECT_EQ(pair_dims(m, Pair::v_h), (std::pair<Index, Index>{6, 5}));
    EXPECT_EQ(pair_dims(m, Pair::z_zp), (std::pair<Index, Index>{4, 4}));
  }
}

TEST(ProbePairs, DeterministicZPairsArePointEmbeddingsOfTwoViews) {
  Rng rng(5);
  const Matrix x = rng.normal_matrix(32, 6);
  models::Model m(tiny_model(), Variant::deterministic);
  ParamStore s;
  m.init(s, 2);
  data::AugmentSpec none;
  none.noise_std = none.mask_prob = none.gain = 0;
  const auto [a, b] = probe_pairs(m, s, x, none, Pair::z_zp)(rng, 8);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  const auto [c, d] = probe_pairs(m, s, x, data::AugmentSpec{}, Pair::z_zp)(rng, 8);
  EXPECT_GT((c - d).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ProbePairs, ShuffledMarginalMatchesJointMarginal) {
  Rng rng(6);
  const Matrix x = rng.normal_matrix(256, 6);
  models::Model m(tiny_model(), Variant::zprob);
  ParamStore s;
  m.init(s, 2);
  const PairSource src = probe_pairs(m, s, x, data::AugmentSpec{}, Pair::h_z);
  // Two-sample mean test per column: the shuffled leg of one set of batches
  // against y from an independent set of batches.
  Matrix joint(0, 4), marg(0, 4);
  for (int k = 0; k < 16; ++k) {
    const auto [a, y] = src(rng, 128);
    Matrix& dst = k % 2 ? marg : joint;
    const Matrix leg = k % 2 ? shuffle_rows(y, rng) : y;
    dst.conservativeResize(dst.rows() + 128, 4);
    dst.bottomRows(128) = leg;
  }
  for (Index j = 0; j < 4; ++j) {
    const double mj = joint.col(j).mean(), mm = marg.col(j).mean();
    const double sd = std::sqrt((joint.col(j).array() - mj).square().sum() / double(joint.rows() - 1));
    const double se = sd * std::sqrt(2.0 / double(joint.rows()));
    EXPECT_LT(std::abs(mj - mm), 4 * se + 1e-15) << j;
  }
}
