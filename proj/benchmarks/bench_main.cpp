#include "pssl/gaussdist.hpp"
#include "pssl/models.hpp"
#include "pssl/objectives.hpp"
#include "pssl/ood.hpp"
#include "pssl/optim.hpp"
#include "pssl/rng.hpp"

#include <benchmark/benchmark.h>

using namespace pssl;

namespace {

void BM_BarlowTerms(benchmark::State& state) {
  Rng rng(1);
  const Index n = state.range(0), d = state.range(1);
  const Matrix za = rng.normal_matrix(n, d), zb = rng.normal_matrix(n, d);
  const objectives::LossCoefficients c;
  for (auto _ : state) benchmark::DoNotOptimize(objectives::barlow_terms(za, zb, c));
}
BENCHMARK(BM_BarlowTerms)->Args({128, 128})->Args({256, 512});

void BM_VicregRegularization(benchmark::State& state) {
  Rng rng(2);
  const Index n = state.range(0), d = state.range(1);
  const Matrix za = rng.normal_matrix(n, d), zb = rng.normal_matrix(n, d);
  const objectives::LossCoefficients c;
  for (auto _ : state) benchmark::DoNotOptimize(objectives::vicreg_regularization(za, zb, c));
}
BENCHMARK(BM_VicregRegularization)->Args({128, 128})->Args({256, 512});

void BM_MogKl(benchmark::State& state) {
  Rng rng(3);
  const Index n = 128, d = 128;
  const gauss::DiagGaussianBatch q{rng.normal_matrix(n, d), rng.uniform_matrix(n, d, 0.5, 1.5)};
  const gauss::Prior prior = gauss::MoGPrior{rng.normal_matrix(8, d), Matrix::Ones(8, d)};
  const gauss::NoiseStack noise = gauss::draw_noise(rng, int(state.range(0)), n, d);
  for (auto _ : state) benchmark::DoNotOptimize(gauss::kl_to_prior_mc(q, prior, noise));
}
BENCHMARK(BM_MogKl)->Arg(1)->Arg(12);

// One optimizer step of the default network: both views forward, backward, AdamW.
void BM_TrainStep(benchmark::State& state) {
  const auto variant = static_cast<Variant>(state.range(0));
  const int k = int(state.range(1));
  const models::ModelConfig config;
  const models::Model model(config, variant);
  ParamStore params;
  model.init(params, 1);
  optim::AdamState opt;
  Rng rng(4);
  const Index n = 128;
  const Matrix va = rng.normal_matrix(n, config.input_dim), vb = rng.normal_matrix(n, config.input_dim);
  const Index sd = model.stochastic_dim() ? model.stochastic_dim() : 1;
  const gauss::NoiseStack na = gauss::draw_noise(rng, k, n, sd), nb = gauss::draw_noise(rng, k, n, sd);
  objectives::LossCoefficients c;
  c.beta = 1e-3;
  for (auto _ : state) {
    params.zero_grad();
    ad::Tape tape;
    models::Bound b(tape, params);
    const ForwardOutput a = model.pipeline_forward(b, tape.constant(va), na, models::Mode::train);
    const ForwardOutput o = model.pipeline_forward(b, tape.constant(vb), nb, models::Mode::train);
    tape.backward(objectives::mc_objective(Method::vicreg, a, o, c, model.bind_prior(b)).total);
    optim::adamw_step(params, opt, {}, 1e-3);
    params.quantize();
  }
  state.SetLabel(to_string(variant) + " K=" + std::to_string(k));
}
BENCHMARK(BM_TrainStep)
    ->Args({int(Variant::deterministic), 1})
    ->Args({int(Variant::zprob), 1})
    ->Args({int(Variant::zprob), 12})
    ->Args({int(Variant::hprob), 1})
    ->Args({int(Variant::hprob), 12})
    ->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  Rng rng(5);
  const Index n = state.range(0);
  const Vector in = rng.normal_matrix(n, 1), out = rng.normal_matrix(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ood::auroc(in, out));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Auroc)->RangeMultiplier(8)->Range(64, 1 << 15)->Complexity(benchmark::oNLogN);

void BM_AurocPairwise(benchmark::State& state) {
  Rng rng(5);
  const Index n = state.range(0);
  const Vector in = rng.normal_matrix(n, 1), out = rng.normal_matrix(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ood::auroc_pairwise(in, out));
  state.SetComplexityN(n);
}
BENCHMARK(BM_AurocPairwise)->RangeMultiplier(8)->Range(64, 4096)->Complexity(benchmark::oNSquared);

}  // namespace

BENCHMARK_MAIN();
