#include <benchmark/benchmark.h>

#include "pforge/attacks.hpp"
#include "pforge/convnet.hpp"
#include "pforge/eval.hpp"
#include "pforge/gaussian.hpp"
#include "pforge/linalg.hpp"
#include "pforge/masks.hpp"
#include "pforge/noise_model.hpp"
#include "pforge/rng.hpp"

using namespace pforge;

namespace {

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  RngStream r(seed, 0);
  Tensor t({c, h, w});
  for (float& v : t.values()) v = static_cast<float>(r.uniform(0.0, 1.0));
  return t;
}

// Well-conditioned SPD matrix: A A^T / d + I.
Matrix spd(std::size_t d, std::uint64_t seed) {
  RngStream r(seed, 1);
  Matrix a(d);
  for (double& v : a.values()) v = r.normal();
  Matrix s(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += a(i, k) * a(j, k);
      s(i, j) = s(j, i) = acc / static_cast<double>(d) + (i == j ? 1.0 : 0.0);
    }
  return s;
}

void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  const ConvNet net = ConvNet::initialized({c, hw, hw, 10, 64}, 1);
  const Tensor x = random_image(c, hw, hw, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_ConvForward)->Args({1, 28})->Args({3, 32})->Unit(benchmark::kMicrosecond);

void BM_ConvForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  const ConvNet net = ConvNet::initialized({c, hw, hw, 10, 64}, 1);
  const Tensor x = random_image(c, hw, hw, 2);
  for (auto _ : state) {
    const Activations act = net.forward(x);
    benchmark::DoNotOptimize(net.backward(act, cross_entropy(act.logits, 3).grad));
  }
}
BENCHMARK(BM_ConvForwardBackward)->Args({1, 28})->Args({3, 32})->Unit(benchmark::kMicrosecond);

void BM_Pgd(benchmark::State& state) {
  const ConvNet net = ConvNet::initialized({1, 28, 28, 10, 64}, 1);
  const Tensor x = random_image(1, 28, 28, 3);
  AttackConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pgd(net, x, 4, cfg));
}
BENCHMARK(BM_Pgd)->Unit(benchmark::kMillisecond);

void BM_Cholesky(benchmark::State& state) {
  const Matrix a = spd(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(cholesky(a));
}
BENCHMARK(BM_Cholesky)->Arg(64)->Arg(256)->Arg(784)->Unit(benchmark::kMillisecond);

void BM_SampleMvn(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const GaussianParams p(std::vector<double>(d, 0.0), spd(d, 5));
  RngStream rng(6, 0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_mvn(p, rng));
}
BENCHMARK(BM_SampleMvn)->Arg(784)->Unit(benchmark::kMicrosecond);

void BM_Perturb(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const GaussianParams base(std::vector<double>(d, 0.0), spd(d, 7));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(perturb(base, i++, PerturbationConfig{}));
}
BENCHMARK(BM_Perturb)->Arg(784)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  RngStream r(8, 0);
  ScoredSet set;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    set.scores.push_back(r.uniform(0.0, 1.0));
    set.labels.push_back(static_cast<int>(i % 2));
  }
  for (auto _ : state) benchmark::DoNotOptimize(auroc(set));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_ComposeMask(benchmark::State& state) {
  const ConvNet net = ConvNet::initialized({1, 28, 28, 10, 64}, 1);
  const Tensor x = random_image(1, 28, 28, 9);
  for (auto _ : state) {
    const Tensor cam = gradcam(net, x, net.predict(x));
    benchmark::DoNotOptimize(compose_mask(x, cam, MaskConfig{}));
  }
}
BENCHMARK(BM_ComposeMask)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
