// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "televit/metrics.hpp"
#include "televit/tokenization.hpp"

using namespace televit;

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  Rng rng(1);
  const Tensor a = fixtures::random_tensor({m, k}, rng), b = fixtures::random_tensor({k, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * m * k * n));
}
BENCHMARK(BM_Matmul)->Args({117, 64, 192})->Args({117, 64, 256})->Args({117, 256, 64})->Args({198, 768, 768});

void BM_Forward(benchmark::State& state) {
  const auto variant = static_cast<Variant>(state.range(0));
  const ModelConfig c = ModelConfig::desk(variant);
  const TeleViTModel model(c, 1);
  Rng rng(2);
  const Sample s = fixtures::random_sample(c, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(forward(s, model));
  state.SetLabel(to_string(variant));
}
BENCHMARK(BM_Forward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto variant = static_cast<Variant>(state.range(0));
  const ModelConfig c = ModelConfig::desk(variant);
  const TeleViTModel model(c, 1);
  Rng rng(3);
  Sample s = fixtures::random_sample(c, rng);
  for (double& v : s.target.mutable_data()) v = rng.bernoulli(0.1) ? 1.0 : 0.0;
  auto params = model.parameters();
  for (auto _ : state) {
    for (auto& p : params) p.tensor.zero_grad();
    backward(sample_loss(forward(s, model), s.target));
  }
  state.SetLabel(to_string(variant));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_FullScaleForward(benchmark::State& state) {
  const ModelConfig c = ModelConfig::full(Variant::with_indices_and_global);
  const TeleViTModel model(c, 1);
  Rng rng(4);
  const Sample s = fixtures::random_sample(c, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(forward(s, model));
}
BENCHMARK(BM_FullScaleForward)->Unit(benchmark::kSecond)->Iterations(1);

void BM_TokenizeLocal(benchmark::State& state) {
  Rng rng(5);
  const Tensor x = fixtures::random_tensor({14, 80, 80}, rng);
  const TokenizationSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(tokenize_local(x, spec));
}
BENCHMARK(BM_TokenizeLocal);

void BM_Auprc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.bernoulli(0.1) ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auprc(pr_curve(scores, labels)));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Auprc)->Range(1 << 10, 1 << 20);

void BM_Coarsen(benchmark::State& state) {
  GeneratorConfig g;
  g.n_years = 1;
  const DataCube cube = generate_synthetic_cube(g, 7);
  for (auto _ : state) benchmark::DoNotOptimize(coarsen(cube, 4));
}
BENCHMARK(BM_Coarsen)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
