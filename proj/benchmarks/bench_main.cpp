#include <random>

#include <benchmark/benchmark.h>

#include "compgraph/graph.hpp"
#include "compgraph/influence.hpp"
#include "compgraph/metrics.hpp"
#include "compgraph/trainer.hpp"

using namespace compgraph;

namespace {

ModelWeights desk_weights(const ModelConfig& c) {
  std::mt19937_64 rng(1);
  ModelWeights w = init_weights(c, rng);
  std::normal_distribution<float> nd(0.0f, 0.02f);
  for (float& x : std::span<float>(w.W_U.data(), static_cast<size_t>(w.W_U.size()))) x = nd(rng);
  return w;
}

AnalysisInput desk_prompt(const ModelConfig& c) {
  return make_induction_prompt(2, c.n_ctx, c.vocab_size);
}

void BM_Forward(benchmark::State& state) {
  const ModelConfig c;
  const auto w = desk_weights(c);
  const auto in = desk_prompt(c);
  for (auto _ : state) benchmark::DoNotOptimize(forward(w, c, in.tokens));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMicrosecond);

void BM_InfluenceMatrix(benchmark::State& state) {
  ModelConfig c;
  c.n_layers = static_cast<int>(state.range(0));
  const auto w = desk_weights(c);
  const auto in = desk_prompt(c);
  for (auto _ : state) benchmark::DoNotOptimize(influence_matrix(w, c, in));
}
BENCHMARK(BM_InfluenceMatrix)->Arg(2)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_LossAndGrads(benchmark::State& state) {
  const ModelConfig c;
  const auto w = desk_weights(c);
  std::mt19937_64 rng(3);
  const auto batch = make_induction_batch(rng, static_cast<int>(state.range(0)), 64, c.vocab_size);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(w, c, batch));
}
BENCHMARK(BM_LossAndGrads)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// Complete forward DAG over the 31 components of a 6-layer, 4-head model.
Digraph dense_dag(int layers, int heads) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  InfluenceMatrix m(enumerate_components(c), false);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1.0f, 0.99f);
  for (size_t i = 0; i < m.size(); ++i) {
    for (size_t j = 0; j < m.size(); ++j) {
      if (m.allowed(i, j)) m.set(i, j, u(rng));
    }
  }
  return build_graph(m, 1.0).topology;
}

void BM_Betweenness(benchmark::State& state) {
  const Digraph g = dense_dag(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(betweenness(g));
}
BENCHMARK(BM_Betweenness)->Arg(2)->Arg(6)->Arg(24);

void BM_ComputeMetrics(benchmark::State& state) {
  ComponentGraph g;
  ModelConfig c;
  c.n_layers = 6;
  g.nodes = enumerate_components(c);
  g.topology = dense_dag(6, 4);
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(g, 0.0));
}
BENCHMARK(BM_ComputeMetrics);

}  // namespace

BENCHMARK_MAIN();
