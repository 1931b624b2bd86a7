#include <random>

#include <benchmark/benchmark.h>

#include "dycp/dialogue_store.hpp"
#include "dycp/kadane.hpp"
#include "dycp/pruner.hpp"
#include "dycp/scoring.hpp"

namespace {

std::vector<double> noisy_scores(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

dycp::DialogueHistory history(std::size_t turns, std::size_t dim) {
  std::mt19937_64 rng(turns * 31 + dim);
  std::normal_distribution<float> g;
  std::vector<dycp::TurnRecord> records;
  dycp::EmbeddingMatrix m;
  dycp::Vector row(dim);
  for (std::size_t t = 1; t <= turns; ++t) {
    records.push_back({t, "user turn " + std::to_string(t), "agent turn " + std::to_string(t), {}});
    for (float& x : row) x = g(rng);
    m.append(row);
  }
  return dycp::DialogueHistory::from_parts("bench", std::move(records), std::move(m));
}

void BM_KadaneDial(benchmark::State& state) {
  const auto scores = noisy_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto spans = dycp::kadane_dial(scores, dycp::PruneConfig{});
    benchmark::DoNotOptimize(spans);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KadaneDial)->RangeMultiplier(2)->Range(1 << 10, 1 << 17)->Complexity();

void BM_ScoreHistory(benchmark::State& state) {
  const auto h = history(static_cast<std::size_t>(state.range(0)), 256);
  const dycp::Vector q(256, 0.05f);
  for (auto _ : state) {
    auto s = dycp::score_history(h.embeddings(), q, dycp::Similarity::kDot);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_ScoreHistory)->Arg(10000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_PruneEndToEnd(benchmark::State& state) {
  const auto h = history(static_cast<std::size_t>(state.range(0)), 256);
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g;
  dycp::Vector q(256);
  for (float& x : q) x = g(rng);
  for (auto _ : state) {
    const auto scores = dycp::score_history(h.embeddings(), q, dycp::Similarity::kDot);
    auto sel = dycp::prune_scored(h, scores, dycp::PruneConfig{});
    benchmark::DoNotOptimize(sel);
  }
}
BENCHMARK(BM_PruneEndToEnd)->Arg(10000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
