#include <benchmark/benchmark.h>

#include <random>

#include "bugprio/evaluate.hpp"

using namespace bugprio;

namespace {

void BM_ConfusionAndMetrics(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Priority> gold(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    gold[i] = priority_from_index(rng() % kNumPriorities);
    pred[i] = priority_from_index(rng() % kNumPriorities);
  }
  for (auto _ : state) {
    const auto cm = confusion(gold, pred);
    benchmark::DoNotOptimize(make_metrics_report(cm));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConfusionAndMetrics)->Arg(17032)->Arg(1000000);

}  // namespace
