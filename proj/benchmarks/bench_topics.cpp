#include <benchmark/benchmark.h>

#include <random>

#include "bugprio/topics.hpp"

using namespace bugprio;

namespace {

std::vector<CountVector> random_docs(std::size_t n, std::size_t vocab, std::size_t length) {
  std::mt19937_64 rng(1);
  std::vector<CountVector> docs(n);
  for (auto& d : docs) {
    std::map<std::uint32_t, std::uint32_t> counts;
    for (std::size_t i = 0; i < length; ++i) ++counts[static_cast<std::uint32_t>(rng() % vocab)];
    for (auto [w, c] : counts) d.terms.push_back({w, c});
    d.total = length;
  }
  return docs;
}

// Cost of one Gibbs sweep over docs x 50 tokens.
void BM_GibbsSweep(benchmark::State& state) {
  const auto docs = random_docs(static_cast<std::size_t>(state.range(0)), 2000, 50);
  auto config = LdaConfig::with_topics(static_cast<std::size_t>(state.range(1)));
  config.iterations = 2;
  config.burn_in = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fit_lda(docs, 2000, config));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 50 * 2);
}
BENCHMARK(BM_GibbsSweep)->Args({1000, 10})->Args({1000, 50})->Args({10000, 10})->Unit(benchmark::kMillisecond);

void BM_InferTheta(benchmark::State& state) {
  const auto docs = random_docs(500, 2000, 50);
  auto config = LdaConfig::with_topics(10);
  config.iterations = 20;
  config.burn_in = 5;
  config.inference_iterations = static_cast<std::size_t>(state.range(0));
  const auto model = fit_lda(docs, 2000, config);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(infer_theta(model, docs[i++ % docs.size()]));
}
BENCHMARK(BM_InferTheta)->Arg(100)->Unit(benchmark::kMicrosecond);

}  // namespace
