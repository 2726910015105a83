#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "bugprio/classify.hpp"

using namespace bugprio;

namespace {

struct Data {
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
};

Data random_data(std::size_t n, std::size_t vocab) {
  std::mt19937_64 rng(2);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::uint32_t, std::uint32_t> counts;
    for (int t = 0; t < 40; ++t) ++counts[static_cast<std::uint32_t>(rng() % vocab)];
    CountVector v;
    for (auto [w, c] : counts) {
      v.terms.push_back({w, c});
      v.total += c;
    }
    d.docs.push_back(std::move(v));
    d.labels.push_back(priority_from_index(rng() % kNumPriorities));
  }
  return d;
}

void BM_MultinomialTrain(benchmark::State& state) {
  const auto d = random_data(static_cast<std::size_t>(state.range(0)), 5000);
  for (auto _ : state) benchmark::DoNotOptimize(MultinomialNb::train(d.docs, d.labels, 5000));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MultinomialTrain)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_MultinomialPredict(benchmark::State& state) {
  const auto d = random_data(2000, 5000);
  const auto m = MultinomialNb::train(d.docs, d.labels, 5000);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(d.docs[i++ % d.docs.size()]));
}
BENCHMARK(BM_MultinomialPredict);

void BM_GaussianTrain(benchmark::State& state) {
  const auto d = random_data(static_cast<std::size_t>(state.range(0)), 5000);
  for (auto _ : state) benchmark::DoNotOptimize(GaussianNb::train(d.docs, d.labels, 5000));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianTrain)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_GaussianPredict(benchmark::State& state) {
  const auto d = random_data(2000, 5000);
  const auto m = GaussianNb::train(d.docs, d.labels, 5000);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(d.docs[i++ % d.docs.size()]));
}
BENCHMARK(BM_GaussianPredict);

}  // namespace
