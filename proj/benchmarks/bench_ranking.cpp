#include <benchmark/benchmark.h>

#include <vector>

#include "diffrank/losses.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"

namespace {

using namespace diffrank;

struct Instance {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<double> grad;
};

Instance make_instance(std::size_t n, double positives_fraction = 0.01) {
  Rng rng(n);
  Instance inst;
  inst.scores.resize(n);
  for (auto& s : inst.scores) s = rng.next_uniform(0.0, 1.0);
  inst.labels.assign(n, 0);
  const auto positives = std::max<std::size_t>(
      1, static_cast<std::size_t>(positives_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < positives; ++k)
    inst.labels[rng.next_below(n)] = 1;
  inst.labels[0] = 1;
  inst.grad.resize(n);
  for (auto& g : inst.grad) g = rng.next_uniform(-1.0, 1.0);
  return inst;
}

void BM_Rank(benchmark::State& state) {
  const auto inst = make_instance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto ranks = rank(inst.scores);
    benchmark::DoNotOptimize(ranks.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Rank)->RangeMultiplier(8)->Range(1 << 10, 1 << 22)->Complexity();

void BM_RankBackward(benchmark::State& state) {
  const auto inst = make_instance(static_cast<std::size_t>(state.range(0)));
  const auto forward = rank(inst.scores);
  for (auto _ : state) {
    auto grad =
        rank_backward(inst.scores, forward, inst.grad, LambdaConfig{1.0});
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RankBackward)
    ->RangeMultiplier(8)
    ->Range(1 << 10, 1 << 22)
    ->Complexity();

void BM_ApLoss(benchmark::State& state) {
  const auto inst = make_instance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto result =
        ap_loss(inst.scores, inst.labels, MarginConfig{0.05}, LambdaConfig{1.0});
    benchmark::DoNotOptimize(result.grad.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ApLoss)->RangeMultiplier(8)->Range(1 << 10, 1 << 22)->Complexity();

void BM_RecallLoss(benchmark::State& state) {
  const auto inst = make_instance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto result = recall_loss(inst.scores, inst.labels, WeightScheme::Log,
                              MarginConfig{0.05}, LambdaConfig{1.0});
    benchmark::DoNotOptimize(result.grad.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RecallLoss)
    ->RangeMultiplier(8)
    ->Range(1 << 10, 1 << 22)
    ->Complexity();

}  // namespace

BENCHMARK_MAIN();
