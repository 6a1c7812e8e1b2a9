#include <benchmark/benchmark.h>

#include <random>

#include "scope/univariate.hpp"

namespace {

// Three true levels plus noise, equal weights.
scope::WeightedMeans instance(std::size_t K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  scope::WeightedMeans m;
  for (std::size_t k = 0; k < K; ++k) {
    m.w.push_back(1.0 / static_cast<double>(K));
    m.ybar.push_back(static_cast<double>(k % 3) - 1.0 + nd(rng));
  }
  return m;
}

void BM_Exact(benchmark::State& state) {
  const auto m = instance(static_cast<std::size_t>(state.range(0)), 7);
  const scope::McpParams p(8.0, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(scope::solve_exact(m, p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Exact)->Arg(50)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_DiscreteSerial(benchmark::State& state) {
  const auto m = instance(static_cast<std::size_t>(state.range(0)), 7);
  const auto grid = scope::default_grid(m, static_cast<std::size_t>(state.range(1)));
  const scope::McpParams p(8.0, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(scope::solve_discrete(m, p, grid));
}

void BM_DiscreteParallel(benchmark::State& state) {
  const auto m = instance(static_cast<std::size_t>(state.range(0)), 7);
  const auto grid = scope::default_grid(m, static_cast<std::size_t>(state.range(1)));
  const scope::McpParams p(8.0, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(scope::solve_discrete_parallel(m, p, grid));
}

BENCHMARK(BM_DiscreteSerial)->Args({50, 256})->Args({500, 256})->Args({500, 1024})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DiscreteParallel)->Args({50, 256})->Args({500, 256})->Args({500, 1024})->Unit(benchmark::kMillisecond)
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
