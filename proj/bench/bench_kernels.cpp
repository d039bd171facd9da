// SPDX-License-Identifier: Apache-2.0
//
// Blocked OpenMP gemm against the serial reference on the shapes the
// recurrent network actually issues.
#include <benchmark/benchmark.h>

#include <random>

#include "thermotwin/kernels.hpp"

using thermotwin::BasicMatrix;

namespace {

template <class T>
BasicMatrix<T> random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  BasicMatrix<T> m(rows, cols);
  for (auto &v : m.flat()) v = static_cast<T>(dist(rng));
  return m;
}

template <class T, bool Reference>
void BM_Gemm(benchmark::State &state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  auto a = random_matrix<T>(m, k, 1);
  auto b = random_matrix<T>(k, n, 2);
  BasicMatrix<T> c(m, n);
  for (auto _ : state) {
    if constexpr (Reference)
      thermotwin::kernels::reference::gemm<T>(a.view(), b.view(), c.view(), false);
    else
      thermotwin::kernels::gemm<T>(a.view(), b.view(), c.view(), false);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOPS"] = benchmark::Counter(
      2.0 * static_cast<double>(m * n * k), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}

// {rows, inner, cols}: recurrent step for a batch of 128 at width 256, the
// input projection over 30 steps, the weight gradient and a single-sample
// rollout step.
void Shapes(benchmark::internal::Benchmark *b) {
  b->Args({128, 256, 512});
  b->Args({3840, 282, 768});
  b->Args({768, 3840, 282});
  b->Args({1, 256, 512});
  b->Args({30, 256, 768});
}

}  // namespace

BENCHMARK(BM_Gemm<double, false>)->Apply(Shapes);
BENCHMARK(BM_Gemm<double, true>)->Apply(Shapes);
BENCHMARK(BM_Gemm<float, false>)->Apply(Shapes);
BENCHMARK(BM_Gemm<float, true>)->Apply(Shapes);

BENCHMARK_MAIN();
