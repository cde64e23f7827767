// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels vs the OpenMP versions at model-sized shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kid/num/kernels.hpp"

namespace {

using namespace kid::num::kernels;

std::vector<double> random_values(std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state, Trans ta, Trans tb) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k);
  const auto b = random_values(k * n);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      gemm(ta, tb, m, n, k, a, b, c, false);
    } else {
      serial::gemm(ta, tb, m, n, k, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * n * k));
}

template <bool Parallel>
void BM_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_values(rows * cols);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      softmax_rows(rows, cols, x, y);
    } else {
      serial::softmax_rows(rows, cols, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_layer_norm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_values(rows * cols);
  std::vector<double> y(rows * cols), inv(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      layer_norm_rows(rows, cols, 1e-5, x, y, inv);
    } else {
      serial::layer_norm_rows(rows, cols, 1e-5, x, y, inv);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_gemm_serial(benchmark::State& s, Trans ta, Trans tb) { BM_gemm<false>(s, ta, tb); }
void BM_gemm_parallel(benchmark::State& s, Trans ta, Trans tb) { BM_gemm<true>(s, ta, tb); }
void BM_softmax_serial(benchmark::State& s) { BM_softmax<false>(s); }
void BM_softmax_parallel(benchmark::State& s) { BM_softmax<true>(s); }
void BM_layer_norm_serial(benchmark::State& s) { BM_layer_norm<false>(s); }
void BM_layer_norm_parallel(benchmark::State& s) { BM_layer_norm<true>(s); }

// Sequence x d_model times d_model x d_ff, and the two backward shapes.
#define GEMM_SHAPES ->Args({128, 256, 64})->Args({128, 64, 256})->Args({512, 512, 64})

BENCHMARK_CAPTURE(BM_gemm_serial, nn, Trans::none, Trans::none) GEMM_SHAPES;
BENCHMARK_CAPTURE(BM_gemm_parallel, nn, Trans::none, Trans::none) GEMM_SHAPES;
BENCHMARK_CAPTURE(BM_gemm_serial, nt, Trans::none, Trans::transposed) GEMM_SHAPES;
BENCHMARK_CAPTURE(BM_gemm_parallel, nt, Trans::none, Trans::transposed) GEMM_SHAPES;
BENCHMARK_CAPTURE(BM_gemm_serial, tn, Trans::transposed, Trans::none) GEMM_SHAPES;
BENCHMARK_CAPTURE(BM_gemm_parallel, tn, Trans::transposed, Trans::none) GEMM_SHAPES;
BENCHMARK(BM_softmax_serial)->Args({512, 512});
BENCHMARK(BM_softmax_parallel)->Args({512, 512});
BENCHMARK(BM_layer_norm_serial)->Args({512, 64});
BENCHMARK(BM_layer_norm_parallel)->Args({512, 64});

}  // namespace

BENCHMARK_MAIN();
