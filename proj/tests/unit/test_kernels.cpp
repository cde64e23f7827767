// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include <omp.h>

#include "kid/num/kernels.hpp"

using namespace kid::num::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2, 2);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("parallel gemm matches the serial reference for every transpose pair") {
  // Large enough to cross the parallel threshold.
  const std::size_t m = 70, n = 65, k = 40;
  for (Trans ta : {Trans::none, Trans::transposed}) {
    for (Trans tb : {Trans::none, Trans::transposed}) {
      const auto a = random_values(m * k, 1);
      const auto b = random_values(k * n, 2);
      auto c_ref = random_values(m * n, 3);
      auto c_par = c_ref;
      serial::gemm(ta, tb, m, n, k, a, b, c_ref, true);
      gemm(ta, tb, m, n, k, a, b, c_par, true);
      CHECK(bit_equal(c_ref, c_par));
      serial::gemm(ta, tb, m, n, k, a, b, c_ref, false);
      gemm(ta, tb, m, n, k, a, b, c_par, false);
      CHECK(bit_equal(c_ref, c_par));
    }
  }
}

TEST_CASE("kernels give identical bits regardless of thread count") {
  const std::size_t rows = 300, cols = 128;
  const auto x = random_values(rows * cols, 9);
  const int saved = omp_get_max_threads();
  std::vector<std::vector<double>> softmax_runs, norm_runs, gemm_runs;
  for (int threads : {1, 3, 8}) {
    omp_set_num_threads(threads);
    std::vector<double> y(rows * cols), z(rows * cols), inv(rows), g(rows * rows);
    softmax_rows(rows, cols, x, y);
    layer_norm_rows(rows, cols, 1e-5, x, z, inv);
    gemm(Trans::none, Trans::transposed, rows, rows, cols, x, x, g, false);
    softmax_runs.push_back(y);
    norm_runs.push_back(z);
    gemm_runs.push_back(g);
  }
  omp_set_num_threads(saved);
  for (std::size_t i = 1; i < softmax_runs.size(); ++i) {
    CHECK(bit_equal(softmax_runs[0], softmax_runs[i]));
    CHECK(bit_equal(norm_runs[0], norm_runs[i]));
    CHECK(bit_equal(gemm_runs[0], gemm_runs[i]));
  }
  std::vector<double> y(rows * cols), z(rows * cols), inv(rows);
  serial::softmax_rows(rows, cols, x, y);
  serial::layer_norm_rows(rows, cols, 1e-5, x, z, inv);
  CHECK(bit_equal(softmax_runs[0], y));
  CHECK(bit_equal(norm_runs[0], z));
}
