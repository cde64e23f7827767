// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "kid/num/ops.hpp"

namespace kid::testutil {

inline num::Tensor uniform(num::Shape shape, double lo, double hi, std::uint64_t seed,
                           bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(num::element_count(shape));
  for (auto& x : v) x = dist(rng);
  return num::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Contracts an arbitrary tensor to a scalar with fixed random weights so
// every output element carries a distinct upstream gradient.
inline num::Tensor weighted_sum(const num::Tensor& y, std::uint64_t seed) {
  return num::sum(num::mul(y, uniform(y.shape(), -1.0, 1.0, seed)));
}

}  // namespace kid::testutil
