// SPDX-License-Identifier: Apache-2.0
#include "kid/num/op_suite.hpp"

#include <random>

#include "kid/num/ops.hpp"

namespace kid::num {

namespace {

Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

// Random fixed weights turn any output into a scalar with a rich gradient.
Tensor contract(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

}  // namespace

std::vector<OpCheck> check_all_ops(std::uint64_t seed, double step, double tol) {
  std::mt19937_64 rng(seed);
  std::vector<OpCheck> out;
  auto run = [&](const std::string& name, const Tensor& x, const ScalarFn& f) {
    out.push_back({name, grad_check(f, x, step, tol)});
  };

  const Tensor a = uniform({3, 4}, -2, 2, rng);
  const Tensor b = uniform({4, 5}, -2, 2, rng);
  const Tensor bt = uniform({5, 4}, -2, 2, rng);
  const Tensor w35 = uniform({3, 5}, -1, 1, rng);
  const Tensor w34 = uniform({3, 4}, -1, 1, rng);
  const Tensor other = uniform({3, 4}, -2, 2, rng);

  run("matmul(lhs)", a, [&](const Tensor& x) { return contract(matmul(x, b), w35); });
  run("matmul(rhs)", b, [&](const Tensor& x) { return contract(matmul(a, x), w35); });
  run("matmul(rhs^T)", bt, [&](const Tensor& x) { return contract(matmul(a, x, true), w35); });
  run("add", a, [&](const Tensor& x) { return contract(add(x, other), w34); });
  run("add(scalar)", Tensor::from({1}, {0.7}),
      [&](const Tensor& s) { return contract(mul(add(other, s), other), w34); });
  run("mul", a, [&](const Tensor& x) { return contract(mul(x, other), w34); });
  run("mul(scalar)", Tensor::from({1}, {-1.3}),
      [&](const Tensor& s) { return contract(mul(s, other), w34); });
  run("softmax-rows", a, [&](const Tensor& x) { return contract(softmax_rows(x), w34); });
  run("log", uniform({3, 4}, 0.2, 2, rng), [&](const Tensor& x) { return contract(log(x), w34); });
  run("exp", a, [&](const Tensor& x) { return contract(exp(x), w34); });
  const Tensor gain = uniform({1, 4}, 0.5, 1.5, rng);
  const Tensor bias = uniform({1, 4}, -1, 1, rng);
  run("layer-norm", a, [&](const Tensor& x) { return contract(layer_norm(x, gain, bias), w34); });
  run("layer-norm(gain)", gain, [&](const Tensor& g) { return contract(layer_norm(a, g, bias), w34); });
  run("layer-norm(bias)", bias, [&](const Tensor& c) { return contract(layer_norm(a, gain, c), w34); });
  run("relu", a, [&](const Tensor& x) { return contract(relu(x), w34); });
  run("sigmoid", a, [&](const Tensor& x) { return contract(sigmoid(x), w34); });
  const std::vector<int> ids = {2, 0, 2, 1};
  const Tensor wemb = uniform({4, 4}, -1, 1, rng);
  run("embedding-lookup", a, [&](const Tensor& t) { return contract(embedding(t, ids), wemb); });
  const Tensor tail = uniform({2, 4}, -2, 2, rng);
  const Tensor wcat = uniform({5, 4}, -1, 1, rng);
  run("concat-rows", a, [&](const Tensor& x) { return contract(concat_rows({x, tail}), wcat); });
  const Tensor w24 = uniform({2, 4}, -1, 1, rng);
  run("slice-rows", a, [&](const Tensor& x) { return contract(slice_rows(x, 1, 3), w24); });
  std::vector<std::uint8_t> mask(12, 0);
  mask[1] = mask[6] = mask[11] = 1;
  run("masked-fill", a, [&](const Tensor& x) { return contract(masked_fill(x, mask, 0.25), w34); });
  run("sum", a, [&](const Tensor& x) { return sum(mul(sum(x), sum(x))); });
  run("mean", a, [&](const Tensor& x) { return sum(exp(mean(x))); });
  return out;
}

}  // namespace kid::num
