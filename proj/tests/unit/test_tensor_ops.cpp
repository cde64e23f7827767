// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kid/num/ops.hpp"
#include "support/test_util.hpp"

using namespace kid::num;
using kid::testutil::uniform;

TEST_CASE("softmax of equal logits is uniform") {
  auto y = softmax_rows(Tensor::from({1, 2}, {0.0, 0.0}));
  CHECK(y.data()[0] == 0.5);
  CHECK(y.data()[1] == 0.5);
}

TEST_CASE("matmul with identity-padded matrix yields column sums") {
  // [[1,0,0],[0,1,0]] x ones(3x1): each output row sums the matching row.
  auto a = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  auto y = matmul(a, Tensor::full({3, 1}, 1.0));
  CHECK(y.shape() == Shape{2, 1});
  CHECK(y.data()[0] == 1.0);
  CHECK(y.data()[1] == 1.0);

  auto m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto s = matmul(m, Tensor::full({3, 1}, 1.0));
  CHECK(s.data()[0] == 6.0);
  CHECK(s.data()[1] == 15.0);
}

TEST_CASE("layer norm of [1,2,3] matches the formula") {
  auto y = layer_norm(Tensor::from({1, 3}, {1, 2, 3}));
  const double mu = 2.0;
  const double var = 2.0 / 3.0;
  double mean = 0.0;
  double second = 0.0;
  const double in[] = {1, 2, 3};
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(y.data()[i] - (in[i] - mu) / std::sqrt(var + 1e-5)) < 1e-12);
    mean += y.data()[i] / 3.0;
  }
  for (int i = 0; i < 3; ++i) second += (y.data()[i] - mean) * (y.data()[i] - mean) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  // Unit variance up to the epsilon shrinkage var / (var + eps).
  CHECK(std::abs(second - var / (var + 1e-5)) < 1e-9);
  CHECK(std::abs(second - 1.0) < 2e-5);
}

TEST_CASE("shape mismatch names the op and the shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 2});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(Tensor::zeros({2, 2}), Tensor::zeros({4})), ShapeError);
  CHECK_THROWS_AS((void)slice_rows(Tensor::zeros({3, 2}), 2, 5), ShapeError);
  CHECK_THROWS_AS((void)embedding(Tensor::zeros({4, 2}), std::vector<int>{4}), ShapeError);
  CHECK_THROWS_AS((void)concat_rows({Tensor::zeros({1, 2}), Tensor::zeros({1, 3})}), ShapeError);
}

TEST_CASE("scalar broadcast is the only broadcast") {
  auto x = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto y = mul(Tensor::scalar(2.0), x);
  CHECK(y.shape() == Shape{2, 2});
  CHECK(y.data()[3] == 8.0);
  CHECK_THROWS_AS((void)add(x, Tensor::zeros({1, 2})), ShapeError);
}

TEST_CASE("backward of sum(x*x) at 3 is 6") {
  auto x = Tensor::from({1}, {3.0}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("backward through a constant-only branch leaves zero gradient") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  auto c = Tensor::from({3}, {4, 5, 6});
  // The loss depends on x only through a zero multiplier.
  backward(add(sum(c), sum(mul(x, Tensor::scalar(0.0)))));
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("cross-entropy gradient equals softmax minus one-hot") {
  auto logits = Tensor::from({1, 4}, {0.3, -1.2, 2.0, 0.5}, true);
  const std::vector<double> onehot = {0, 0, 1, 0};
  auto loss = scale(log(sum(mul(softmax_rows(logits), Tensor::from({1, 4}, onehot)))), -1.0);
  backward(loss);
  auto p = softmax_rows(Tensor::from({1, 4}, {0.3, -1.2, 2.0, 0.5}));
  for (int i = 0; i < 4; ++i) {
    const double expected = p.data()[i] - onehot[i];
    CHECK(std::abs(logits.grad()[i] - expected) < 1e-12);
  }
  // Against central differences, relative error < 1e-6.
  const double h = 1e-5;
  std::vector<double> base = {0.3, -1.2, 2.0, 0.5};
  auto ce = [&](const std::vector<double>& v) {
    auto q = softmax_rows(Tensor::from({1, 4}, v));
    return -std::log(q.data()[2]);
  };
  for (int i = 0; i < 4; ++i) {
    auto up = base;
    auto down = base;
    up[i] += h;
    down[i] -= h;
    const double numeric = (ce(up) - ce(down)) / (2 * h);
    CHECK(std::abs(numeric - logits.grad()[i]) / std::abs(numeric) < 1e-6);
  }
}

TEST_CASE("backward rejects non-scalar, detached and consumed losses") {
  auto x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), TapeError);
  CHECK_THROWS_AS(backward(sum(Tensor::from({2}, {1, 2}))), TapeError);
  auto loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), TapeError);
}

TEST_CASE("tape lists parents before children and each node once") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto y = mul(x, x);
  auto z = add(y, y);
  auto loss = sum(add(z, y));
  const auto tape = build_tape(loss);
  std::vector<Node*> seen;
  for (const auto& sp : tape) {
    Node* n = sp.get();
    for (const auto& p : n->parents) {
      if (!p->requires_grad) continue;
      CHECK(std::find(seen.begin(), seen.end(), p.get()) != seen.end());
    }
    CHECK(std::find(seen.begin(), seen.end(), n) == seen.end());
    seen.push_back(n);
  }
  CHECK(tape.back() == loss.node());
  backward(loss);
  // d/dx sum(2x^2 + x^2) = 6x
  CHECK(x.grad()[0] == 6.0);
  CHECK(x.grad()[1] == 12.0);
}

TEST_CASE("no-grad guard suppresses recording") {
  auto x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("softmax rows are positive and sum to one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = uniform({5, 7}, -30.0, 30.0, seed);
    auto y = softmax_rows(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(y.at(r, c) > 0.0);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  auto w0 = uniform({3, 4}, -2, 2, 11);
  auto x0 = uniform({2, 3}, -2, 2, 12);
  auto loss_a = [](const Tensor& w, const Tensor& x) { return sum(relu(matmul(x, w))); };
  auto loss_b = [](const Tensor& w, const Tensor& x) {
    return mean(mul(softmax_rows(matmul(x, w)), matmul(x, w)));
  };
  auto grad_of = [&](auto&& f) {
    auto w = w0.detach_copy(true);
    backward(f(w, x0));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  const auto ga = grad_of(loss_a);
  const auto gb = grad_of(loss_b);
  const auto gab = grad_of([&](const Tensor& w, const Tensor& x) { return add(loss_a(w, x), loss_b(w, x)); });
  for (std::size_t i = 0; i < gab.size(); ++i) CHECK(std::abs(gab[i] - (ga[i] + gb[i])) < 1e-12);
}

TEST_CASE("same inputs produce bit-identical results") {
  auto run = [] {
    auto x = uniform({4, 6}, -2, 2, 99, true);
    auto w = uniform({6, 6}, -2, 2, 100, true);
    auto h = layer_norm(relu(matmul(x, w)));
    auto loss = sum(softmax_rows(matmul(h, h, true)));
    backward(loss);
    std::vector<double> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("masked fill blocks gradient at masked entries") {
  auto x = Tensor::from({1, 3}, {1, 2, 3}, true);
  const std::vector<std::uint8_t> mask = {0, 1, 0};
  auto y = masked_fill(x, mask, -1e9);
  CHECK(y.data()[1] == -1e9);
  backward(sum(y));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("embedding lookup scatters gradient to repeated rows") {
  auto table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<int> ids = {2, 0, 2};
  auto y = embedding(table, ids);
  CHECK(y.at(0, 1) == 6.0);
  backward(sum(y));
  CHECK(table.grad()[4] == 2.0);
  CHECK(table.grad()[0] == 1.0);
  CHECK(table.grad()[2] == 0.0);
}
