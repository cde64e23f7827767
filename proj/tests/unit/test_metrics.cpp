// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "kid/eval/metrics.hpp"

using namespace kid::eval;

namespace {

// O(n^2) pairwise count, kept as a single exact division.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) twice += 2;
      else if (s[i] == s[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

// Two-sided tail from Simpson integration of the Student-t density.
double t_tail_oracle(double t, double df) {
  const double c = std::tgamma((df + 1) / 2) / (std::sqrt(df * M_PI) * std::tgamma(df / 2));
  auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 200000;
  const double h = std::abs(t) / n;
  double s = f(0) + f(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK(auc({0.2, 0.8, 0.9, 0.3}, {1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(auc({0.1}, {1, 0}), MetricError);
}

TEST_CASE("auc equals the pairwise oracle exactly, and ignores monotone transforms") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 99;
    std::vector<double> s(n);
    std::vector<int> y(n);
    // Coarse score grid forces ties.
    for (auto& v : s) v = static_cast<double>(rng() % 10) / 10.0;
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    y[0] = 1;
    y[1] = 0;
    const double a = auc(s, y);
    CHECK(a == auc_oracle(s, y));
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::exp(3 * s[i]) - 5;
    CHECK(auc(e, y) == a);
  }
}

TEST_CASE("macro-F1 and accuracy examples") {
  CHECK(macro_f1(std::vector<std::size_t>{0, 1, 1}, std::vector<std::size_t>{0, 1, 1}, 2) == 1.0);
  CHECK(accuracy(std::vector<std::size_t>{0, 1, 1}, std::vector<std::size_t>{0, 1, 1}) == 1.0);
  const double m = macro_f1(std::vector<std::size_t>{1, 1, 0, 0}, std::vector<std::size_t>{1, 0, 0, 0}, 2);
  CHECK(std::abs(m - (2.0 / 3 + 4.0 / 5) / 2) < 1e-15);
  // Class 2 appears nowhere: contributes zero.
  CHECK(macro_f1(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}, 3) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(macro_f1(std::vector<std::size_t>{3}, std::vector<std::size_t>{0}, 2), MetricError);
  CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}), MetricError);
}

TEST_CASE("macro-F1 and accuracy on every small confusion matrix") {
  for (std::size_t k : {2u, 3u}) {
    const std::size_t cells = k * k;
    std::size_t count = 1;
    for (std::size_t i = 0; i < cells; ++i) count *= 4;
    for (std::size_t code = 0; code < count; ++code) {
      std::vector<std::size_t> m(cells);
      std::size_t c = code, total = 0;
      for (auto& v : m) v = c % 4, c /= 4, total += v;
      if (total == 0) continue;
      std::vector<std::size_t> pred, gold;
      for (std::size_t g = 0; g < k; ++g)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t r = 0; r < m[g * k + p]; ++r) gold.push_back(g), pred.push_back(p);
      double f = 0, diag = 0;
      for (std::size_t i = 0; i < k; ++i) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) row += m[i * k + j], col += m[j * k + i];
        f += row + col == 0 ? 0.0 : 2.0 * m[i * k + i] / static_cast<double>(row + col);
        diag += m[i * k + i];
      }
      REQUIRE(std::abs(macro_f1(pred, gold, k) - f / k) < 1e-12);
      REQUIRE(accuracy(pred, gold) == diag / total);
    }
  }
}

TEST_CASE("multi-label metrics") {
  const std::vector<IndexSet> gold = {{0, 2}, {1}, {}, {0}};
  const std::vector<IndexSet> pred = {{2, 0}, {1, 2}, {}, {}};
  CHECK(accuracy(pred, gold) == 0.5);
  // class 0: tp1 fn1 -> 2/3; class 1: tp1 -> 1; class 2: tp1 fp1 -> 2/3
  CHECK(std::abs(macro_f1(pred, gold, 3) - (2.0 / 3 + 1 + 2.0 / 3) / 3) < 1e-15);
  CHECK_THROWS_AS(macro_f1(std::vector<IndexSet>{{5}}, std::vector<IndexSet>{{0}}, 3), MetricError);
}

TEST_CASE("paired t-test") {
  const auto r = paired_t_test({1, 2, 3}, {0, 0, 0});
  CHECK(r.df == 2);
  CHECK(std::abs(r.t - 2 * std::sqrt(3.0)) < 1e-12);
  const double oracle = t_tail_oracle(r.t, 2);
  CHECK(std::abs(oracle - 0.0742) < 1e-3);
  CHECK(std::abs(r.p - oracle) < 1e-3);
  // df = 2 has a closed form: p = 1 - |t| / sqrt(t^2 + 2)
  CHECK(std::abs(r.p - (1 - r.t / std::sqrt(r.t * r.t + 2))) < 1e-12);

  CHECK(paired_t_test({1, 2, 3}, {1, 2, 3}).p == 1.0);
  const auto flat = paired_t_test({2, 3, 4}, {1, 2, 3});
  CHECK(flat.p == 0.0);
  CHECK(std::isinf(flat.t));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(5), b(5);
    for (int i = 0; i < 5; ++i) a[i] = g(rng), b[i] = g(rng);
    const auto ab = paired_t_test(a, b);
    const auto ba = paired_t_test(b, a);
    CHECK(ab.t == -ba.t);
    CHECK(ab.p == ba.p);
    CHECK(std::abs(ab.p - t_tail_oracle(ab.t, 4)) < 1e-6);
    for (auto& v : a) v += 0.25;
    for (auto& v : b) v += 0.25;
    const auto shifted = paired_t_test(a, b);
    CHECK(std::abs(shifted.t - ab.t) < 1e-9);
    CHECK(std::abs(shifted.p - ab.p) < 1e-9);
  }
  CHECK_THROWS_AS(paired_t_test({1, 2}, {1}), MetricError);
  CHECK_THROWS_AS(paired_t_test({1}, {1}), MetricError);
}
