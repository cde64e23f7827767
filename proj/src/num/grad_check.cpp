// SPDX-License-Identifier: Apache-2.0
#include "kid/num/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace kid::num {

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step, double tol) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  const auto evaluate = [&](const std::vector<double>& values) {
    NoGradGuard guard;
    return f(Tensor::from(x.shape(), values)).item();
  };
  std::vector<double> base(x.data().begin(), x.data().end());

  const double first = evaluate(base);
  const double second = evaluate(base);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw NondeterministicFunction("grad_check: f differs across identical calls");
  }

  Tensor leaf = Tensor::from(x.shape(), base, true);
  Tensor loss = f(leaf);
  backward(loss);
  std::vector<double> analytic(base.size(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  GradCheckReport report;
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + step;
    const double up = evaluate(probe);
    probe[i] = base[i] - step;
    const double down = evaluate(probe);
    probe[i] = base[i];
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckDenominatorFloor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

GradCheckReport directional_grad_check(const ScalarFn& f, const Tensor& x, double step, double tol,
                                       std::size_t directions, std::uint64_t seed) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (directions == 0) throw std::invalid_argument("grad_check: need at least one direction");
  const auto evaluate = [&](const std::vector<double>& values) {
    NoGradGuard guard;
    return f(Tensor::from(x.shape(), values)).item();
  };
  std::vector<double> base(x.data().begin(), x.data().end());
  const double first = evaluate(base);
  const double second = evaluate(base);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw NondeterministicFunction("grad_check: f differs across identical calls");
  }
  Tensor leaf = Tensor::from(x.shape(), base, true);
  backward(f(leaf));
  std::vector<double> analytic(base.size(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradCheckReport report;
  std::vector<double> d(base.size()), probe(base.size());
  for (std::size_t k = 0; k < directions; ++k) {
    // Unit length, so the probe moves x by exactly `step` as in grad_check.
    double norm = 0.0;
    for (auto& v : d) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : d) v /= norm;
    double a = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) a += analytic[i] * d[i];
    for (std::size_t i = 0; i < base.size(); ++i) probe[i] = base[i] + step * d[i];
    const double up = evaluate(probe);
    for (std::size_t i = 0; i < base.size(); ++i) probe[i] = base[i] - step * d[i];
    const double down = evaluate(probe);
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckDenominatorFloor});
    if (k == 0 || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = k;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace kid::num
