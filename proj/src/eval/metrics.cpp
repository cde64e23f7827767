// SPDX-License-Identifier: Apache-2.0
#include "kid/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

namespace kid::eval {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc: need at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups, kept doubled so everything stays integral.
  std::uint64_t pos_rank2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank2 = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank2 += rank2;
    i = j;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2, computed in half units.
  const std::uint64_t u2 = pos_rank2 - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

void check_index(std::size_t c, std::size_t n_classes) {
  if (c >= n_classes) throw MetricError("label index " + std::to_string(c) + " outside the task label space");
}

}  // namespace

double macro_f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                std::size_t n_classes) {
  if (pred.size() != gold.size()) throw MetricError("macro_f1: pred and gold differ in length");
  if (n_classes == 0) throw MetricError("macro_f1: empty label space");
  std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_index(pred[i], n_classes);
    check_index(gold[i], n_classes);
    if (pred[i] == gold[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[gold[i]];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) total += f1(tp[c], fp[c], fn[c]);
  return total / static_cast<double>(n_classes);
}

double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold) {
  if (pred.size() != gold.size()) throw MetricError("accuracy: pred and gold differ in length");
  if (pred.empty()) throw MetricError("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double macro_f1(const std::vector<IndexSet>& pred, const std::vector<IndexSet>& gold, std::size_t n_classes) {
  if (pred.size() != gold.size()) throw MetricError("macro_f1: pred and gold differ in length");
  if (n_classes == 0) throw MetricError("macro_f1: empty label space");
  std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<char> p(n_classes, 0), g(n_classes, 0);
    for (auto c : pred[i]) check_index(c, n_classes), p[c] = 1;
    for (auto c : gold[i]) check_index(c, n_classes), g[c] = 1;
    for (std::size_t c = 0; c < n_classes; ++c) {
      tp[c] += p[c] && g[c];
      fp[c] += p[c] && !g[c];
      fn[c] += !p[c] && g[c];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) total += f1(tp[c], fp[c], fn[c]);
  return total / static_cast<double>(n_classes);
}

double accuracy(const std::vector<IndexSet>& pred, const std::vector<IndexSet>& gold) {
  if (pred.size() != gold.size()) throw MetricError("accuracy: pred and gold differ in length");
  if (pred.empty()) throw MetricError("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    IndexSet a = pred[i], b = gold[i];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    hit += a == b;
  }
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0)) throw MetricError("student_t: df must be positive");
  if (std::isinf(t)) return 0.0;
  // P(|T| >= |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw MetricError("paired_t_test: a and b differ in length");
  if (a.size() < 2) throw MetricError("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  TTest out;
  out.df = n - 1;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p = student_t_two_sided(out.t, static_cast<double>(out.df));
  return out;
}

}  // namespace kid::eval
