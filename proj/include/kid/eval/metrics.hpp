// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace kid::eval {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mann-Whitney AUC via rank sums; ties count one half. Throws MetricError
// when only one class is present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Single-label: one class index per sample in [0, n_classes).
double macro_f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                std::size_t n_classes);
double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold);

// Multi-label: sorted index sets. F1 is per-class binary, averaged;
// accuracy is exact set match.
using IndexSet = std::vector<std::size_t>;
double macro_f1(const std::vector<IndexSet>& pred, const std::vector<IndexSet>& gold, std::size_t n_classes);
double accuracy(const std::vector<IndexSet>& pred, const std::vector<IndexSet>& gold);

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
  std::size_t df = 0;
};

// Paired t-test on a - b. Zero-variance differences give p = 0 (nonzero
// mean, t = +-inf) or p = 1 (zero mean, t = 0).
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided Student-t tail probability P(|T| >= |t|) with df degrees of freedom.
double student_t_two_sided(double t, double df);

}  // namespace kid::eval
