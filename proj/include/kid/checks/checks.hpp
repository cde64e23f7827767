// SPDX-License-Identifier: Apache-2.0
//
// Self-contained correctness checks shared by the selftest command and the
// acceptance run: gradient checks, parser round trips, metric oracles and
// template bijection. Each check carries its own oracle.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kid::checks {

struct CheckResult {
  std::string name;  // "<group>:<what>", e.g. "grad:softmax-rows"
  bool passed = false;
  std::string detail;
};

// Every differentiable op, then every loss of the model (gen, cls, dual;
// eval and training mode; single- and multi-label) against every weight.
std::vector<CheckResult> gradient_checks(std::uint64_t seed);

// 100 generated texts in both formats, the two reference strings,
// inline/appended conversion and truncate_to_n for n in 0..5.
std::vector<CheckResult> parser_checks(std::uint64_t seed);

// AUC vs the pairwise oracle (200 instances with ties), macro-F1 and
// accuracy over every small confusion matrix, t-test vs an integrated
// t density.
std::vector<CheckResult> metric_checks(std::uint64_t seed);

// render/decode identity over the full label space of every template
// family, with multi-label sets up to size 4.
std::vector<CheckResult> template_checks();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace kid::checks
