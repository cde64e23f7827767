// SPDX-License-Identifier: Apache-2.0
//
// Gradient checks for every differentiable op on random inputs in [-2, 2].
// Shared by the unit tests, the selftest command and the acceptance run.

#pragma once

#include <string>
#include <vector>

#include "kid/num/grad_check.hpp"

namespace kid::num {

struct OpCheck {
  std::string op;
  GradCheckReport report;
};

std::vector<OpCheck> check_all_ops(std::uint64_t seed, double step = 1e-5, double tol = 1e-4);

}  // namespace kid::num
