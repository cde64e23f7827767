// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

#include "kid/num/tensor.hpp"

namespace kid::num {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
};

class NondeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

inline constexpr double kGradCheckDenominatorFloor = 1e-8;

// Central differences against backward(). Relative error per element is
// |a - n| / max(|a|, |n|, 1e-8); pass iff the maximum is below tol.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step, double tol);

// Same error measure on directional derivatives: for each of `directions`
// random unit vectors d, (f(x + h d) - f(x - h d)) / 2h against
// <grad f, d>. worst_index is the direction. Suited to large tensors whose
// individual entries may sit near zero, where the per-element ratio only
// measures the loss's last-bit roundoff.
GradCheckReport directional_grad_check(const ScalarFn& f, const Tensor& x, double step, double tol,
                                       std::size_t directions, std::uint64_t seed);

}  // namespace kid::num
