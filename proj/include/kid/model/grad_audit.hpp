// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "kid/model/model.hpp"
#include "kid/num/grad_check.hpp"

namespace kid::model {

// A reduced-width instance of the architecture: every component present,
// small enough that central differences over all weights stay cheap.
ModelConfig toy_config(std::size_t n_classes = 3, bool multi_label = false);

// Four samples of different lengths with targets and class labels.
Batch toy_batch(const ModelConfig& config, std::uint64_t seed);

struct ParamCheck {
  std::string param;
  num::GradCheckReport report;
};

// Grad-checks the chosen loss against every parameter tensor of `model`
// along random directions (per-element ratios on tensors this large mostly
// measure roundoff on the entries that happen to be near zero). With
// `training` set, dropout masks are drawn from a generator reseeded on
// every evaluation so the function stays deterministic.
std::vector<ParamCheck> check_loss_gradients(DualHeadModel& model, const Batch& batch, HeadMode mode,
                                             bool training, double step = 1e-5, double tol = 1e-4,
                                             std::size_t directions = 4);

}  // namespace kid::model
