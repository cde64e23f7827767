// SPDX-License-Identifier: Apache-2.0
#include "kid/model/grad_audit.hpp"

#include <random>

#include "kid/data/image.hpp"

namespace kid::model {

ModelConfig toy_config(std::size_t n_classes, bool multi_label) {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_len = 64;
  c.n_classes = n_classes;
  c.multi_label = multi_label;
  c.baseline_head = true;
  // Larger weights keep gradients well above central-difference roundoff.
  c.init_std = 0.3;
  return c;
}

Batch toy_batch(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  const char* texts[] = {"ab", "hello", "x", "meme"};
  const char* descs[] = {"⟨ab⟩ [k]", "", "zz", "⟨m⟩ [q] and"};
  const char* targets[] = {"yes", "no", "maybe", "ok"};
  std::vector<Example> examples;
  for (std::size_t i = 0; i < 4; ++i) {
    Example ex;
    ex.patches.resize(data::kPatchCount * data::kPatchDim);
    for (auto& p : ex.patches) p = pixel(rng);
    ex.text = texts[i];
    ex.description = descs[i];
    ex.target = targets[i];
    ex.class_target.assign(config.n_classes, 0.0);
    ex.class_target[i % config.n_classes] = 1.0;
    if (config.multi_label && i % 2 == 0) ex.class_target[(i + 1) % config.n_classes] = 1.0;
    examples.push_back(std::move(ex));
  }
  return make_batch(examples, config.max_len);
}

std::vector<ParamCheck> check_loss_gradients(DualHeadModel& model, const Batch& batch, HeadMode mode,
                                             bool training, double step, double tol, std::size_t directions) {
  std::vector<ParamCheck> out;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const std::string name = model.params()[i].name;
    if (name.rfind("baseline_head", 0) == 0) continue;  // not part of the dual loss
    const Tensor original = model.params()[i].value;
    auto f = [&](const Tensor& x) {
      model.params()[i].value = x;
      std::mt19937_64 rng(1234);
      ForwardOptions opt{training, &rng};
      Tensor loss = model.total_loss(batch, mode, opt).total;
      model.params()[i].value = original;
      return loss;
    };
    out.push_back({name, num::directional_grad_check(f, original, step, tol, directions, 77 + i)});
  }
  return out;
}

}  // namespace kid::model
