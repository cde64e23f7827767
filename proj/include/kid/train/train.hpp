// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/eval/report.hpp"
#include "kid/infer/infer.hpp"
#include "kid/knowledge/format.hpp"
#include "kid/model/model.hpp"

namespace kid::train {

// `baseline` trains the mean-pooled linear head alone (conventional
// classifier); the other three map to the model's head modes.
enum class TrainMode { gen_only, cls_only, dual, baseline };

std::string_view train_mode_name(TrainMode m);
TrainMode parse_train_mode(std::string_view s);

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 4;
  double lr_backbone = 3e-4;
  double lr_cls_head = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::dual;
  std::size_t knowledge_n = 0;
  knowledge::Format format = knowledge::Format::inlined;
  std::size_t max_len = 512;
  // Stop after this many epochs without a better validation score; 0 runs
  // every epoch.
  std::size_t patience = 0;

  void validate() const;
  infer::InputOptions input() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

struct LrMap {
  double backbone = 0.0;
  double cls_head = 0.0;
  double of(model::ParamGroup g) const { return g == model::ParamGroup::backbone ? backbone : cls_head; }
};

// Scales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

// Global-norm clipping, then bias-corrected Adam. Throws TrainError naming
// the first tensor with a non-finite gradient.
void adam_step(std::vector<model::NamedParam>& params, std::vector<std::vector<double>>& grads, AdamState& state,
               const LrMap& lr, const TrainConfig& config);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::optional<double> gen, cls;
  double total = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<eval::MetricReport> val;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  std::string selection_metric;
  double best_value = 0.0;
  double wall_seconds = 0.0;
  std::size_t missing_aug_text = 0;

  std::string to_csv() const;
  // Timing is left out unless asked for, so logs of equal runs compare equal.
  nlohmann::ordered_json to_json(bool with_timing = false) const;
};

using EpochHook = std::function<void(const EpochLog&)>;

// Trains in place. On return the model holds the weights of the epoch with
// the best validation metric (the last epoch when val is empty).
TrainLog train(model::DualHeadModel& model, const std::vector<data::MemeSample>& train_set,
               const std::vector<data::MemeSample>& val_set, const data::TaskSpec& task, const TrainConfig& config,
               const EpochHook& on_epoch = nullptr);

// Prediction settings matching how a model trained in `mode` is read.
infer::PredictOptions predict_options(TrainMode mode, const infer::InputOptions& input);
eval::Source metric_source(TrainMode mode);

// Model config for a task: n_classes, multi-label flag, baseline head.
model::ModelConfig model_config_for(const data::TaskSpec& task, TrainMode mode, std::size_t max_len = 512);
// Same, with architecture fields (d_model, n_layers, dropout, ...) taken
// from `overrides`. Fields the task or mode decide cannot be overridden;
// unknown keys throw TrainError naming the key.
model::ModelConfig model_config_for(const data::TaskSpec& task, TrainMode mode, std::size_t max_len,
                                    const nlohmann::json& overrides);

}  // namespace kid::train
