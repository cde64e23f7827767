// SPDX-License-Identifier: Apache-2.0
//
// Pre-LN causal transformer over [patches][BOS] text [SEP] description [SEP]
// target [EOS], with a generation head over the byte vocabulary, a two-layer
// MLP classification head read at the last prompt position, and an optional
// mean-pooled linear head for the conventional baseline.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/model/batch.hpp"
#include "kid/num/ops.hpp"

namespace kid::model {

using num::Tensor;

enum class Activation { relu, sigmoid };
enum class HeadMode { gen_only, cls_only, dual };
enum class ParamGroup { backbone, cls_head };

std::string_view head_mode_name(HeadMode m);
HeadMode parse_head_mode(std::string_view s);

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab = 260;
  std::size_t max_len = 512;
  std::size_t n_classes = 2;
  bool multi_label = false;
  double input_dropout = 0.1;
  double hidden_dropout = 0.2;
  Activation cls_activation = Activation::relu;
  double decision_threshold = 0.5;
  bool baseline_head = false;
  double init_std = 0.02;  // weight init; positions use half of it

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct NamedParam {
  std::string name;
  ParamGroup group;
  Tensor value;
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout masks; required when training
};

struct Losses {
  Tensor gen;    // undefined unless the mode uses the generation head
  Tensor cls;    // undefined unless the mode uses the classification head
  Tensor total;
};

class DualHeadModel {
 public:
  DualHeadModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  Tensor& param(std::string_view name);
  const Tensor& param(std::string_view name) const;
  std::size_t parameter_count() const;

  // Hidden states, (B * L) x d_model; row b * L + t is sample b, position t.
  Tensor encode(const Batch& batch, const ForwardOptions& opt = {}) const;

  // Generation-head logits for the given rows of H.
  Tensor gen_logits(const Tensor& h, std::span<const int> rows) const;
  Tensor gen_logits(const Tensor& h) const;
  // Mean NLL of target tokens (bytes + EOS) per sample, then mean over batch.
  Tensor gen_loss(const Tensor& h, const Batch& batch) const;

  // Classification logits at each sample's last prompt position, B x C.
  Tensor cls_logits(const Tensor& h, const Batch& batch) const;
  // Softmax rows, or elementwise sigmoid for multi-label.
  Tensor cls_probs(const Tensor& logits) const;
  // Cross-entropy against one-hot targets, or mean BCE for multi-label;
  // computed from logits for numerical stability.
  Tensor cls_loss(const Tensor& logits, const Batch& batch) const;

  // Mean pool over non-PAD positions, linear, softmax (or sigmoid).
  Tensor baseline_logits(const Tensor& h, const Batch& batch) const;
  Tensor pooled(const Tensor& h, const Batch& batch) const;

  Losses total_loss(const Batch& batch, HeadMode mode, const ForwardOptions& opt = {}) const;
  // Baseline head cross-entropy (the conventional pooled classifier).
  Tensor baseline_loss(const Batch& batch, const ForwardOptions& opt = {}) const;

  // Sum of log P(target tokens) per sample under the generation head.
  std::vector<double> sequence_log_probs(const Batch& batch) const;
  std::vector<double> sequence_log_probs(const Tensor& h, const Batch& batch) const;

 private:
  Tensor linear(const Tensor& x, const std::string& prefix) const;
  Tensor dropout(const Tensor& x, double p, const ForwardOptions& opt) const;
  Tensor add_param(std::string name, ParamGroup group, num::Shape shape, double stddev,
                   std::mt19937_64& rng, double fill = 0.0);

  Tensor attention(const Tensor& x, std::size_t layer, const Batch& batch) const;

  ModelConfig config_;
  std::vector<NamedParam> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Per-row log probability of `targets` under logits (R x V): log softmax
// picked at each row's target id.
Tensor pick_log_probs(const Tensor& logits, std::span<const int> targets);

}  // namespace kid::model
