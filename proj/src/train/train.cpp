// SPDX-License-Identifier: Apache-2.0
#include "kid/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <tuple>

#include "kid/model/checkpoint.hpp"

namespace kid::train {

using model::HeadMode;

std::string_view train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::gen_only: return "gen_only";
    case TrainMode::cls_only: return "cls_only";
    case TrainMode::dual: return "dual";
    case TrainMode::baseline: return "baseline";
  }
  return "dual";
}

TrainMode parse_train_mode(std::string_view s) {
  for (auto m : {TrainMode::gen_only, TrainMode::cls_only, TrainMode::dual, TrainMode::baseline})
    if (train_mode_name(m) == s) return m;
  throw TrainError("unknown training mode '" + std::string(s) + "' (gen_only | cls_only | dual | baseline)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw TrainError("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw TrainError("train config: max_epochs must be >= 1");
  if (!(lr_backbone >= 0) || !(lr_cls_head >= 0)) throw TrainError("train config: learning rates must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw TrainError("train config: betas in [0, 1)");
  if (!(eps > 0)) throw TrainError("train config: eps must be positive");
  if (!(grad_clip_norm > 0)) throw TrainError("train config: grad_clip_norm must be positive");
}

infer::InputOptions TrainConfig::input() const { return {knowledge_n, format, max_len}; }

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},           {"max_epochs", max_epochs},
          {"lr_backbone", lr_backbone},         {"lr_cls_head", lr_cls_head},
          {"beta1", beta1},                     {"beta2", beta2},
          {"eps", eps},                         {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},                       {"mode", train_mode_name(mode)},
          {"knowledge_n", knowledge_n},         {"format", knowledge::format_name(format)},
          {"max_len", max_len},                 {"patience", patience}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.lr_backbone = j.value("lr_backbone", c.lr_backbone);
    c.lr_cls_head = j.value("lr_cls_head", c.lr_cls_head);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.seed = j.value("seed", c.seed);
    c.mode = parse_train_mode(j.value("mode", std::string(train_mode_name(c.mode))));
    c.knowledge_n = j.value("knowledge_n", c.knowledge_n);
    c.format = knowledge::parse_format(j.value("format", std::string("inline")));
    c.max_len = j.value("max_len", c.max_len);
    c.patience = j.value("patience", c.patience);
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g) v *= s;
  }
  return norm;
}

void adam_step(std::vector<model::NamedParam>& params, std::vector<std::vector<double>>& grads, AdamState& state,
               const LrMap& lr, const TrainConfig& config) {
  if (grads.size() != params.size()) throw TrainError("adam: one gradient per parameter required");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size()) {
      throw TrainError("adam: gradient of '" + params[i].name + "' has the wrong size");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw TrainError("adam: non-finite gradient in '" + params[i].name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  clip_global_norm(grads, config.grad_clip_norm);
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double rate = lr.of(params[i].group);
    auto w = params[i].value.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= rate * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string TrainLog::to_csv() const {
  std::string out = "step,epoch,L_gen,L_cls,L_total\n";
  for (const auto& s : steps) {
    out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + (s.gen ? fmt(*s.gen) : "") + "," +
           (s.cls ? fmt(*s.cls) : "") + "," + fmt(s.total) + "\n";
  }
  return out;
}

nlohmann::ordered_json TrainLog::to_json(bool with_timing) const {
  nlohmann::ordered_json epochs_j = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    epochs_j.push_back({{"epoch", e.epoch},
                        {"mean_loss", e.mean_loss},
                        {"val", e.val ? e.val->to_json() : nlohmann::ordered_json(nullptr)}});
  }
  nlohmann::ordered_json j = {{"steps", steps.size()},
                              {"final_step", steps.empty() ? nlohmann::ordered_json(nullptr)
                                                           : nlohmann::ordered_json{{"L_gen", opt_json(steps.back().gen)},
                                                                                    {"L_cls", opt_json(steps.back().cls)},
                                                                                    {"L_total", steps.back().total}}},
                              {"epochs", epochs_j},
                              {"best_epoch", best_epoch},
                              {"selection_metric", selection_metric},
                              {"best_value", best_value},
                              {"missing_aug_text", missing_aug_text}};
  if (with_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

infer::PredictOptions predict_options(TrainMode mode, const infer::InputOptions& input) {
  infer::PredictOptions o;
  o.input = input;
  o.classifier = mode == TrainMode::baseline ? infer::Classifier::baseline_head : infer::Classifier::cls_head;
  o.semantic = mode == TrainMode::gen_only || mode == TrainMode::dual;
  return o;
}

eval::Source metric_source(TrainMode mode) {
  return mode == TrainMode::gen_only ? eval::Source::semantic : eval::Source::classifier;
}

model::ModelConfig model_config_for(const data::TaskSpec& task, TrainMode mode, std::size_t max_len) {
  model::ModelConfig c;
  c.n_classes = task.n_classes();
  c.multi_label = task.is_multi_label();
  c.baseline_head = mode == TrainMode::baseline;
  c.max_len = max_len;
  return c;
}

model::ModelConfig model_config_for(const data::TaskSpec& task, TrainMode mode, std::size_t max_len,
                                    const nlohmann::json& overrides) {
  const model::ModelConfig base = model_config_for(task, mode, max_len);
  if (overrides.is_null()) return base;
  if (!overrides.is_object()) throw TrainError("model: expected an object");
  nlohmann::json j = base.to_json();
  for (const auto& [k, v] : overrides.items()) {
    if (k == "n_classes" || k == "multi_label" || k == "baseline_head" || k == "max_len") {
      throw TrainError("model." + k + ": set by the task and training config");
    }
    if (!j.contains(k)) throw TrainError("model." + k + ": unknown key");
    j[k] = v;
  }
  try {
    return model::ModelConfig::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("model: ") + e.what());
  } catch (const model::ModelError& e) {
    throw TrainError(e.what());
  }
}

TrainLog train(model::DualHeadModel& model, const std::vector<data::MemeSample>& train_set,
               const std::vector<data::MemeSample>& val_set, const data::TaskSpec& task, const TrainConfig& config,
               const EpochHook& on_epoch) {
  config.validate();
  if (train_set.empty()) throw TrainError("train: empty training split");
  if (config.max_len > model.config().max_len) throw TrainError("train: max_len exceeds the model's L_max");
  if (config.mode == TrainMode::baseline && !model.config().baseline_head) {
    throw TrainError("train: baseline mode needs a model with a baseline head");
  }
  const auto start = std::chrono::steady_clock::now();
  const bool needs_targets = config.mode == TrainMode::gen_only || config.mode == TrainMode::dual;
  TrainLog log;
  std::vector<model::Example> examples;
  examples.reserve(train_set.size());
  for (const auto& s : train_set) {
    if (config.knowledge_n > 0 && !s.aug_text) ++log.missing_aug_text;
    model::Example ex = infer::make_example(s, task, config.input(), true);
    // Rendered labels after the prompt would leak into the pooled baseline.
    if (!needs_targets) ex.target.reset();
    examples.push_back(std::move(ex));
  }

  std::seed_seq shuffle_seed{config.seed, std::uint64_t{0x5348}};
  std::seed_seq dropout_seed{config.seed, std::uint64_t{0x4452}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 dropout_rng(dropout_seed);

  const HeadMode head = config.mode == TrainMode::gen_only  ? HeadMode::gen_only
                        : config.mode == TrainMode::cls_only ? HeadMode::cls_only
                                                             : HeadMode::dual;
  const LrMap lr{config.lr_backbone, config.lr_cls_head};
  const infer::PredictOptions popt = predict_options(config.mode, config.input());
  AdamState state;
  std::optional<model::DualHeadModel> best;
  log.best_value = -1.0;
  std::tuple<double, double, double> best_key{-1.0, -1.0, -1.0};
  std::size_t stale = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<model::Example> chunk;
      for (std::size_t i = begin; i < end; ++i) chunk.push_back(examples[order[i]]);
      const model::Batch batch = model::make_batch(chunk, config.max_len);
      const model::ForwardOptions fo{true, &dropout_rng};

      StepLog s;
      s.step = ++step;
      s.epoch = epoch;
      num::Tensor total;
      if (config.mode == TrainMode::baseline) {
        total = model.baseline_loss(batch, fo);
        s.cls = total.item();
      } else {
        const model::Losses l = model.total_loss(batch, head, fo);
        total = l.total;
        if (l.gen.defined()) s.gen = l.gen.item();
        if (l.cls.defined()) s.cls = l.cls.item();
      }
      s.total = total.item();
      if (!std::isfinite(s.total)) {
        throw TrainError("train: loss is not finite at step " + std::to_string(s.step) + " (epoch " +
                         std::to_string(epoch) + ")");
      }
      for (auto& p : model.params()) p.value.zero_grad();
      num::backward(total);
      std::vector<std::vector<double>> grads;
      grads.reserve(model.params().size());
      for (auto& p : model.params()) {
        if (p.value.has_grad()) {
          grads.emplace_back(p.value.grad().begin(), p.value.grad().end());
        } else {
          grads.emplace_back(p.value.size(), 0.0);
        }
        p.value.zero_grad();
      }
      adam_step(model.params(), grads, state, lr, config);
      loss_sum += s.total;
      ++batches;
      log.steps.push_back(s);
    }

    EpochLog e;
    e.epoch = epoch;
    e.mean_loss = loss_sum / static_cast<double>(batches);
    bool improved = val_set.empty();
    if (!val_set.empty()) {
      const auto preds = infer::predict_all(model, val_set, task, popt);
      e.val = eval::score_predictions(preds, val_set, task, metric_source(config.mode));
      log.selection_metric = e.val->primary_name();
      // Strictly better only, compared as (primary, accuracy, heads
      // agreement): AUC saturates before the threshold is calibrated, and a
      // saturated classifier says nothing about the generation head. Full
      // ties keep the earlier epoch.
      const auto key = std::make_tuple(e.val->primary(), e.val->accuracy, e.val->heads_agreement.value_or(-1.0));
      improved = key > best_key;
      if (improved) {
        best_key = key;
        log.best_value = std::get<0>(key);
      }
    }
    if (improved) {
      log.best_epoch = epoch;
      if (!best) best.emplace(model.config(), 0);
      model::copy_weights(model, *best);
    }
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
    stale = improved ? 0 : stale + 1;
    if (config.patience > 0 && !val_set.empty() && stale >= config.patience) break;
  }
  if (val_set.empty()) log.selection_metric = "last_epoch";
  if (best) model::copy_weights(*best, model);
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

}  // namespace kid::train
