// SPDX-License-Identifier: Apache-2.0
#include "kid/model/model.hpp"

#include <cmath>
#include <map>

#include "kid/data/image.hpp"
#include "kid/data/tokenizer.hpp"

namespace kid::model {

using num::Shape;

std::string_view head_mode_name(HeadMode m) {
  switch (m) {
    case HeadMode::gen_only: return "gen_only";
    case HeadMode::cls_only: return "cls_only";
    case HeadMode::dual: return "dual";
  }
  return "?";
}

HeadMode parse_head_mode(std::string_view s) {
  if (s == "gen_only") return HeadMode::gen_only;
  if (s == "cls_only") return HeadMode::cls_only;
  if (s == "dual") return HeadMode::dual;
  throw ModelError("unknown head mode '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_len == 0 || n_classes == 0) {
    throw ModelError("model config: all extents must be positive");
  }
  if (d_model % n_heads != 0) throw ModelError("model config: d_model must be divisible by n_heads");
  if (vocab != static_cast<std::size_t>(data::kVocabSize)) {
    throw ModelError("model config: vocab must be 260 for the byte tokenizer");
  }
  if (input_dropout < 0 || input_dropout >= 1 || hidden_dropout < 0 || hidden_dropout >= 1) {
    throw ModelError("model config: dropout rates must lie in [0, 1)");
  }
  if (max_len <= data::kPatchCount + 4) throw ModelError("model config: max_len too small");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  return {{"d_model", d_model},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"d_ff", d_ff},
          {"vocab", vocab},
          {"max_len", max_len},
          {"n_classes", n_classes},
          {"multi_label", multi_label},
          {"input_dropout", input_dropout},
          {"hidden_dropout", hidden_dropout},
          {"cls_activation", cls_activation == Activation::relu ? "relu" : "sigmoid"},
          {"decision_threshold", decision_threshold},
          {"baseline_head", baseline_head},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.vocab = j.value("vocab", c.vocab);
  c.max_len = j.value("max_len", c.max_len);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.multi_label = j.value("multi_label", c.multi_label);
  c.input_dropout = j.value("input_dropout", c.input_dropout);
  c.hidden_dropout = j.value("hidden_dropout", c.hidden_dropout);
  const std::string act = j.value("cls_activation", std::string("relu"));
  if (act != "relu" && act != "sigmoid") throw ModelError("model config: unknown activation '" + act + "'");
  c.cls_activation = act == "relu" ? Activation::relu : Activation::sigmoid;
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  c.baseline_head = j.value("baseline_head", c.baseline_head);
  c.init_std = j.value("init_std", c.init_std);
  c.validate();
  return c;
}

Tensor DualHeadModel::add_param(std::string name, ParamGroup group, Shape shape, double stddev,
                                std::mt19937_64& rng, double fill) {
  std::vector<double> v(num::element_count(shape), fill);
  if (stddev > 0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : v) x = dist(rng);
  }
  index_[name] = params_.size();
  params_.push_back({std::move(name), group, Tensor::from(std::move(shape), std::move(v), true)});
  return params_.back().value;
}

DualHeadModel::DualHeadModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model;
  const std::size_t dh = d / config_.n_heads;
  const auto bb = ParamGroup::backbone;
  const double sd = config_.init_std;
  auto linear_params = [&](const std::string& prefix, std::size_t in, std::size_t out, ParamGroup g) {
    add_param(prefix + ".w", g, {in, out}, sd, rng);
    add_param(prefix + ".b", g, {1, out}, 0.0, rng);
  };
  linear_params("patch_proj", data::kPatchDim, d, bb);
  add_param("token_embed", bb, {config_.vocab, d}, sd, rng);
  add_param("pos_embed", bb, {config_.max_len, d}, sd / 2, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l);
    add_param(p + ".ln1.g", bb, {1, d}, 0.0, rng, 1.0);
    add_param(p + ".ln1.b", bb, {1, d}, 0.0, rng);
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const std::string ph = p + ".attn.h" + std::to_string(h);
      add_param(ph + ".wq", bb, {d, dh}, sd, rng);
      add_param(ph + ".wk", bb, {d, dh}, sd, rng);
      add_param(ph + ".wv", bb, {d, dh}, sd, rng);
      add_param(ph + ".wo", bb, {dh, d}, sd, rng);
    }
    add_param(p + ".attn.bo", bb, {1, d}, 0.0, rng);
    add_param(p + ".ln2.g", bb, {1, d}, 0.0, rng, 1.0);
    add_param(p + ".ln2.b", bb, {1, d}, 0.0, rng);
    linear_params(p + ".ff.l1", d, config_.d_ff, bb);
    linear_params(p + ".ff.l2", config_.d_ff, d, bb);
  }
  add_param("ln_f.g", bb, {1, d}, 0.0, rng, 1.0);
  add_param("ln_f.b", bb, {1, d}, 0.0, rng);
  // The generation head trains at the backbone rate.
  linear_params("gen_head", d, config_.vocab, bb);
  linear_params("cls_head.l1", d, config_.d_ff, ParamGroup::cls_head);
  linear_params("cls_head.l2", config_.d_ff, config_.n_classes, ParamGroup::cls_head);
  if (config_.baseline_head) linear_params("baseline_head", d, config_.n_classes, ParamGroup::cls_head);
}

Tensor& DualHeadModel::param(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("no parameter '" + std::string(name) + "'");
  return params_[it->second].value;
}

const Tensor& DualHeadModel::param(std::string_view name) const {
  return const_cast<DualHeadModel*>(this)->param(name);
}

std::size_t DualHeadModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor DualHeadModel::linear(const Tensor& x, const std::string& prefix) const {
  const Tensor& w = param(prefix + ".w");
  const Tensor& b = param(prefix + ".b");
  // Row-broadcast of the bias as ones(rows x 1) * b.
  return num::add(num::matmul(x, w), num::matmul(Tensor::full({x.rows(), 1}, 1.0), b));
}

Tensor DualHeadModel::dropout(const Tensor& x, double p, const ForwardOptions& opt) const {
  if (!opt.training || p <= 0.0) return x;
  if (!opt.rng) throw ModelError("dropout: training forward needs an rng");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.size());
  const double kept = 1.0 / (1.0 - p);
  for (auto& m : mask) m = keep(*opt.rng) ? kept : 0.0;
  return num::mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor DualHeadModel::attention(const Tensor& x, std::size_t layer, const Batch& batch) const {
  const std::size_t L = batch.seq_len;
  const std::size_t dh = config_.d_model / config_.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::string p = "blocks." + std::to_string(layer) + ".attn";
  std::map<std::size_t, std::vector<std::uint8_t>> causal;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    auto& m = causal[batch.lengths[b]];
    if (!m.empty()) continue;
    const std::size_t n = batch.lengths[b];
    m.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
  }
  Tensor out;
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    const std::string ph = p + ".h" + std::to_string(h);
    const Tensor q = num::matmul(x, param(ph + ".wq"));
    const Tensor k = num::matmul(x, param(ph + ".wk"));
    const Tensor v = num::matmul(x, param(ph + ".wv"));
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      // PAD is always a suffix: restricting to the first `len` rows masks
      // PAD keys for every real query; PAD queries get a zero context.
      const std::size_t len = batch.lengths[b];
      const std::size_t r0 = b * L;
      const Tensor qb = num::slice_rows(q, r0, r0 + len);
      const Tensor kb = num::slice_rows(k, r0, r0 + len);
      const Tensor vb = num::slice_rows(v, r0, r0 + len);
      Tensor scores = num::scale(num::matmul(qb, kb, true), inv_sqrt);
      scores = num::masked_fill(scores, causal.at(len), -1e30);
      parts.push_back(num::matmul(num::softmax_rows(scores), vb));
      if (len < L) parts.push_back(Tensor::zeros({L - len, dh}));
    }
    const Tensor o = num::matmul(num::concat_rows(parts), param(ph + ".wo"));
    out = out.defined() ? num::add(out, o) : o;
  }
  return num::add(out, num::matmul(Tensor::full({out.rows(), 1}, 1.0), param(p + ".bo")));
}

Tensor DualHeadModel::encode(const Batch& batch, const ForwardOptions& opt) const {
  const std::size_t B = batch.batch_size;
  const std::size_t L = batch.seq_len;
  if (B == 0) throw ModelError("encode: empty batch");
  if (L > config_.max_len) {
    throw data::SequenceOverflow("encode: sequence length " + std::to_string(L) + " exceeds L_max " +
                                 std::to_string(config_.max_len));
  }
  if (opt.training && !opt.rng) throw ModelError("encode: training forward needs an rng");
  const Tensor patches = Tensor::from({B * data::kPatchCount, data::kPatchDim}, batch.patches);
  const Tensor patch_rows = linear(patches, "patch_proj");
  std::vector<int> text_ids;
  std::vector<int> gather(B * L);
  std::vector<int> positions(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t r = b * L + t;
      positions[r] = static_cast<int>(t);
      if (t < data::kPatchCount) {
        gather[r] = static_cast<int>(b * data::kPatchCount + t);
      } else {
        gather[r] = static_cast<int>(B * data::kPatchCount + text_ids.size());
        text_ids.push_back(batch.token_ids[r]);
      }
    }
  }
  std::vector<Tensor> tables = {patch_rows};
  if (!text_ids.empty()) tables.push_back(num::embedding(param("token_embed"), text_ids));
  Tensor x = num::embedding(num::concat_rows(tables), gather);
  x = num::add(x, num::embedding(param("pos_embed"), positions));
  x = dropout(x, config_.input_dropout, opt);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l);
    const Tensor h1 = num::layer_norm(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
    x = num::add(x, dropout(attention(h1, l, batch), config_.hidden_dropout, opt));
    const Tensor h2 = num::layer_norm(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
    const Tensor f = linear(num::relu(linear(h2, p + ".ff.l1")), p + ".ff.l2");
    x = num::add(x, dropout(f, config_.hidden_dropout, opt));
  }
  return num::layer_norm(x, param("ln_f.g"), param("ln_f.b"));
}

Tensor DualHeadModel::gen_logits(const Tensor& h, std::span<const int> rows) const {
  return linear(num::embedding(h, rows), "gen_head");
}

Tensor DualHeadModel::gen_logits(const Tensor& h) const { return linear(h, "gen_head"); }

Tensor pick_log_probs(const Tensor& logits, std::span<const int> targets) {
  const std::size_t R = logits.rows();
  const std::size_t V = logits.cols();
  if (targets.size() != R) throw ModelError("pick_log_probs: one target per row required");
  std::vector<double> onehot(R * V, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= V) {
      throw ModelError("pick_log_probs: target id out of range");
    }
    onehot[r * V + static_cast<std::size_t>(targets[r])] = 1.0;
  }
  const Tensor picked = num::matmul(num::mul(num::softmax_rows(logits), Tensor::from({R, V}, std::move(onehot))),
                                    Tensor::full({V, 1}, 1.0));
  return num::log(picked);
}

namespace {

struct TargetRows {
  std::vector<int> rows;     // hidden rows that predict each target token
  std::vector<int> targets;  // the token ids they predict
  std::vector<std::size_t> owner;
};

TargetRows target_rows(const Batch& batch) {
  TargetRows out;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    for (std::size_t t = batch.target_begin[b]; t < batch.target_end[b]; ++t) {
      out.rows.push_back(static_cast<int>(b * batch.seq_len + t - 1));
      out.targets.push_back(batch.token_ids[b * batch.seq_len + t]);
      out.owner.push_back(b);
    }
  }
  return out;
}

}  // namespace

Tensor DualHeadModel::gen_loss(const Tensor& h, const Batch& batch) const {
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    if (batch.target_end[b] == batch.target_begin[b]) {
      throw ModelError("gen_loss: sample " + std::to_string(b) + " has an empty target span");
    }
  }
  const TargetRows tr = target_rows(batch);
  const Tensor lp = pick_log_probs(gen_logits(h, tr.rows), tr.targets);
  std::vector<double> w(tr.rows.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::size_t b = tr.owner[i];
    const double span = static_cast<double>(batch.target_end[b] - batch.target_begin[b]);
    w[i] = -1.0 / (span * static_cast<double>(batch.batch_size));
  }
  const std::size_t n = w.size();
  return num::sum(num::mul(lp, Tensor::from({n, 1}, std::move(w))));
}

Tensor DualHeadModel::cls_logits(const Tensor& h, const Batch& batch) const {
  std::vector<int> rows;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    if (batch.is_pad(b, batch.last_index[b])) {
      throw ModelError("cls_forward: last_index of sample " + std::to_string(b) + " is a PAD position");
    }
    rows.push_back(static_cast<int>(b * batch.seq_len + batch.last_index[b]));
  }
  Tensor hidden = linear(num::embedding(h, rows), "cls_head.l1");
  hidden = config_.cls_activation == Activation::relu ? num::relu(hidden) : num::sigmoid(hidden);
  return linear(hidden, "cls_head.l2");
}

Tensor DualHeadModel::cls_probs(const Tensor& logits) const {
  return config_.multi_label ? num::sigmoid(logits) : num::softmax_rows(logits);
}

Tensor DualHeadModel::cls_loss(const Tensor& logits, const Batch& batch) const {
  if (!batch.has_class_targets()) throw ModelError("cls_loss: batch has no class targets");
  const std::size_t B = logits.rows();
  const std::size_t C = logits.cols();
  if (batch.class_targets.size() != B * C) throw ModelError("cls_loss: target shape mismatch");
  if (config_.multi_label) {
    const Tensor y = Tensor::from({B, C}, batch.class_targets);
    std::vector<double> not_y(B * C);
    for (std::size_t i = 0; i < not_y.size(); ++i) not_y[i] = 1.0 - batch.class_targets[i];
    const Tensor pos = num::mul(y, num::log(num::sigmoid(logits)));
    const Tensor neg = num::mul(Tensor::from({B, C}, std::move(not_y)),
                                num::log(num::sigmoid(num::scale(logits, -1.0))));
    return num::scale(num::mean(num::add(pos, neg)), -1.0);
  }
  std::vector<int> targets(B);
  for (std::size_t b = 0; b < B; ++b) {
    int hot = -1;
    for (std::size_t c = 0; c < C; ++c) {
      const double v = batch.class_targets[b * C + c];
      if (v == 1.0 && hot < 0) {
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        hot = -2;
        break;
      }
    }
    if (hot < 0) throw ModelError("cls_loss: single-label target is not one-hot");
    targets[b] = hot;
  }
  return num::scale(num::mean(pick_log_probs(logits, targets)), -1.0);
}

Tensor DualHeadModel::pooled(const Tensor& h, const Batch& batch) const {
  const std::size_t B = batch.batch_size;
  const std::size_t L = batch.seq_len;
  std::vector<double> m(B * B * L, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double w = 1.0 / static_cast<double>(batch.lengths[b]);
    for (std::size_t t = 0; t < batch.lengths[b]; ++t) m[b * B * L + b * L + t] = w;
  }
  return num::matmul(Tensor::from({B, B * L}, std::move(m)), h);
}

Tensor DualHeadModel::baseline_logits(const Tensor& h, const Batch& batch) const {
  if (!config_.baseline_head) throw ModelError("baseline_forward: model has no baseline head");
  return linear(pooled(h, batch), "baseline_head");
}

Losses DualHeadModel::total_loss(const Batch& batch, HeadMode mode, const ForwardOptions& opt) const {
  if (mode != HeadMode::cls_only && !batch.has_targets()) {
    throw ModelError("total_loss: mode " + std::string(head_mode_name(mode)) + " needs target text");
  }
  if (mode != HeadMode::gen_only && !batch.has_class_targets()) {
    throw ModelError("total_loss: mode " + std::string(head_mode_name(mode)) + " needs class targets");
  }
  const Tensor h = encode(batch, opt);
  Losses out;
  if (mode != HeadMode::cls_only) out.gen = gen_loss(h, batch);
  if (mode != HeadMode::gen_only) out.cls = cls_loss(cls_logits(h, batch), batch);
  if (mode == HeadMode::dual) {
    out.total = num::add(out.gen, out.cls);
  } else {
    out.total = mode == HeadMode::gen_only ? out.gen : out.cls;
  }
  return out;
}

Tensor DualHeadModel::baseline_loss(const Batch& batch, const ForwardOptions& opt) const {
  const Tensor h = encode(batch, opt);
  return cls_loss(baseline_logits(h, batch), batch);
}

std::vector<double> DualHeadModel::sequence_log_probs(const Batch& batch) const {
  num::NoGradGuard guard;
  return sequence_log_probs(encode(batch), batch);
}

std::vector<double> DualHeadModel::sequence_log_probs(const Tensor& h, const Batch& batch) const {
  num::NoGradGuard guard;
  std::vector<double> out(batch.batch_size, 0.0);
  const TargetRows tr = target_rows(batch);
  if (tr.rows.empty()) return out;
  const Tensor lp = pick_log_probs(gen_logits(h, tr.rows), tr.targets);
  for (std::size_t i = 0; i < tr.rows.size(); ++i) out[tr.owner[i]] += lp.data()[i];
  return out;
}

}  // namespace kid::model
