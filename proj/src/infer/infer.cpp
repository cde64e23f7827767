// SPDX-License-Identifier: Apache-2.0
#include "kid/infer/infer.hpp"

#include <algorithm>
#include <cmath>

#include "kid/data/fit.hpp"
#include "kid/data/tokenizer.hpp"

namespace kid::infer {

namespace kf = knowledge;
using model::Batch;
using model::Example;
using num::Tensor;

namespace {

constexpr std::string_view kNoneRendering = "Categories: none";

// Reference rendering scored for the containment rule.
bool needs_none_reference(const data::TaskSpec& task) { return uses_containment(task) && !task.allow_empty; }

}  // namespace

nlohmann::ordered_json InputOptions::to_json() const {
  return {{"n", n}, {"format", kf::format_name(format)}, {"max_len", max_len}};
}

std::size_t target_reserve(const data::TaskSpec& task) {
  std::size_t longest = kNoneRendering.size();
  for (const auto& c : candidates(task)) longest = std::max(longest, c.text.size());
  return longest;
}

std::string model_description(const std::optional<std::string>& aug_text, const InputOptions& opt,
                              std::size_t budget) {
  if (!aug_text) return "";
  const kf::AugmentedText t = kf::convert(kf::truncate_to_n(kf::parse(*aug_text), opt.n), opt.format);
  return data::fit_description(t, opt.format, budget);
}

Example make_example(const data::MemeSample& s, const data::TaskSpec& task, const InputOptions& opt,
                     bool with_targets) {
  Example ex;
  ex.patches = data::patchify(s.image);
  std::optional<std::string> target;
  std::size_t reserve = target_reserve(task);
  if (with_targets) {
    target = render(task, label_set_of(task, s.labels));
    reserve = std::max(reserve, target->size());
  }
  // Fixed tokens: prefix, two SEPs, EOS.
  const std::size_t fixed = model::kPrefixLen + 3;
  if (fixed + reserve >= opt.max_len) throw data::SequenceOverflow("make_example: max_len too small for targets");
  const std::size_t text_room = opt.max_len - fixed - reserve;
  ex.text = s.text.substr(0, data::utf8_prefix(s.text, text_room));
  ex.description = model_description(s.aug_text, opt, model::description_budget(ex.text.size(), reserve, true,
                                                                                 opt.max_len));
  ex.target = std::move(target);
  if (with_targets) ex.class_target = data::target_vector(s, task);
  return ex;
}

LabelSet decide(const data::TaskSpec& task, const std::vector<double>& probs, double threshold) {
  if (probs.size() != task.n_classes()) throw InferError("decide: probability vector has wrong length");
  LabelSet out;
  if (task.is_multi_label()) {
    for (std::size_t c = 0; c < probs.size(); ++c)
      if (probs[c] >= threshold) out.push_back(c);
    return out;
  }
  out.push_back(static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
  return out;
}

SemanticScores choose_semantic(const data::TaskSpec& task, const std::vector<Candidate>& cands,
                               const std::vector<double>& scores, std::optional<double> none_score) {
  if (cands.empty()) throw InferError("decode_semantic: no renderings registered for task '" + task.name + "'");
  SemanticScores out;
  out.scores = scores;
  if (uses_containment(task)) {
    // Singletons (and "none" when allowed) were scored; keep every label
    // that beats the empty rendering.
    double none = 0.0;
    if (task.allow_empty) {
      none = scores[0];
    } else {
      if (!none_score) throw InferError("decode_semantic: containment needs the none reference score");
      none = *none_score;
    }
    out.none_score = none;
    std::size_t best = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].labels.size() != 1) continue;
      if (scores[i] > none) out.labels.push_back(cands[i].labels[0]);
      if (best == cands.size() || scores[i] > scores[best]) best = i;
    }
    if (out.labels.empty() && !task.allow_empty) out.labels = cands[best].labels;
    std::sort(out.labels.begin(), out.labels.end());
    out.text = out.labels.empty() ? std::string(kNoneRendering) : render(task, out.labels);
    return out;
  }
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  out.labels = cands[best].labels;
  out.text = cands[best].text;
  return out;
}

namespace {

struct Scored {
  std::vector<double> probs;
  SemanticScores semantic;
};

// Runs every (prompt, rendering) pair through the model in chunks. The
// classifier reads the prompt's last position, so any one rendering's
// forward pass provides its probabilities.
std::vector<Scored> score_examples(const model::DualHeadModel& model, const std::vector<Example>& prompts,
                                   const data::TaskSpec& task, const PredictOptions& opt) {
  num::NoGradGuard guard;
  if (opt.semantic && opt.classifier == Classifier::baseline_head) {
    // The pooled head averages every position, rendered targets included.
    throw InferError("predict: the baseline head cannot share a pass with semantic scoring");
  }
  const auto cands = candidates(task);
  std::vector<std::string> renderings;
  for (const auto& c : cands) renderings.push_back(c.text);
  const bool reference = needs_none_reference(task);
  if (reference) renderings.emplace_back(kNoneRendering);
  const std::size_t per = opt.semantic ? renderings.size() : 1;

  struct Job {
    std::size_t prompt;
    std::size_t rendering;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < prompts.size(); ++p)
    for (std::size_t r = 0; r < per; ++r) jobs.push_back({p, r});

  std::vector<std::vector<double>> seq(prompts.size(), std::vector<double>(per, 0.0));
  std::vector<Scored> out(prompts.size());
  const std::size_t chunk = std::max<std::size_t>(1, opt.batch_size);
  for (std::size_t begin = 0; begin < jobs.size(); begin += chunk) {
    const std::size_t end = std::min(jobs.size(), begin + chunk);
    std::vector<Example> batch_examples;
    for (std::size_t j = begin; j < end; ++j) {
      Example ex = prompts[jobs[j].prompt];
      ex.target = opt.semantic ? std::optional<std::string>(renderings[jobs[j].rendering]) : std::nullopt;
      ex.class_target.clear();
      batch_examples.push_back(std::move(ex));
    }
    const Batch batch = model::make_batch(batch_examples, opt.input.max_len);
    const Tensor h = model.encode(batch);
    if (opt.semantic) {
      const auto lp = model.sequence_log_probs(h, batch);
      for (std::size_t j = begin; j < end; ++j) seq[jobs[j].prompt][jobs[j].rendering] = lp[j - begin];
    }
    // Classifier probabilities from the first rendering of each prompt.
    std::vector<std::size_t> firsts;
    for (std::size_t j = begin; j < end; ++j)
      if (jobs[j].rendering == 0) firsts.push_back(j - begin);
    if (firsts.empty()) continue;
    const bool baseline = opt.classifier == Classifier::baseline_head;
    const Tensor logits = baseline ? model.baseline_logits(h, batch) : model.cls_logits(h, batch);
    const Tensor probs = model.cls_probs(logits);
    for (std::size_t r : firsts) {
      const std::size_t p = jobs[begin + r].prompt;
      out[p].probs.assign(probs.data().begin() + static_cast<std::ptrdiff_t>(r * probs.cols()),
                          probs.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * probs.cols()));
    }
  }
  if (opt.semantic) {
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      std::vector<double> scores(seq[p].begin(), seq[p].begin() + static_cast<std::ptrdiff_t>(cands.size()));
      std::optional<double> none;
      if (reference) none = seq[p].back();
      out[p].semantic = choose_semantic(task, cands, scores, none);
    }
  }
  return out;
}

Prediction assemble(const data::MemeSample& s, const Example& prompt, const data::TaskSpec& task,
                    const model::DualHeadModel& model, const PredictOptions& opt, Scored scored) {
  Prediction p;
  p.id = s.id;
  p.probs = std::move(scored.probs);
  p.decided = decide(task, p.probs, model.config().decision_threshold);
  p.items_used = kf::parse(prompt.description).item_count();
  if (opt.semantic) {
    p.semantic = scored.semantic.labels;
    p.semantic_text = scored.semantic.text;
    if (!task.is_multi_label()) {
      const auto& sc = scored.semantic.scores;
      const double mx = *std::max_element(sc.begin(), sc.end());
      double z = 0.0;
      for (double v : sc) z += std::exp(v - mx);
      for (double v : sc) p.semantic_probs.push_back(std::exp(v - mx) / z);
    }
    p.heads_agree = p.semantic == p.decided;
  }
  return p;
}

}  // namespace

SemanticScores decode_semantic(const model::DualHeadModel& model, const Example& prompt,
                               const data::TaskSpec& task) {
  PredictOptions opt;
  opt.input.max_len = model.config().max_len;
  return score_examples(model, {prompt}, task, opt).front().semantic;
}

std::vector<Prediction> predict_all(const model::DualHeadModel& model, const std::vector<data::MemeSample>& samples,
                                    const data::TaskSpec& task, const PredictOptions& opt) {
  std::vector<Example> prompts;
  for (const auto& s : samples) prompts.push_back(make_example(s, task, opt.input, false));
  auto scored = score_examples(model, prompts, task, opt);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.push_back(assemble(samples[i], prompts[i], task, model, opt, std::move(scored[i])));
  return out;
}

Prediction predict(const model::DualHeadModel& model, const data::MemeSample& sample, const data::TaskSpec& task,
                   provider::Provider* provider, const PredictOptions& opt) {
  data::MemeSample s = sample;
  if (opt.input.n == 0) {
    // No injection step: the model sees only the plain description, if any.
    if (s.aug_text) s.aug_text = kf::serialize(kf::truncate_to_n(kf::parse(*s.aug_text), 0));
  } else if (provider) {
    try {
      const auto r = provider->augment(provider::make_request(s, opt.input.n));
      s.aug_text = kf::serialize(r.aug_text, kf::Format::inlined);
    } catch (const std::exception& e) {
      throw InferError("predict: sample '" + s.id + "': " + e.what());
    }
  }
  return predict_all(model, {s}, task, opt).front();
}

double heads_agreement(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw InferError("heads_agreement: no predictions");
  std::size_t agree = 0;
  for (const auto& p : predictions) agree += p.semantic == p.decided;
  return static_cast<double>(agree) / static_cast<double>(predictions.size());
}

nlohmann::ordered_json Prediction::to_json(const data::TaskSpec& task) const {
  nlohmann::ordered_json j;
  j["id"] = id;
  nlohmann::ordered_json pj = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < probs.size(); ++c) pj[task.labels[c]] = probs[c];
  j["probs"] = pj;
  if (task.is_multi_label()) {
    j["decided"] = label_names(task, decided);
  } else {
    j["decided"] = task.labels.at(decided.at(0));
  }
  j["semantic_text"] = semantic_text;
  j["heads_agree"] = heads_agree;
  j["items_used"] = items_used;
  return j;
}

}  // namespace kid::infer
