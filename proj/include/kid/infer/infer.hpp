// SPDX-License-Identifier: Apache-2.0
//
// Two-step prediction: obtain the augmented description (provider, or the
// sample's stored aug_text), then one scoring pass per candidate rendering.
// The decision always comes from the classifier probabilities; the
// semantic head's label is reported beside it.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/data/task.hpp"
#include "kid/infer/templates.hpp"
#include "kid/knowledge/format.hpp"
#include "kid/model/model.hpp"
#include "kid/provider/provider.hpp"

namespace kid::infer {

struct InputOptions {
  std::size_t n = 0;  // knowledge items kept from aug_text
  knowledge::Format format = knowledge::Format::inlined;
  std::size_t max_len = 512;

  nlohmann::ordered_json to_json() const;
};

// Longest target the task can render; the description budget reserves it
// so the prompt is the same for every candidate and for training.
std::size_t target_reserve(const data::TaskSpec& task);

// Description the model sees: aug_text cut to n items, rendered in
// `format` and fitted to `budget` bytes. Missing aug_text gives "".
std::string model_description(const std::optional<std::string>& aug_text, const InputOptions& opt,
                              std::size_t budget);

// Model input for a sample. With `with_targets` the gold rendering and
// class vector are attached. Over-long captions are cut at a UTF-8
// boundary so the reserve still fits.
model::Example make_example(const data::MemeSample& s, const data::TaskSpec& task, const InputOptions& opt,
                            bool with_targets);

enum class Classifier { cls_head, baseline_head };

struct PredictOptions {
  InputOptions input;
  Classifier classifier = Classifier::cls_head;
  bool semantic = true;  // score candidate renderings with the generation head
  std::size_t batch_size = 32;
};

struct Prediction {
  std::string id;
  std::vector<double> probs;  // classifier confidences per label
  LabelSet decided;
  LabelSet semantic;          // labels of the best-scoring rendering
  std::string semantic_text;
  std::vector<double> semantic_probs;  // softmax over candidate scores (single-label)
  bool heads_agree = false;
  std::size_t items_used = 0;

  nlohmann::ordered_json to_json(const data::TaskSpec& task) const;
};

// argmax for single-label tasks (first index on ties), threshold for
// multi-label.
LabelSet decide(const data::TaskSpec& task, const std::vector<double>& probs, double threshold);

struct SemanticScores {
  LabelSet labels;
  std::string text;
  std::vector<double> scores;  // one per rendering in candidates(task)
  double none_score = 0.0;     // containment reference, multi-label only
};

// Picks the best rendering; for large multi-label tasks includes each
// label whose singleton outscores "Categories: none".
SemanticScores choose_semantic(const data::TaskSpec& task, const std::vector<Candidate>& cands,
                               const std::vector<double>& scores, std::optional<double> none_score);

// Scores every rendering for one prompt example (its target is ignored).
SemanticScores decode_semantic(const model::DualHeadModel& model, const model::Example& prompt,
                               const data::TaskSpec& task);

// Batched predictions over samples whose aug_text is already filled.
std::vector<Prediction> predict_all(const model::DualHeadModel& model, const std::vector<data::MemeSample>& samples,
                                    const data::TaskSpec& task, const PredictOptions& opt);

// Step one through the provider (skipped for n = 0), then step two.
// Provider failures are rethrown with the sample id.
Prediction predict(const model::DualHeadModel& model, const data::MemeSample& sample, const data::TaskSpec& task,
                   provider::Provider* provider, const PredictOptions& opt);

// Fraction of predictions whose semantic labels equal the decision; throws
// InferError on an empty list.
double heads_agreement(const std::vector<Prediction>& predictions);

class InferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kid::infer
