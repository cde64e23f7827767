// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/infer/infer.hpp"

namespace kid::eval {

// Which output the metrics read: the classifier decision, or the label of
// the best semantic rendering (gen-only models).
enum class Source { classifier, semantic };

struct MetricReport {
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc;  // binary tasks with both classes present
  std::optional<double> heads_agreement;
  Source source = Source::classifier;

  // AUC for binary tasks, macro-F1 otherwise.
  double primary() const;
  std::string primary_name() const;
  nlohmann::ordered_json to_json() const;
};

MetricReport score_predictions(const std::vector<infer::Prediction>& preds, const std::vector<data::MemeSample>& gold,
                               const data::TaskSpec& task, Source source);

}  // namespace kid::eval
