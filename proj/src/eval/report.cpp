// SPDX-License-Identifier: Apache-2.0
#include "kid/eval/report.hpp"

#include "kid/eval/metrics.hpp"

namespace kid::eval {

double MetricReport::primary() const { return auc ? *auc : macro_f1; }

std::string MetricReport::primary_name() const { return auc ? "auc" : "macro_f1"; }

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j = {{"n_samples", n_samples},
                              {"source", source == Source::classifier ? "classifier" : "semantic"},
                              {"accuracy", accuracy},
                              {"macro_f1", macro_f1}};
  if (auc) j["auc"] = *auc;
  if (heads_agreement) j["heads_agreement"] = *heads_agreement;
  return j;
}

MetricReport score_predictions(const std::vector<infer::Prediction>& preds, const std::vector<data::MemeSample>& gold,
                               const data::TaskSpec& task, Source source) {
  if (preds.size() != gold.size()) throw MetricError("score_predictions: prediction count differs from samples");
  if (preds.empty()) throw MetricError("score_predictions: no samples");
  MetricReport r;
  r.n_samples = preds.size();
  r.source = source;
  const bool semantic = source == Source::semantic;
  bool have_semantic = true;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].id != gold[i].id) throw MetricError("score_predictions: order mismatch at " + gold[i].id);
    have_semantic = have_semantic && !preds[i].semantic_text.empty();
  }
  if (semantic && !have_semantic) throw MetricError("score_predictions: predictions carry no semantic labels");

  if (task.is_multi_label()) {
    std::vector<IndexSet> p, g;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p.push_back(semantic ? preds[i].semantic : preds[i].decided);
      g.push_back(infer::label_set_of(task, gold[i].labels));
    }
    r.accuracy = accuracy(p, g);
    r.macro_f1 = macro_f1(p, g, task.n_classes());
  } else {
    std::vector<std::size_t> p, g;
    std::vector<double> scores;
    std::vector<int> pos;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      p.push_back((semantic ? preds[i].semantic : preds[i].decided).at(0));
      g.push_back(task.label_index(gold[i].labels.at(0)));
      if (task.kind == data::TaskKind::binary) {
        scores.push_back(semantic ? preds[i].semantic_probs.at(1) : preds[i].probs.at(1));
        pos.push_back(g.back() == 1);
      }
    }
    r.accuracy = accuracy(p, g);
    r.macro_f1 = macro_f1(p, g, task.n_classes());
    if (task.kind == data::TaskKind::binary) {
      const std::size_t n_pos = static_cast<std::size_t>(std::count(pos.begin(), pos.end(), 1));
      if (n_pos > 0 && n_pos < pos.size()) r.auc = auc(scores, pos);
    }
  }
  if (have_semantic) r.heads_agreement = infer::heads_agreement(preds);
  return r;
}

}  // namespace kid::eval
