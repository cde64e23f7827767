// SPDX-License-Identifier: Apache-2.0
//
// Ablation harness: one model per (cell, seed), everything else fixed.
// Cells vary the knowledge count N, the knowledge format and the training
// mode; summaries carry mean, sd and paired t-tests against the N=0,
// gen_only and appended cells that share the other axes.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/eval/metrics.hpp"
#include "kid/eval/report.hpp"
#include "kid/provider/provider.hpp"
#include "kid/train/train.hpp"

namespace kid::eval {

class AblationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The knowledge provider failed while augmenting a split.
class AblationProviderError : public AblationError {
 public:
  using AblationError::AblationError;
};

// Mode names: gen_only, cls_only, dual, baseline, and dual+knowledge (dual
// training that requires N >= 1).
struct Cell {
  std::size_t n = 0;
  knowledge::Format format = knowledge::Format::inlined;
  std::string mode = "dual";

  std::string key() const;  // "n=1,format=inline,mode=dual"
  train::TrainMode train_mode() const;
  void validate() const;
  bool operator==(const Cell&) const = default;
};

struct Axes {
  std::vector<std::size_t> n{0};
  std::vector<knowledge::Format> format{knowledge::Format::inlined};
  std::vector<std::string> mode{"dual"};
};

// Parses "n=0..5", "n=0,2,5", "format=inline,appended", "mode=gen_only,dual"
// into `axes`, replacing that axis.
void apply_axis(Axes& axes, const std::string& spec);
std::vector<Cell> cartesian(const Axes& axes);

struct GridSpec {
  std::vector<Cell> cells;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string metric = "accuracy";  // accuracy | macro_f1 | auc | primary
  train::TrainConfig base;          // mode, knowledge_n, format and seed come from the cell
  nlohmann::json model;             // architecture overrides, see train::model_config_for
  double max_failure_rate = 0.05;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct AblationData {
  std::vector<data::MemeSample> train, val, test;
  data::TaskSpec task;
};

struct RunResult {
  Cell cell;
  std::uint64_t seed = 0;
  MetricReport test;
  double value = 0.0;  // the grid metric read from `test`
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
};

struct Comparison {
  std::string reference;  // key of the reference cell
  TTest test;
};

struct CellSummary {
  Cell cell;
  std::vector<double> values;  // in seed order
  double mean = 0.0;
  double sd = 0.0;  // sample sd; 0 for a single seed
  std::vector<Comparison> vs_reference;
};

struct AblationGrid {
  GridSpec spec;
  std::vector<RunResult> runs;
  std::vector<CellSummary> cells;

  const CellSummary& at(const Cell& c) const;
  // n,format,mode,seed,metric,value; per cell one row per seed, then a
  // "mean" row.
  std::string to_csv() const;
  // format,mode,n,mean,sd sorted by N within each (format, mode) curve.
  std::string plot_csv() const;
  nlohmann::ordered_json to_json(bool with_timing = false) const;
};

using RunHook = std::function<void(const RunResult&)>;

double metric_value(const MetricReport& r, const std::string& metric);

// Summaries and comparisons from finished runs (used by run_ablation and
// when merging runs from several processes).
AblationGrid summarize(const GridSpec& spec, std::vector<RunResult> runs);

// Augments the splits once per distinct N through `provider`, then trains
// and tests every (cell, seed). Failures are rethrown as AblationError
// naming the cell and seed.
AblationGrid run_ablation(const GridSpec& spec, const AblationData& data, provider::Provider& provider,
                          const RunHook& on_run = nullptr);

}  // namespace kid::eval
