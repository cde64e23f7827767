// SPDX-License-Identifier: Apache-2.0
#include "kid/eval/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace kid::eval {

namespace kf = knowledge;

namespace {

constexpr const char* kModes[] = {"gen_only", "cls_only", "dual", "baseline", "dual+knowledge"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    out.push_back(s.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::size_t parse_count(const std::string& s, const std::string& spec) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw AblationError("axis '" + spec + "': '" + s + "' is not a non-negative integer");
  }
  return std::stoul(s);
}

}  // namespace

std::string Cell::key() const {
  return "n=" + std::to_string(n) + ",format=" + std::string(kf::format_name(format)) + ",mode=" + mode;
}

train::TrainMode Cell::train_mode() const {
  if (mode == "dual+knowledge") return train::TrainMode::dual;
  try {
    return train::parse_train_mode(mode);
  } catch (const train::TrainError& e) {
    throw AblationError(std::string("cell ") + key() + ": " + e.what());
  }
}

void Cell::validate() const {
  if (std::find(std::begin(kModes), std::end(kModes), mode) == std::end(kModes)) {
    throw AblationError("cell " + key() + ": unknown mode (gen_only | cls_only | dual | baseline | dual+knowledge)");
  }
  if (mode == "dual+knowledge" && n == 0) throw AblationError("cell " + key() + ": dual+knowledge needs N >= 1");
}

void apply_axis(Axes& axes, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw AblationError("axis '" + spec + "': expected name=values");
  const std::string name = spec.substr(0, eq);
  const std::string values = spec.substr(eq + 1);
  if (name == "n") {
    std::vector<std::size_t> ns;
    if (const auto dots = values.find(".."); dots != std::string::npos) {
      const std::size_t lo = parse_count(values.substr(0, dots), spec);
      const std::size_t hi = parse_count(values.substr(dots + 2), spec);
      if (hi < lo) throw AblationError("axis '" + spec + "': empty range");
      for (std::size_t v = lo; v <= hi; ++v) ns.push_back(v);
    } else {
      for (const auto& v : split_list(values)) ns.push_back(parse_count(v, spec));
    }
    axes.n = ns;
  } else if (name == "format") {
    std::vector<kf::Format> fs;
    for (const auto& v : split_list(values)) {
      try {
        fs.push_back(kf::parse_format(v));
      } catch (const std::exception&) {
        throw AblationError("axis '" + spec + "': unknown format '" + v + "' (inline | appended)");
      }
    }
    axes.format = fs;
  } else if (name == "mode") {
    axes.mode = split_list(values);
    for (const auto& m : axes.mode) Cell{1, kf::Format::inlined, m}.validate();
  } else {
    throw AblationError("axis '" + spec + "': unknown axis (n | format | mode)");
  }
}

std::vector<Cell> cartesian(const Axes& axes) {
  std::vector<Cell> out;
  for (const auto& m : axes.mode)
    for (auto f : axes.format)
      for (auto n : axes.n) out.push_back({n, f, m});
  return out;
}

void GridSpec::validate() const {
  if (cells.empty()) throw AblationError("ablation: no cells");
  if (seeds.empty()) throw AblationError("ablation: no seeds");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (cells[i] == cells[j]) throw AblationError("ablation: cell " + cells[i].key() + " listed twice");
  }
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (seeds[i] == seeds[j]) throw AblationError("ablation: seed " + std::to_string(seeds[i]) + " listed twice");
  if (metric != "accuracy" && metric != "macro_f1" && metric != "auc" && metric != "primary") {
    throw AblationError("ablation: unknown metric '" + metric + "' (accuracy | macro_f1 | auc | primary)");
  }
  try {
    base.validate();
    data::TaskSpec any;  // overrides never touch the class count
    any.labels = {"a", "b"};
    train::model_config_for(any, base.mode, base.max_len, model);
  } catch (const train::TrainError& e) {
    throw AblationError(std::string("ablation: ") + e.what());
  }
}

nlohmann::ordered_json GridSpec::to_json() const {
  nlohmann::ordered_json cs = nlohmann::ordered_json::array();
  for (const auto& c : cells) cs.push_back({{"n", c.n}, {"format", kf::format_name(c.format)}, {"mode", c.mode}});
  return {{"cells", cs},
          {"seeds", seeds},
          {"metric", metric},
          {"base", base.to_json()},
          {"model", model.is_null() ? nlohmann::ordered_json::object() : nlohmann::ordered_json(model)},
          {"max_failure_rate", max_failure_rate}};
}

double metric_value(const MetricReport& r, const std::string& metric) {
  if (metric == "accuracy") return r.accuracy;
  if (metric == "macro_f1") return r.macro_f1;
  if (metric == "primary") return r.primary();
  if (metric == "auc") {
    if (!r.auc) throw AblationError("ablation: metric 'auc' is not defined for this task or split");
    return *r.auc;
  }
  throw AblationError("ablation: unknown metric '" + metric + "'");
}

const CellSummary& AblationGrid::at(const Cell& c) const {
  for (const auto& s : cells)
    if (s.cell == c) return s;
  throw AblationError("ablation: no cell " + c.key());
}

AblationGrid summarize(const GridSpec& spec, std::vector<RunResult> runs) {
  AblationGrid g;
  g.spec = spec;
  g.runs = std::move(runs);
  std::map<std::string, const RunResult*> by_key;
  for (const auto& r : g.runs) by_key[r.cell.key() + "#" + std::to_string(r.seed)] = &r;
  for (const auto& c : spec.cells) {
    CellSummary s;
    s.cell = c;
    for (auto seed : spec.seeds) {
      const auto it = by_key.find(c.key() + "#" + std::to_string(seed));
      if (it == by_key.end()) {
        throw AblationError("ablation: cell " + c.key() + " has no run for seed " + std::to_string(seed));
      }
      s.values.push_back(it->second->value);
    }
    const double k = static_cast<double>(s.values.size());
    s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / k;
    if (s.values.size() > 1) {
      double ss = 0.0;
      for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
      s.sd = std::sqrt(ss / (k - 1.0));
    }
    g.cells.push_back(std::move(s));
  }
  // References share every other axis with the cell.
  for (auto& s : g.cells) {
    if (s.values.size() < 2) continue;
    std::vector<Cell> refs;
    if (s.cell.n != 0) refs.push_back({0, s.cell.format, s.cell.mode == "dual+knowledge" ? "dual" : s.cell.mode});
    if (s.cell.mode != "gen_only") refs.push_back({s.cell.n, s.cell.format, "gen_only"});
    if (s.cell.format != kf::Format::appended) refs.push_back({s.cell.n, kf::Format::appended, s.cell.mode});
    for (const auto& r : refs) {
      for (const auto& other : g.cells) {
        if (other.cell == r) s.vs_reference.push_back({r.key(), paired_t_test(s.values, other.values)});
      }
    }
  }
  return g;
}

std::string AblationGrid::to_csv() const {
  std::string out = "n,format,mode,seed,metric,value\n";
  for (const auto& s : cells) {
    const std::string axes =
        std::to_string(s.cell.n) + "," + std::string(kf::format_name(s.cell.format)) + "," + s.cell.mode + ",";
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
      out += axes + std::to_string(spec.seeds[i]) + "," + spec.metric + "," + fmt(s.values[i]) + "\n";
    }
    out += axes + "mean," + spec.metric + "," + fmt(s.mean) + "\n";
  }
  return out;
}

std::string AblationGrid::plot_csv() const {
  std::vector<const CellSummary*> order;
  for (const auto& s : cells) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const CellSummary* a, const CellSummary* b) {
    return std::tuple(static_cast<int>(a->cell.format), a->cell.mode, a->cell.n) <
           std::tuple(static_cast<int>(b->cell.format), b->cell.mode, b->cell.n);
  });
  std::string out = "format,mode,n,mean,sd\n";
  for (const auto* s : order) {
    out += std::string(kf::format_name(s->cell.format)) + "," + s->cell.mode + "," + std::to_string(s->cell.n) +
           "," + fmt(s->mean) + "," + fmt(s->sd) + "\n";
  }
  return out;
}

nlohmann::ordered_json AblationGrid::to_json(bool with_timing) const {
  nlohmann::ordered_json cs = nlohmann::ordered_json::array();
  for (const auto& s : cells) {
    nlohmann::ordered_json refs = nlohmann::ordered_json::object();
    for (const auto& c : s.vs_reference) {
      refs[c.reference] = {{"t", std::isfinite(c.test.t) ? nlohmann::ordered_json(c.test.t)
                                                         : nlohmann::ordered_json(c.test.t > 0 ? "inf" : "-inf")},
                           {"p", c.test.p},
                           {"df", c.test.df}};
    }
    nlohmann::ordered_json runs_j = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
      if (!(r.cell == s.cell)) continue;
      nlohmann::ordered_json rj = {{"seed", r.seed},
                                   {"value", r.value},
                                   {"best_epoch", r.best_epoch},
                                   {"epochs_run", r.epochs_run},
                                   {"test", r.test.to_json()}};
      if (with_timing) rj["wall_seconds"] = r.wall_seconds;
      runs_j.push_back(rj);
    }
    cs.push_back({{"key", s.cell.key()},
                  {"n", s.cell.n},
                  {"format", kf::format_name(s.cell.format)},
                  {"mode", s.cell.mode},
                  {"values", s.values},
                  {"mean", s.mean},
                  {"sd", s.sd},
                  {"p_vs_reference", refs},
                  {"runs", runs_j}});
  }
  return {{"metric", spec.metric}, {"seeds", spec.seeds}, {"spec", spec.to_json()}, {"cells", cs}};
}

AblationGrid run_ablation(const GridSpec& spec, const AblationData& data, provider::Provider& provider,
                          const RunHook& on_run) {
  spec.validate();
  // One augmentation per distinct N, shared by every cell that uses it.
  std::map<std::size_t, AblationData> by_n;
  for (const auto& c : spec.cells) {
    if (by_n.count(c.n)) continue;
    std::vector<data::MemeSample> all = data.train;
    all.insert(all.end(), data.val.begin(), data.val.end());
    all.insert(all.end(), data.test.begin(), data.test.end());
    provider::AugmentResult aug;
    try {
      aug = provider::build_augmented_dataset(all, provider, c.n, spec.max_failure_rate);
    } catch (const provider::ProviderError& e) {
      throw AblationProviderError("ablation: augmenting at n=" + std::to_string(c.n) + ": " + e.what());
    } catch (const std::exception& e) {
      throw AblationError("ablation: augmenting at n=" + std::to_string(c.n) + ": " + e.what());
    }
    AblationData d;
    d.task = data.task;
    const auto a = aug.samples.begin();
    const auto nt = static_cast<std::ptrdiff_t>(data.train.size());
    const auto nv = static_cast<std::ptrdiff_t>(data.val.size());
    d.train.assign(a, a + nt);
    d.val.assign(a + nt, a + nt + nv);
    d.test.assign(a + nt + nv, aug.samples.end());
    by_n.emplace(c.n, std::move(d));
  }

  std::vector<RunResult> runs;
  for (const auto& c : spec.cells) {
    const AblationData& d = by_n.at(c.n);
    for (auto seed : spec.seeds) {
      const auto start = std::chrono::steady_clock::now();
      try {
        train::TrainConfig cfg = spec.base;
        cfg.mode = c.train_mode();
        cfg.knowledge_n = c.n;
        cfg.format = c.format;
        cfg.seed = seed;
        model::DualHeadModel m(train::model_config_for(d.task, cfg.mode, cfg.max_len, spec.model), seed);
        const train::TrainLog log = train::train(m, d.train, d.val, d.task, cfg);
        const auto preds = infer::predict_all(m, d.test, d.task, train::predict_options(cfg.mode, cfg.input()));
        RunResult r;
        r.cell = c;
        r.seed = seed;
        r.test = score_predictions(preds, d.test, d.task, train::metric_source(cfg.mode));
        r.value = metric_value(r.test, spec.metric);
        r.best_epoch = log.best_epoch;
        r.epochs_run = log.epochs.size();
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (on_run) on_run(r);
        runs.push_back(std::move(r));
      } catch (const std::exception& e) {
        throw AblationError("ablation: cell " + c.key() + " seed " + std::to_string(seed) + ": " + e.what());
      }
    }
  }
  return summarize(spec, std::move(runs));
}

}  // namespace kid::eval
