// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <cstdlib>
#include <set>

#include "kid/eval/ablation.hpp"
#include "kid/eval/metrics.hpp"
#include "kid/knowledge/format.hpp"
#include "kid/model/checkpoint.hpp"
#include "kid/data/tokenizer.hpp"
#include "kid/util/io.hpp"

#ifndef KID_VERSION
#define KID_VERSION "0.0.0"
#endif

namespace kid::cli {

int classify(const std::exception& e) {
  // External services first: the ablation wrapper is also an AblationError.
  if (dynamic_cast<const provider::ProviderError*>(&e) || dynamic_cast<const eval::AblationProviderError*>(&e)) {
    return kExternal;
  }
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const data::SchemaError*>(&e) ||
      dynamic_cast<const knowledge::ParseError*>(&e) || dynamic_cast<const train::TrainError*>(&e) ||
      dynamic_cast<const model::ModelError*>(&e) || dynamic_cast<const model::CheckpointError*>(&e) ||
      dynamic_cast<const infer::TemplateError*>(&e) || dynamic_cast<const infer::InferError*>(&e) ||
      dynamic_cast<const eval::MetricError*>(&e) || dynamic_cast<const eval::AblationError*>(&e) ||
      dynamic_cast<const data::SequenceOverflow*>(&e) || dynamic_cast<const util::IoError*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e)) {
    return kValidation;
  }
  return kInternal;
}

namespace {

std::string resolve(const nlohmann::json& v, const std::string& field, const fs::path& base) {
  if (!v.is_string()) throw UsageError("config: " + field + ": expected a path string");
  const std::string s = v.get<std::string>();
  if (s.empty() || s == "synthetic") return s;
  const fs::path p(s);
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

// Finds the first key whose value the library parser rejects, so the
// error can name it.
[[noreturn]] void blame_train_field(const nlohmann::json& t, const std::exception& original) {
  for (const auto& [k, v] : t.items()) {
    try {
      train::TrainConfig::from_json(nlohmann::json{{k, v}});
    } catch (const std::exception& e) {
      throw UsageError("config: train." + k + ": " + e.what());
    }
  }
  throw UsageError(std::string("config: train: ") + original.what());
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["data"] = {{"train", train_data}, {"val", val_data}, {"test", test_data}};
  j["kb"] = kb;
  j["provider"] = provider;
  j["http"] = {{"attempts", http.attempts},
               {"backoff_ms", http.backoff_ms},
               {"timeout_ms", http.timeout_ms},
               {"max_in_flight", http.max_in_flight}};
  j["cache"] = cache;
  j["train"] = train.to_json();
  j["model"] = nlohmann::ordered_json(model);
  j["ablation"] = {{"axes", axes}, {"seeds", seeds}, {"metric", metric}};
  j["max_failure_rate"] = max_failure_rate;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  static const std::set<std::string> known = {"task", "data",  "kb",       "provider", "http",
                                              "cache", "train", "model",   "ablation", "max_failure_rate"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw UsageError("config: " + k + ": unknown key");

  RunConfig c;
  try {
    if (j.contains("task")) c.task = resolve(j["task"], "task", base_dir);
    if (j.contains("data")) {
      const auto& d = j["data"];
      if (!d.is_object()) throw UsageError("config: data: expected {train, val, test}");
      for (const auto& [k, v] : d.items()) {
        if (k == "train") c.train_data = resolve(v, "data.train", base_dir);
        else if (k == "val") c.val_data = resolve(v, "data.val", base_dir);
        else if (k == "test") c.test_data = resolve(v, "data.test", base_dir);
        else throw UsageError("config: data." + k + ": unknown key");
      }
    }
    if (j.contains("kb")) c.kb = resolve(j["kb"], "kb", base_dir);
    if (j.contains("provider")) {
      if (!j["provider"].is_string()) throw UsageError("config: provider: expected a string");
      c.provider = j["provider"].get<std::string>();
    }
    if (j.contains("http")) {
      const auto& h = j["http"];
      if (!h.is_object()) throw UsageError("config: http: expected an object");
      for (const auto& [k, v] : h.items()) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          throw UsageError("config: http." + k + ": expected a non-negative integer");
        }
        const int x = v.get<int>();
        if (k == "attempts") c.http.attempts = x;
        else if (k == "backoff_ms") c.http.backoff_ms = x;
        else if (k == "timeout_ms") c.http.timeout_ms = x;
        else if (k == "max_in_flight") c.http.max_in_flight = x;
        else throw UsageError("config: http." + k + ": unknown key");
      }
    }
    if (j.contains("cache")) {
      if (!j["cache"].is_boolean()) throw UsageError("config: cache: expected true or false");
      c.cache = j["cache"].get<bool>();
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (!t.is_object()) throw UsageError("config: train: expected an object");
      const auto keys = train::TrainConfig{}.to_json();
      for (const auto& [k, v] : t.items())
        if (!keys.contains(k)) throw UsageError("config: train." + k + ": unknown key");
      try {
        c.train = train::TrainConfig::from_json(t);
      } catch (const std::exception& e) {
        blame_train_field(t, e);
      }
    }
    if (j.contains("model")) {
      if (!j["model"].is_object()) throw UsageError("config: model: expected an object");
      c.model = j["model"];
    }
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      if (!a.is_object()) throw UsageError("config: ablation: expected an object");
      for (const auto& [k, v] : a.items()) {
        if (k == "axes") {
          c.axes = v.get<std::vector<std::string>>();
        } else if (k == "seeds") {
          c.seeds = v.get<std::vector<std::uint64_t>>();
        } else if (k == "metric") {
          c.metric = v.get<std::string>();
        } else {
          throw UsageError("config: ablation." + k + ": unknown key");
        }
      }
    }
    if (j.contains("max_failure_rate")) {
      if (!j["max_failure_rate"].is_number()) throw UsageError("config: max_failure_rate: expected a number");
      c.max_failure_rate = j["max_failure_rate"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (!(c.max_failure_rate >= 0.0 && c.max_failure_rate <= 1.0)) {
    throw UsageError("config: max_failure_rate: must lie in [0, 1]");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  } catch (const util::IoError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

data::TaskSpec load_task_spec(const std::string& spec) {
  if (spec.empty()) throw UsageError("task: no task given (--task or config 'task')");
  if (spec == "synthetic") return data::synthetic_task();
  if (!fs::exists(spec)) throw UsageError("task: no such file '" + spec + "'");
  return data::load_task(spec);
}

std::vector<data::MemeSample> load_split(const std::string& field, const std::string& path,
                                         const data::TaskSpec& task) {
  if (path.empty()) throw UsageError(field + ": no dataset given");
  if (!fs::exists(path)) throw UsageError(field + ": no such file '" + path + "'");
  return data::load_jsonl(path, task);
}

std::shared_ptr<const data::KnowledgeBase> load_kb(const std::string& path) {
  if (path.empty()) return nullptr;
  if (!fs::exists(path)) throw UsageError("kb: no such file '" + path + "'");
  return std::make_shared<const data::KnowledgeBase>(data::KnowledgeBase::load(path));
}

fs::path cache_dir() {
  if (const char* d = std::getenv("KID_CACHE_DIR"); d && *d) return d;
  if (const char* h = std::getenv("HOME"); h && *h) return fs::path(h) / ".cache" / "kid";
  return ".kid_cache";
}

std::unique_ptr<provider::Provider> open_provider(const RunConfig& cfg) {
  std::string spec = cfg.provider;
  if (spec.empty()) throw UsageError("provider: empty spec");
  std::shared_ptr<const data::KnowledgeBase> kb;
  if (spec.find("oracle") != std::string::npos) {
    if (cfg.kb.empty()) throw UsageError("provider: the oracle needs a knowledge base (--kb or config 'kb')");
    kb = load_kb(cfg.kb);
  }
  if (cfg.cache && spec.rfind("http:", 0) == 0) {
    const fs::path dir = cache_dir();
    ensure_dir(dir);
    spec = "cache:" + (dir / "teacher.jsonl").string() + "+" + spec;
  }
  try {
    return provider::make_provider(spec, kb, cfg.http);
  } catch (const provider::ProviderError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("provider: ") + e.what());
  }
}

nlohmann::ordered_json provenance(const std::string& command, const nlohmann::ordered_json& config,
                                  std::uint64_t seed, const std::vector<std::string>& inputs) {
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& p : inputs) {
    if (p.empty() || p == "synthetic" || !fs::is_regular_file(p)) continue;
    in[p] = util::hex64(util::fnv1a64(util::read_file(p)));
  }
  return {{"tool", "kid"}, {"version", KID_VERSION}, {"command", command},
          {"config", config},  {"seed", seed},          {"inputs", in}};
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  util::atomic_write(path, j.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create directory '" + dir.string() + "'");
}

}  // namespace kid::cli
