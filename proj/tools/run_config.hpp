// SPDX-License-Identifier: Apache-2.0
//
// Run configuration shared by the kid subcommands. A JSON file supplies
// the base values; command-line flags override them field by field.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/data/synthetic.hpp"
#include "kid/provider/provider.hpp"
#include "kid/train/train.hpp"

namespace kid::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kExternal = 2, kInternal = 3 };

// Bad flags, bad config fields, missing inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps the exception in flight to an exit code.
int classify(const std::exception& e);

struct RunConfig {
  std::string task;  // task JSON path, or "synthetic"
  std::string train_data, val_data, test_data;
  std::string kb;  // synthetic knowledge base, needed by the oracle provider
  std::string provider = "oracle";
  provider::HttpOptions http;
  bool cache = true;  // wrap http providers in the on-disk cache
  train::TrainConfig train;
  nlohmann::json model = nlohmann::json::object();
  std::vector<std::string> axes;  // ablation axes, e.g. "n=0..5"
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string metric = "accuracy";
  double max_failure_rate = 0.05;

  // Everything that determines the artifacts; output locations excluded.
  nlohmann::ordered_json to_json() const;
};

// Parses a config file. Relative paths resolve against the file's
// directory. Errors name the offending field, e.g. "train.max_epochs".
RunConfig load_run_config(const fs::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir);

// Loaders that turn library errors into UsageError with the field name.
data::TaskSpec load_task_spec(const std::string& spec);
std::vector<data::MemeSample> load_split(const std::string& field, const std::string& path,
                                         const data::TaskSpec& task);
std::shared_ptr<const data::KnowledgeBase> load_kb(const std::string& path);

// Builds the provider named by cfg.provider. Plain http:<url> specs get a
// cache in $KID_CACHE_DIR (default ~/.cache/kid) unless cfg.cache is off.
std::unique_ptr<provider::Provider> open_provider(const RunConfig& cfg);
fs::path cache_dir();

// {tool, version, command, config, seed, inputs: {path: fnv1a64}}.
nlohmann::ordered_json provenance(const std::string& command, const nlohmann::ordered_json& config,
                                  std::uint64_t seed, const std::vector<std::string>& inputs);

void write_json(const fs::path& path, const nlohmann::ordered_json& j);
void ensure_dir(const fs::path& dir);

}  // namespace kid::cli
