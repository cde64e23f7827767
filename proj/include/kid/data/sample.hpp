// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/image.hpp"
#include "kid/data/task.hpp"

namespace kid::data {

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct MemeSample {
  std::string id;
  Image image;
  // Set when the image came from a file; written back verbatim.
  std::optional<std::string> image_path;
  std::string text;
  // Canonical knowledge-format string.
  std::optional<std::string> aug_text;
  std::vector<std::string> labels;
  // Whether `label` is a JSON array (multi-label) rather than a string.
  bool label_is_list = false;
  Split split = Split::train;
  // Fields this schema does not know, kept for round trips.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  bool operator==(const MemeSample&) const = default;
};

// Checks labels against `task` and image extents; throws SchemaError.
void validate_sample(const MemeSample& s, const TaskSpec& task);

// Image paths are resolved against `base_dir`.
MemeSample sample_from_json(const nlohmann::ordered_json& j, const TaskSpec& task,
                            const std::filesystem::path& base_dir);
nlohmann::ordered_json sample_to_json(const MemeSample& s);

// Errors carry "<path>:<line>: ..." prefixes.
std::vector<MemeSample> load_jsonl(const std::filesystem::path& path, const TaskSpec& task);
void write_jsonl(const std::vector<MemeSample>& samples, const std::filesystem::path& path);

std::vector<MemeSample> filter_split(const std::vector<MemeSample>& samples, Split split);

// Multi-hot (multi-label) or one-hot target over task.labels.
std::vector<double> target_vector(const MemeSample& s, const TaskSpec& task);

}  // namespace kid::data
