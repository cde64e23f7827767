// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kid::data {

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TaskKind { binary, single_label, multi_label };

// Output phrasings for the semantic head.
//   this_meme_is  "This meme is <label>"
//   yes_no        "Yes, this meme is <adj>" / "No, this meme is not <adj>"
//   target        "The target of this hateful meme is <label>"
//   category      "This meme belongs to the category: <label>"
//   categories    "Categories: <l1>, <l2>, ..." (multi-label)
enum class TemplateId { this_meme_is, yes_no, target, category, categories };

std::string_view task_kind_name(TaskKind k);
TaskKind parse_task_kind(std::string_view s);
std::string_view template_name(TemplateId t);
TemplateId parse_template(std::string_view s);

struct TaskSpec {
  std::string name = "task";
  TaskKind kind = TaskKind::binary;
  // For binary tasks labels[1] is the positive class.
  std::vector<std::string> labels;
  TemplateId template_id = TemplateId::this_meme_is;
  // yes_no only: the adjective, e.g. "misogynous".
  std::string template_arg;
  // multi_label only: an empty label set is a valid target ("none").
  bool allow_empty = false;

  std::size_t n_classes() const { return labels.size(); }
  std::size_t label_index(std::string_view label) const;  // throws SchemaError
  bool is_multi_label() const { return kind == TaskKind::multi_label; }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

TaskSpec load_task(const std::string& path);

}  // namespace kid::data
