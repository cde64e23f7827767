// SPDX-License-Identifier: Apache-2.0
#include "kid/data/task.hpp"

#include <algorithm>
#include <set>

#include "kid/util/io.hpp"

namespace kid::data {

std::string_view task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::binary: return "binary";
    case TaskKind::single_label: return "single_label";
    case TaskKind::multi_label: return "multi_label";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "single_label") return TaskKind::single_label;
  if (s == "multi_label") return TaskKind::multi_label;
  throw SchemaError("task.kind: unknown value '" + std::string(s) + "'");
}

std::string_view template_name(TemplateId t) {
  switch (t) {
    case TemplateId::this_meme_is: return "this_meme_is";
    case TemplateId::yes_no: return "yes_no";
    case TemplateId::target: return "target";
    case TemplateId::category: return "category";
    case TemplateId::categories: return "categories";
  }
  return "?";
}

TemplateId parse_template(std::string_view s) {
  for (auto t : {TemplateId::this_meme_is, TemplateId::yes_no, TemplateId::target,
                 TemplateId::category, TemplateId::categories}) {
    if (template_name(t) == s) return t;
  }
  throw SchemaError("task.template: unknown value '" + std::string(s) + "'");
}

std::size_t TaskSpec::label_index(std::string_view label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw SchemaError("label '" + std::string(label) + "' is not in task '" + name + "'");
  }
  return static_cast<std::size_t>(it - labels.begin());
}

void TaskSpec::validate() const {
  if (labels.empty()) throw SchemaError("task.labels: must be non-empty");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw SchemaError("task.labels: empty label");
    if (!seen.insert(l).second) throw SchemaError("task.labels: duplicate label '" + l + "'");
    if (template_id == TemplateId::categories && (l.find(", ") != std::string::npos || l == "none")) {
      throw SchemaError("task.labels: '" + l + "' is not renderable in a category list");
    }
  }
  if (kind == TaskKind::binary && labels.size() != 2) {
    throw SchemaError("task.labels: binary task needs exactly 2 labels");
  }
  const bool list_template = template_id == TemplateId::categories;
  if (list_template != (kind == TaskKind::multi_label)) {
    throw SchemaError("task.template: '" + std::string(template_name(template_id)) +
                      "' does not fit a " + std::string(task_kind_name(kind)) + " task");
  }
  if (template_id == TemplateId::yes_no) {
    if (kind != TaskKind::binary) throw SchemaError("task.template: yes_no needs a binary task");
    if (template_arg.empty()) throw SchemaError("task.template_arg: yes_no needs an adjective");
  }
  if (template_id == TemplateId::this_meme_is && kind != TaskKind::binary) {
    throw SchemaError("task.template: this_meme_is needs a binary task");
  }
  if (allow_empty && kind != TaskKind::multi_label) {
    throw SchemaError("task.allow_empty: only meaningful for multi_label tasks");
  }
}

nlohmann::ordered_json TaskSpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["kind"] = task_kind_name(kind);
  j["labels"] = labels;
  j["template"] = template_name(template_id);
  if (!template_arg.empty()) j["template_arg"] = template_arg;
  if (allow_empty) j["allow_empty"] = true;
  return j;
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("task: expected a JSON object");
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw SchemaError(std::string("task.") + key + ": missing");
    return j.at(key);
  };
  TaskSpec t;
  try {
    t.name = j.value("name", std::string("task"));
    t.kind = parse_task_kind(need("kind").get<std::string>());
    t.labels = need("labels").get<std::vector<std::string>>();
    t.template_id = parse_template(need("template").get<std::string>());
    t.template_arg = j.value("template_arg", std::string());
    t.allow_empty = j.value("allow_empty", false);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("task: ") + e.what());
  }
  t.validate();
  return t;
}

TaskSpec load_task(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return TaskSpec::from_json(j);
}

}  // namespace kid::data
