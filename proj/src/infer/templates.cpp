// SPDX-License-Identifier: Apache-2.0
#include "kid/infer/templates.hpp"

#include <algorithm>

namespace kid::infer {

using data::TaskSpec;
using data::TemplateId;

namespace {

constexpr std::string_view kThisMemeIs = "This meme is ";
constexpr std::string_view kTarget = "The target of this hateful meme is ";
constexpr std::string_view kCategory = "This meme belongs to the category: ";
constexpr std::string_view kCategories = "Categories: ";
constexpr std::string_view kNone = "none";

bool strip_prefix(std::string_view& s, std::string_view prefix) {
  if (s.substr(0, prefix.size()) != prefix) return false;
  s.remove_prefix(prefix.size());
  return true;
}

std::size_t single(const TaskSpec& task, const LabelSet& labels) {
  if (labels.size() != 1 || labels[0] >= task.n_classes()) {
    throw TemplateError("template '" + std::string(data::template_name(task.template_id)) +
                        "' renders exactly one label");
  }
  return labels[0];
}

[[noreturn]] void no_match(const TaskSpec& task, std::string_view text) {
  throw TemplateError("text '" + std::string(text) + "' matches no rendering of template '" +
                      std::string(data::template_name(task.template_id)) + "'");
}

}  // namespace

std::string render(const TaskSpec& task, const LabelSet& labels) {
  switch (task.template_id) {
    case TemplateId::this_meme_is:
      return std::string(kThisMemeIs) + task.labels[single(task, labels)];
    case TemplateId::yes_no:
      return single(task, labels) == 1 ? "Yes, this meme is " + task.template_arg
                                       : "No, this meme is not " + task.template_arg;
    case TemplateId::target:
      return std::string(kTarget) + task.labels[single(task, labels)];
    case TemplateId::category:
      return std::string(kCategory) + task.labels[single(task, labels)];
    case TemplateId::categories: {
      LabelSet sorted = labels;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw TemplateError("categories: duplicate label");
      }
      if (sorted.empty()) {
        if (!task.allow_empty) throw TemplateError("categories: empty set not allowed by task");
        return std::string(kCategories) + std::string(kNone);
      }
      std::string out(kCategories);
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] >= task.n_classes()) throw TemplateError("categories: label index out of range");
        if (i) out += ", ";
        out += task.labels[sorted[i]];
      }
      return out;
    }
  }
  throw TemplateError("unknown template");
}

LabelSet decode(const TaskSpec& task, std::string_view text) {
  std::string_view rest = text;
  auto exact_label = [&](std::string_view s) -> LabelSet {
    for (std::size_t i = 0; i < task.n_classes(); ++i) {
      if (task.labels[i] == s) return {i};
    }
    no_match(task, text);
  };
  switch (task.template_id) {
    case TemplateId::this_meme_is:
      if (!strip_prefix(rest, kThisMemeIs)) no_match(task, text);
      return exact_label(rest);
    case TemplateId::yes_no:
      if (text == "Yes, this meme is " + task.template_arg) return {1};
      if (text == "No, this meme is not " + task.template_arg) return {0};
      no_match(task, text);
    case TemplateId::target:
      if (!strip_prefix(rest, kTarget)) no_match(task, text);
      return exact_label(rest);
    case TemplateId::category:
      if (!strip_prefix(rest, kCategory)) no_match(task, text);
      return exact_label(rest);
    case TemplateId::categories: {
      if (!strip_prefix(rest, kCategories)) no_match(task, text);
      if (rest == kNone && task.allow_empty) return {};
      LabelSet out;
      while (true) {
        const std::size_t comma = rest.find(", ");
        out.push_back(exact_label(rest.substr(0, comma))[0]);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 2);
      }
      std::sort(out.begin(), out.end());
      if (std::adjacent_find(out.begin(), out.end()) != out.end()) no_match(task, text);
      return out;
    }
  }
  no_match(task, text);
}

bool uses_containment(const TaskSpec& task) {
  return task.template_id == TemplateId::categories && task.n_classes() > kMaxEnumeratedLabels;
}

std::vector<Candidate> candidates(const TaskSpec& task) {
  std::vector<Candidate> out;
  if (task.template_id != TemplateId::categories) {
    for (std::size_t i = 0; i < task.n_classes(); ++i) out.push_back({{i}, render(task, {i})});
    return out;
  }
  if (task.allow_empty) out.push_back({{}, render(task, {})});
  const std::size_t n = task.n_classes();
  const std::size_t max_size = uses_containment(task) ? 1 : std::min(kMaxSubsetSize, n);
  // Subsets in order of size, then lexicographic.
  for (std::size_t k = 1; k <= max_size; ++k) {
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
    do {
      LabelSet s;
      for (std::size_t i = 0; i < n; ++i) {
        if (pick[i]) s.push_back(i);
      }
      out.push_back({s, render(task, s)});
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return out;
}

LabelSet label_set_of(const TaskSpec& task, const std::vector<std::string>& names) {
  LabelSet out;
  for (const auto& n : names) out.push_back(task.label_index(n));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> label_names(const TaskSpec& task, const LabelSet& labels) {
  std::vector<std::string> out;
  for (auto i : labels) out.push_back(task.labels.at(i));
  return out;
}

}  // namespace kid::infer
