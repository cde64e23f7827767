// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kid/data/task.hpp"

namespace kid::infer {

// A label set as sorted indices into TaskSpec::labels; single-label tasks
// use one-element sets.
using LabelSet = std::vector<std::size_t>;

class TemplateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kMaxSubsetSize = 4;
inline constexpr std::size_t kMaxEnumeratedLabels = 12;

std::string render(const data::TaskSpec& task, const LabelSet& labels);
// Inverse of render; throws TemplateError on text no rendering produces.
LabelSet decode(const data::TaskSpec& task, std::string_view text);

struct Candidate {
  LabelSet labels;
  std::string text;
};

// The finite rendering set the semantic head is scored over. Multi-label
// tasks enumerate subsets of size <= 4 when the task has <= 12 labels; for
// larger tasks only the singletons (and "none" when allowed) are returned,
// to be combined by per-label containment.
std::vector<Candidate> candidates(const data::TaskSpec& task);
bool uses_containment(const data::TaskSpec& task);

LabelSet label_set_of(const data::TaskSpec& task, const std::vector<std::string>& names);
std::vector<std::string> label_names(const data::TaskSpec& task, const LabelSet& labels);

}  // namespace kid::infer
