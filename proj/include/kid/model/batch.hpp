// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kid::model {

// One model input before batching. `patches` holds 16 x 64 values.
struct Example {
  std::vector<double> patches;
  std::string text;
  std::string description;
  std::optional<std::string> target;  // rendered label text for the generation head
  std::vector<double> class_target;   // one-hot or multi-hot; empty if absent
};

// Positions of sample b occupy rows [b * seq_len, (b + 1) * seq_len).
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::size_t n_classes = 0;
  std::vector<int> token_ids;  // -1 at patch positions, PAD past each length
  std::vector<double> patches;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> last_index;    // final prompt position (second SEP)
  std::vector<std::size_t> target_begin;  // target tokens occupy [begin, end)
  std::vector<std::size_t> target_end;
  std::vector<double> class_targets;  // batch_size x n_classes, or empty

  bool has_targets() const;
  bool has_class_targets() const { return !class_targets.empty(); }
  bool is_pad(std::size_t b, std::size_t t) const { return t >= lengths[b]; }
};

// Fixed positions before the text: 16 patches then BOS.
inline constexpr std::size_t kPrefixLen = 17;

// Bytes left for the description once text, separators and the target fit.
std::size_t description_budget(std::size_t text_bytes, std::size_t target_bytes, bool has_target,
                               std::size_t max_len);

// Throws data::SequenceOverflow when a sample exceeds max_len, and
// std::invalid_argument on inconsistent fields.
Batch make_batch(const std::vector<Example>& examples, std::size_t max_len);

}  // namespace kid::model
