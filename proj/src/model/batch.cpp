// SPDX-License-Identifier: Apache-2.0
#include "kid/model/batch.hpp"

#include <algorithm>
#include <stdexcept>

#include "kid/data/image.hpp"
#include "kid/data/tokenizer.hpp"

namespace kid::model {

bool Batch::has_targets() const {
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (target_end[b] > target_begin[b]) return true;
  }
  return false;
}

std::size_t description_budget(std::size_t text_bytes, std::size_t target_bytes, bool has_target,
                               std::size_t max_len) {
  const std::size_t fixed = kPrefixLen + text_bytes + 2 + (has_target ? target_bytes + 1 : 0);
  return fixed >= max_len ? 0 : max_len - fixed;
}

Batch make_batch(const std::vector<Example>& examples, std::size_t max_len) {
  if (examples.empty()) throw std::invalid_argument("make_batch: no examples");
  Batch batch;
  batch.batch_size = examples.size();
  batch.n_classes = examples.front().class_target.size();
  std::vector<std::vector<int>> seqs;
  for (const auto& ex : examples) {
    if (ex.patches.size() != data::kPatchCount * data::kPatchDim) {
      throw std::invalid_argument("make_batch: expected 16 x 64 patch values");
    }
    if (ex.class_target.size() != batch.n_classes) {
      throw std::invalid_argument("make_batch: class targets present on some examples only");
    }
    std::vector<int> seq(data::kPatchCount, -1);
    seq.push_back(data::kBos);
    for (unsigned char c : ex.text) seq.push_back(c);
    seq.push_back(data::kSep);
    for (unsigned char c : ex.description) seq.push_back(c);
    seq.push_back(data::kSep);
    batch.last_index.push_back(seq.size() - 1);
    batch.target_begin.push_back(seq.size());
    if (ex.target) {
      for (unsigned char c : *ex.target) seq.push_back(c);
      seq.push_back(data::kEos);
    }
    batch.target_end.push_back(seq.size());
    if (seq.size() > max_len) {
      throw data::SequenceOverflow("make_batch: sequence of " + std::to_string(seq.size()) +
                                   " positions exceeds L_max " + std::to_string(max_len));
    }
    batch.lengths.push_back(seq.size());
    batch.patches.insert(batch.patches.end(), ex.patches.begin(), ex.patches.end());
    batch.class_targets.insert(batch.class_targets.end(), ex.class_target.begin(), ex.class_target.end());
    seqs.push_back(std::move(seq));
  }
  batch.seq_len = *std::max_element(batch.lengths.begin(), batch.lengths.end());
  batch.token_ids.assign(batch.batch_size * batch.seq_len, data::kPad);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    std::copy(seqs[b].begin(), seqs[b].end(),
              batch.token_ids.begin() + static_cast<std::ptrdiff_t>(b * batch.seq_len));
  }
  return batch;
}

}  // namespace kid::model
