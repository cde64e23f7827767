// SPDX-License-Identifier: Apache-2.0
//
// Synthetic held-out-entity task. Each meme shows one entity glyph and a
// caption "<name> is loved|hated". The gold label is the XOR of the caption
// cue and a hidden per-entity attribute that appears only in the entity's
// knowledge string, so without injected knowledge an unseen entity's label
// is a coin flip.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kid/data/sample.hpp"
#include "kid/data/task.hpp"
#include "kid/knowledge/format.hpp"

namespace kid::data {

struct SyntheticConfig {
  std::size_t n_entities = 300;
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 500;
  std::uint64_t seed = 0;
  std::size_t distractor_pool = 40;
  std::size_t distractors_per_sample = 4;
  double image_noise = 0.1;
  // Share of "hated" captions within each label class of the training
  // split. Any value keeps the cue independent of the label; away from 0.5
  // it makes the knowledge bit predictive on its own during training, which
  // gives gradient descent a first-order foothold on the XOR. Validation and
  // test captions are always balanced.
  double train_cue_rate = 0.75;

  nlohmann::ordered_json to_json() const;
  static SyntheticConfig from_json(const nlohmann::json& j);
};

inline constexpr const char* kPositiveKnowledge = "is a thief";
inline constexpr const char* kNegativeKnowledge = "is a saint";

struct KbEntity {
  std::string name;
  int attribute = 0;  // hidden bit; only the knowledge string reveals it
  std::string knowledge;
  std::vector<std::uint8_t> glyph;  // 8x8 binary pattern
  Split group = Split::train;        // entity sets are disjoint across splits
};

struct KbDistractor {
  std::string name;
  std::string knowledge;
};

struct KbSampleFacts {
  std::size_t entity = 0;
  std::vector<std::size_t> distractors;
};

class KnowledgeBase {
 public:
  std::vector<KbEntity> entities;
  std::vector<KbDistractor> distractors;
  std::map<std::string, KbSampleFacts> samples;

  // The description a perfect teacher gives for `id` with `n` items: the
  // relevant item plus n-1 distractors in a per-(id, n) shuffled order.
  // n = 0 yields the bare entity name.
  knowledge::AugmentedText describe(const std::string& id, std::size_t n) const;
  bool knows(const std::string& id) const { return samples.count(id) != 0; }

  nlohmann::ordered_json to_json() const;
  static KnowledgeBase from_json(const nlohmann::json& j);
  static KnowledgeBase load(const std::string& path);
  void save(const std::string& path) const;
};

struct SyntheticData {
  std::vector<MemeSample> train, val, test;
  KnowledgeBase kb;

  std::vector<MemeSample> all() const;
};

TaskSpec synthetic_task();

// Throws std::invalid_argument on contradictory configs.
SyntheticData generate_synthetic(const SyntheticConfig& config);

// Caption cue bit for a synthetic sample (1 = "hated").
int synthetic_cue(const MemeSample& s);

}  // namespace kid::data
