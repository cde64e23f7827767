// SPDX-License-Identifier: Apache-2.0
//
// Random knowledge-format texts for round-trip checks.

#pragma once

#include <random>
#include <string>

#include "kid/knowledge/format.hpp"

namespace kid::knowledge::corpus {

// Plain text draws from an alphabet that includes every delimiter; entity
// and knowledge strings avoid newlines and ": " which the glossary reserves.
inline std::string random_string(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                                 bool plain) {
  static const std::vector<std::string> plain_atoms = {
      "a", "b", "q", "z", " ", " ", "the ", "meme ", "[", "]", "\\", "⟨", "⟩", "<", "<<", ">>",
      ".", ",", "\n", "é", ":"};
  static const std::vector<std::string> field_atoms = {"a", "b", "k", "x", "y", " ", "-", "[",
                                                       "]", "\\", "⟨", "⟩", "é", "o", "n"};
  const auto& atoms = plain ? plain_atoms : field_atoms;
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) out += atoms[pick(rng)];
  return out;
}

inline AugmentedText random_augmented_text(std::mt19937_64& rng) {
  AugmentedText t;
  std::uniform_int_distribution<int> n_items(0, 6);
  std::bernoulli_distribution coin(0.5);
  const int items = n_items(rng);
  std::size_t order = 0;
  for (int i = 0; i <= items; ++i) {
    if (coin(rng)) t.segments.push_back(PlainSpan{random_string(rng, 1, 12, true), std::nullopt});
    if (i == items) break;
    // Entities start with a distinctive tag so the appended body anchors them.
    KnowledgeItem item;
    item.entity = "E" + std::to_string(order) + random_string(rng, 0, 4, false);
    item.knowledge = random_string(rng, 1, 10, false);
    item.order_index = order++;
    item.separator = coin(rng) ? " " : "";
    t.segments.emplace_back(std::move(item));
    t.segments.push_back(PlainSpan{" ", std::nullopt});
  }
  return t;
}

}  // namespace kid::knowledge::corpus
