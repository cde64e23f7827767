// SPDX-License-Identifier: Apache-2.0
#include "kid/data/fit.hpp"

#include "kid/data/tokenizer.hpp"

namespace kid::data {

std::string fit_description(const knowledge::AugmentedText& t, knowledge::Format format,
                            std::size_t max_bytes) {
  for (std::size_t n = t.item_count() + 1; n-- > 0;) {
    std::string s = knowledge::serialize(knowledge::truncate_to_n(t, n), format);
    if (s.size() <= max_bytes) return s;
    if (n == 0) return s.substr(0, utf8_prefix(s, max_bytes));
  }
  return {};
}

}  // namespace kid::data
