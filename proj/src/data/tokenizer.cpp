// SPDX-License-Identifier: Apache-2.0
#include "kid/data/tokenizer.hpp"

namespace kid::data {

TokenSeq tokenize(std::string_view text, std::size_t max_len) {
  if (text.size() > max_len) {
    throw SequenceOverflow("tokenize: " + std::to_string(text.size()) + " tokens exceed limit " +
                           std::to_string(max_len));
  }
  TokenSeq ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string detokenize(const TokenSeq& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

std::size_t utf8_prefix(std::string_view s, std::size_t limit) {
  if (s.size() <= limit) return s.size();
  std::size_t n = limit;
  // Back up over continuation bytes so the cut lands on a lead byte.
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return n;
}

}  // namespace kid::data
