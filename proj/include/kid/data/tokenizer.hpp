// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kid::data {

// Byte-level vocabulary: ids 0-255 are raw bytes, then four specials.
inline constexpr int kPad = 256;
inline constexpr int kBos = 257;
inline constexpr int kEos = 258;
inline constexpr int kSep = 259;
inline constexpr int kVocabSize = 260;
inline constexpr std::size_t kDefaultMaxLen = 512;

class SequenceOverflow : public std::length_error {
 public:
  using std::length_error::length_error;
};

using TokenSeq = std::vector<int>;

TokenSeq tokenize(std::string_view text, std::size_t max_len = kDefaultMaxLen);
// Special ids are dropped.
std::string detokenize(const TokenSeq& ids);

// Byte length of the longest prefix of `s` (at most `limit` bytes) that
// does not split a UTF-8 sequence.
std::size_t utf8_prefix(std::string_view s, std::size_t limit);

}  // namespace kid::data
