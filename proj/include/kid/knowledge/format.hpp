// SPDX-License-Identifier: Apache-2.0
//
// Entity-anchored augmented descriptions.
//
// Inline form:    ... ⟨Entity⟩ [knowledge] ...
// Appended form:  ... Entity ...
//                 [Knowledge]
//                 Entity: knowledge
//
// Literal ⟨ ⟩ [ ] and backslash inside spans are written with a leading
// backslash. <<Entity>> [knowledge] is accepted on input and written back
// with the Unicode brackets.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace kid::knowledge {

enum class Format { inlined, appended };

std::string_view format_name(Format f);
Format parse_format(std::string_view name);

struct PlainSpan {
  std::string text;
  // Verbatim source bytes when the span came from parse(); emitted as-is so
  // parsing stays lossless even for non-canonical input.
  std::optional<std::string> raw;
};

struct KnowledgeItem {
  std::string entity;
  std::string knowledge;
  std::size_t order_index = 0;
  // Whitespace seen between the entity and its knowledge block.
  std::string separator = " ";
};

using Segment = std::variant<PlainSpan, KnowledgeItem>;

struct AugmentedText {
  std::vector<Segment> segments;
  Format source_format = Format::inlined;

  std::size_t item_count() const;
  std::vector<KnowledgeItem> items() const;
  // Text with every entity rendered bare and all knowledge removed.
  std::string plain_text() const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// An entity with no knowledge block; the bytes [offset, offset + length)
// are kept as plain text.
struct ParseWarning {
  std::size_t offset;
  std::size_t length;
  std::string message;
};

inline constexpr std::string_view kOpenEntity = "⟨";
inline constexpr std::string_view kCloseEntity = "⟩";
inline constexpr std::string_view kGlossaryMarker = "\n[Knowledge]\n";

AugmentedText parse(std::string_view raw, std::vector<ParseWarning>* warnings = nullptr);
std::string serialize(const AugmentedText& t, Format format);
inline std::string serialize(const AugmentedText& t) { return serialize(t, t.source_format); }

AugmentedText truncate_to_n(const AugmentedText& t, std::size_t n);
AugmentedText convert(const AugmentedText& t, Format target);

// Removes unmatched delimiters so imperfect markup parses. Used by the
// provider repair policy.
std::string strip_orphan_delimiters(std::string_view raw);

// Escapes the delimiter characters of a literal string.
std::string escape(std::string_view text);

// Sorted (entity, knowledge) pairs, for multiset comparisons.
std::vector<std::pair<std::string, std::string>> item_multiset(const AugmentedText& t);

}  // namespace kid::knowledge
