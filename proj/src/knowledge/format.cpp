// SPDX-License-Identifier: Apache-2.0
#include "kid/knowledge/format.hpp"

#include <algorithm>

namespace kid::knowledge {

namespace {

constexpr std::string_view kAsciiOpen = "<<";
constexpr std::string_view kAsciiClose = ">>";

bool starts_with(std::string_view s, std::size_t at, std::string_view prefix) {
  return s.substr(at, prefix.size()) == prefix;
}

// Length of the escapable token at `at` (delimiter or backslash), or 0.
std::size_t escapable_at(std::string_view s, std::size_t at) {
  if (starts_with(s, at, kOpenEntity)) return kOpenEntity.size();
  if (starts_with(s, at, kCloseEntity)) return kCloseEntity.size();
  if (at < s.size() && (s[at] == '[' || s[at] == ']' || s[at] == '\\' || s[at] == '<')) return 1;
  return 0;
}

std::string unescape(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    if (raw[i] == '\\') {
      if (auto n = escapable_at(raw, i + 1)) {
        out.append(raw.substr(i + 1, n));
        i += 1 + n;
        continue;
      }
    }
    out.push_back(raw[i++]);
  }
  return out;
}

// Position of the first unescaped occurrence of `close` at or after `from`.
// Stops at a newline: delimited blocks are single-line.
std::optional<std::size_t> find_close(std::string_view s, std::size_t from, std::string_view close) {
  for (std::size_t i = from; i < s.size();) {
    if (s[i] == '\n') return std::nullopt;
    if (s[i] == '\\' && escapable_at(s, i + 1)) {
      i += 1 + escapable_at(s, i + 1);
      continue;
    }
    if (starts_with(s, i, close)) return i;
    ++i;
  }
  return std::nullopt;
}

void push_plain(std::vector<Segment>& out, std::string_view raw) {
  if (raw.empty()) return;
  out.emplace_back(PlainSpan{unescape(raw), std::string(raw)});
}

struct InlineParse {
  std::vector<Segment> segments;
  std::size_t items = 0;
};

// Parses the inline grammar over `s`; `base` offsets error positions.
InlineParse parse_inline(std::string_view s, std::size_t base, std::vector<ParseWarning>* warnings) {
  InlineParse result;
  std::size_t plain_start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '\\' && escapable_at(s, i + 1)) {
      i += 1 + escapable_at(s, i + 1);
      continue;
    }
    const bool unicode = starts_with(s, i, kOpenEntity);
    const bool ascii = !unicode && starts_with(s, i, kAsciiOpen);
    if (!unicode && !ascii) {
      ++i;
      continue;
    }
    const std::string_view open = unicode ? kOpenEntity : kAsciiOpen;
    const std::string_view close = unicode ? kCloseEntity : kAsciiClose;
    const auto entity_end = find_close(s, i + open.size(), close);
    if (!entity_end) {
      if (ascii) {  // stray "<<" is ordinary text
        ++i;
        continue;
      }
      throw ParseError("unclosed entity delimiter", base + i);
    }
    std::size_t k = *entity_end + close.size();
    while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
    const std::string_view entity_raw = s.substr(i + open.size(), *entity_end - i - open.size());
    if (k < s.size() && s[k] == '[') {
      const auto knowledge_end = find_close(s, k + 1, "]");
      if (!knowledge_end) {
        if (ascii) {
          ++i;
          continue;
        }
        throw ParseError("unclosed knowledge delimiter", base + k);
      }
      const std::string_view knowledge_raw = s.substr(k + 1, *knowledge_end - k - 1);
      if (!entity_raw.empty() && !knowledge_raw.empty()) {
        push_plain(result.segments, s.substr(plain_start, i - plain_start));
        KnowledgeItem item;
        item.entity = unescape(entity_raw);
        item.knowledge = unescape(knowledge_raw);
        item.order_index = result.items++;
        item.separator = std::string(s.substr(*entity_end + close.size(), k - *entity_end - close.size()));
        result.segments.emplace_back(std::move(item));
        i = *knowledge_end + 1;
        plain_start = i;
        continue;
      }
    } else if (ascii) {
      ++i;
      continue;
    }
    // Entity without a (non-empty) knowledge block stays plain text.
    const std::size_t end = *entity_end + close.size();
    if (warnings) {
      warnings->push_back({base + i, end - i,
                           "entity '" + unescape(entity_raw) + "' has no knowledge block"});
    }
    i = end;
  }
  push_plain(result.segments, s.substr(plain_start));
  return result;
}

std::optional<std::size_t> find_glossary(std::string_view s) {
  // Body text escapes its literal '[', so an unescaped marker line can only
  // be the glossary header.
  const std::size_t pos = s.rfind(kGlossaryMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  return pos;
}

AugmentedText parse_appended(std::string_view raw, std::size_t marker,
                             std::vector<ParseWarning>* warnings) {
  const std::string_view body = raw.substr(0, marker);
  const std::size_t glossary_start = marker + kGlossaryMarker.size();
  const std::string_view glossary = raw.substr(glossary_start);

  std::vector<std::pair<std::string, std::string>> entries;  // escaped entity, knowledge raw
  std::size_t line_start = 0;
  while (line_start <= glossary.size()) {
    std::size_t line_end = glossary.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = glossary.size();
    const std::string_view line = glossary.substr(line_start, line_end - line_start);
    const std::size_t colon = line.find(": ");
    if (colon == std::string_view::npos || colon == 0 || colon + 2 >= line.size()) {
      throw ParseError("glossary entry is not 'entity: knowledge'", glossary_start + line_start);
    }
    entries.emplace_back(std::string(line.substr(0, colon)), std::string(line.substr(colon + 2)));
    line_start = line_end + 1;
  }

  auto body_parse = parse_inline(body, 0, warnings);
  if (body_parse.items > 0) {
    throw ParseError("inline knowledge block inside appended description", 0);
  }

  AugmentedText out;
  out.source_format = Format::appended;
  std::size_t cursor = 0;
  for (std::size_t j = 0; j < entries.size(); ++j) {
    const auto& [entity_raw, knowledge_raw] = entries[j];
    const std::size_t at = body.find(entity_raw, cursor);
    if (at == std::string_view::npos) {
      throw ParseError("glossary entity '" + unescape(entity_raw) + "' not mentioned in body",
                       glossary_start);
    }
    push_plain(out.segments, body.substr(cursor, at - cursor));
    KnowledgeItem item;
    item.entity = unescape(entity_raw);
    item.knowledge = unescape(knowledge_raw);
    item.order_index = j;
    out.segments.emplace_back(std::move(item));
    cursor = at + entity_raw.size();
  }
  push_plain(out.segments, body.substr(cursor));
  return out;
}

std::string render_plain(const PlainSpan& span) { return span.raw ? *span.raw : escape(span.text); }

}  // namespace

std::string_view format_name(Format f) { return f == Format::inlined ? "inline" : "appended"; }

Format parse_format(std::string_view name) {
  if (name == "inline") return Format::inlined;
  if (name == "appended") return Format::appended;
  throw std::invalid_argument("unknown knowledge format '" + std::string(name) + "'");
}

std::size_t AugmentedText::item_count() const {
  return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [](const Segment& s) {
    return std::holds_alternative<KnowledgeItem>(s);
  }));
}

std::vector<KnowledgeItem> AugmentedText::items() const {
  std::vector<KnowledgeItem> out;
  for (const auto& s : segments) {
    if (const auto* item = std::get_if<KnowledgeItem>(&s)) out.push_back(*item);
  }
  return out;
}

std::string AugmentedText::plain_text() const {
  std::string out;
  for (const auto& s : segments) {
    if (const auto* span = std::get_if<PlainSpan>(&s)) {
      out += span->text;
    } else {
      out += std::get<KnowledgeItem>(s).entity;
    }
  }
  return out;
}

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    // A lone '<' is left alone; only "<<" could open an entity.
    const bool lone_lt = text[i] == '<' && !starts_with(text, i, kAsciiOpen);
    if (auto n = lone_lt ? 0 : escapable_at(text, i)) {
      out.push_back('\\');
      out.append(text.substr(i, n));
      i += n;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

AugmentedText parse(std::string_view raw, std::vector<ParseWarning>* warnings) {
  if (auto marker = find_glossary(raw)) return parse_appended(raw, *marker, warnings);
  AugmentedText out;
  out.source_format = Format::inlined;
  out.segments = parse_inline(raw, 0, warnings).segments;
  return out;
}

std::string serialize(const AugmentedText& t, Format format) {
  std::string out;
  std::string glossary;
  for (const auto& s : t.segments) {
    if (const auto* span = std::get_if<PlainSpan>(&s)) {
      out += render_plain(*span);
      continue;
    }
    const auto& item = std::get<KnowledgeItem>(s);
    if (format == Format::inlined) {
      out += kOpenEntity;
      out += escape(item.entity);
      out += kCloseEntity;
      out += item.separator;
      out += '[';
      out += escape(item.knowledge);
      out += ']';
    } else {
      out += escape(item.entity);
      if (!glossary.empty()) glossary += '\n';
      glossary += escape(item.entity) + ": " + escape(item.knowledge);
    }
  }
  if (!glossary.empty()) {
    out += kGlossaryMarker;
    out += glossary;
  }
  return out;
}

AugmentedText truncate_to_n(const AugmentedText& t, std::size_t n) {
  AugmentedText out;
  out.source_format = t.source_format;
  std::size_t kept = 0;
  for (const auto& s : t.segments) {
    if (const auto* item = std::get_if<KnowledgeItem>(&s)) {
      if (kept < n) {
        KnowledgeItem copy = *item;
        copy.order_index = kept++;
        out.segments.emplace_back(std::move(copy));
      } else {
        out.segments.emplace_back(PlainSpan{item->entity, std::nullopt});
      }
    } else {
      out.segments.push_back(s);
    }
  }
  return out;
}

AugmentedText convert(const AugmentedText& t, Format target) {
  AugmentedText out = t;
  out.source_format = target;
  return out;
}

std::string strip_orphan_delimiters(std::string_view raw) {
  std::string text(raw);
  // Each pass removes one offending delimiter; bounded by the input length.
  for (std::size_t guard = 0; guard <= raw.size(); ++guard) {
    std::vector<ParseWarning> warnings;
    try {
      parse(text, &warnings);
    } catch (const ParseError& e) {
      const std::size_t at = e.offset();
      const std::size_t n = starts_with(text, at, kOpenEntity) ? kOpenEntity.size() : 1;
      text.erase(at, n);
      continue;
    }
    if (warnings.empty()) return text;
    // Unwrap orphan entities back-to-front so earlier offsets stay valid.
    for (auto it = warnings.rbegin(); it != warnings.rend(); ++it) {
      const std::string_view slice = std::string_view(text).substr(it->offset, it->length);
      const bool unicode = starts_with(slice, 0, kOpenEntity);
      const std::size_t open = unicode ? kOpenEntity.size() : kAsciiOpen.size();
      const std::size_t close = unicode ? kCloseEntity.size() : kAsciiClose.size();
      const std::string inner(slice.substr(open, slice.size() - open - close));
      text.replace(it->offset, it->length, inner);
    }
  }
  return text;
}

std::vector<std::pair<std::string, std::string>> item_multiset(const AugmentedText& t) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : t.items()) out.emplace_back(item.entity, item.knowledge);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace kid::knowledge
