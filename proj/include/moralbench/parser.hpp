#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moralbench/dataset.hpp"
#include "moralbench/taxonomy.hpp"
#include "moralbench/text.hpp"

namespace moralbench {

enum class ParseStatus { kClean, kRecovered, kMissingLabel, kMalformedTags };

constexpr std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::kClean: return "Clean";
    case ParseStatus::kRecovered: return "Recovered";
    case ParseStatus::kMissingLabel: return "MissingLabel";
    case ParseStatus::kMalformedTags: return "MalformedTags";
  }
  return "";
}

inline std::optional<ParseStatus> parse_status_from_string(std::string_view s) {
  for (auto st : {ParseStatus::kClean, ParseStatus::kRecovered, ParseStatus::kMissingLabel,
                  ParseStatus::kMalformedTags}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

/// Which extraction layer produced a label.
enum class LabelSource { kNone, kFinalLine, kScan, kLastSentence };

struct LabelMatch {
  std::optional<std::string> label;
  LabelSource source = LabelSource::kNone;
};

struct ParsedResponse {
  std::string example_id;
  std::string strategy_id;
  std::map<std::string, std::string> sections;
  std::optional<std::string> label;
  ParseStatus status = ParseStatus::kMissingLabel;
  LabelSource label_source = LabelSource::kNone;
  std::vector<std::string> missing_tags;
};

/// Canonical spelling of every tag the templates ask for.
inline constexpr std::string_view kKnownTags[] = {
    "reason", "Framework_1", "Framework_2", "step_1", "step_2",
    "step_3", "step_4",      "final_reasoning"};

/// Tags a response must contain for the given strategy to count as well-formed.
inline std::vector<std::string> required_tags(const PromptStrategy& s) {
  using K = PromptStrategy::Kind;
  switch (s.kind) {
    case K::kWithoutReasoning: return {};
    case K::kWithReasoning: return {"reason"};
    case K::kValueEthics: return {"Framework_1", "reason"};
    case K::kCognitive: return {"step_1", "step_2", "step_3", "reason"};
    case K::kDistillValueEthics: return {"Framework_1", "Framework_2", "final_reasoning"};
    case K::kDistillCognitive: return {"step_1", "step_2", "step_3", "final_reasoning"};
  }
  return {};
}

namespace detail {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

inline std::optional<std::string_view> canonical_tag(std::string_view name) {
  for (auto t : kKnownTags) {
    if (text::iequals(t, name)) return t;
  }
  return std::nullopt;
}

struct TagToken {
  std::size_t begin;  // position of '<'
  std::size_t end;    // one past '>'
  std::string_view name;
  bool closing;
};

// Recognizes <name>, </name>, < name >, </ name> for known tag names only.
inline std::vector<TagToken> lex_tags(std::string_view s) {
  std::vector<TagToken> out;
  for (std::size_t i = s.find('<'); i != std::string_view::npos; i = s.find('<', i + 1)) {
    std::size_t j = i + 1;
    while (j < s.size() && text::is_space(s[j])) ++j;
    bool closing = false;
    if (j < s.size() && s[j] == '/') {
      closing = true;
      ++j;
      while (j < s.size() && text::is_space(s[j])) ++j;
    }
    std::size_t name_begin = j;
    while (j < s.size() && is_word_char(s[j])) ++j;
    auto name = s.substr(name_begin, j - name_begin);
    while (j < s.size() && text::is_space(s[j])) ++j;
    if (j >= s.size() || s[j] != '>' || name.empty()) continue;
    if (auto canon = canonical_tag(name)) out.push_back({i, j + 1, *canon, closing});
  }
  return out;
}

// Innermost complete pairs; for repeated tags the last complete pair wins.
inline std::map<std::string, std::string> extract_sections(std::string_view s) {
  std::map<std::string, std::string> sections;
  std::map<std::string_view, std::vector<TagToken>> open;
  for (const auto& tok : lex_tags(s)) {
    auto& stack = open[tok.name];
    if (!tok.closing) {
      stack.push_back(tok);
      continue;
    }
    if (stack.empty()) continue;
    auto opener = stack.back();
    stack.pop_back();
    auto body = s.substr(opener.end, tok.begin - opener.end);
    bool has_nested = false;
    for (const auto& inner : lex_tags(body)) {
      if (inner.name == tok.name) {
        has_nested = true;
        break;
      }
    }
    if (!has_nested) sections[std::string(tok.name)] = std::string(text::trim(body));
  }
  return sections;
}

// Matches a vocabulary entry (whole word, case-insensitive) at `pos`.
inline std::optional<std::size_t> match_entry_at(std::string_view s, std::size_t pos,
                                                 const LabelVocabulary& vocabulary,
                                                 std::size_t* which) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < vocabulary.size(); ++k) {
    const auto& v = vocabulary[k];
    if (v.empty() || pos + v.size() > s.size()) continue;
    if (!text::iequals(s.substr(pos, v.size()), v)) continue;
    if (pos + v.size() < s.size() && is_word_char(s[pos + v.size()])) continue;
    if (!best || v.size() > vocabulary[*which].size()) {
      best = pos + v.size();
      *which = k;
    }
  }
  return best;
}

inline std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && text::is_space(s[i])) ++i;
  return i;
}

// Matches "the selected label is" with arbitrary whitespace between words.
inline std::optional<std::size_t> match_phrase_at(std::string_view s, std::size_t pos) {
  static constexpr std::string_view kWords[] = {"the", "selected", "label", "is"};
  std::size_t i = pos;
  for (std::size_t w = 0; w < 4; ++w) {
    if (w > 0) {
      auto j = skip_space(s, i);
      if (j == i) return std::nullopt;
      i = j;
    }
    const auto word = kWords[w];
    if (i + word.size() > s.size() || !text::iequals(s.substr(i, word.size()), word)) {
      return std::nullopt;
    }
    i += word.size();
  }
  if (i < s.size() && is_word_char(s[i])) return std::nullopt;
  return i;
}

// All label-line hits in `s`, in order. A literal template echo such as
// "<Support or Oppose>" is not a decision and is skipped.
inline std::vector<std::string> label_line_hits(std::string_view s, const LabelVocabulary& vocabulary) {
  std::vector<std::string> hits;
  for (std::size_t pos = 0; pos < s.size(); ++pos) {
    if (text::lower(s[pos]) != 't' || (pos > 0 && is_word_char(s[pos - 1]))) continue;
    auto after = match_phrase_at(s, pos);
    if (!after) continue;
    std::size_t i = *after;
    while (i < s.size() && (text::is_space(s[i]) || std::string_view(":*'\"`<[(-").find(s[i]) != std::string_view::npos)) {
      ++i;
    }
    std::size_t which = 0;
    auto end = match_entry_at(s, i, vocabulary, &which);
    if (!end) continue;
    auto k = skip_space(s, *end);
    if (k + 2 <= s.size() && text::iequals(s.substr(k, 2), "or") &&
        (k + 2 == s.size() || !is_word_char(s[k + 2]))) {
      std::size_t other = 0;
      if (match_entry_at(s, skip_space(s, k + 2), vocabulary, &other)) continue;
    }
    hits.push_back(vocabulary[which]);
    pos = *end - 1;
  }
  return hits;
}

inline std::string strip_tags(std::string_view s) {
  std::string out(s);
  auto tags = lex_tags(s);
  for (auto it = tags.rbegin(); it != tags.rend(); ++it) {
    out.replace(it->begin, it->end - it->begin, " ");
  }
  return out;
}

inline std::optional<std::string> last_sentence_hit(std::string_view s,
                                                    const LabelVocabulary& vocabulary) {
  auto plain = strip_tags(s);
  std::string_view view(plain);
  std::string_view last;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= view.size(); ++i) {
    if (i == view.size() || view[i] == '.' || view[i] == '!' || view[i] == '?' || view[i] == '\n') {
      auto seg = text::trim(view.substr(start, i - start));
      if (!seg.empty()) last = seg;
      start = i + 1;
    }
  }
  if (last.empty()) return std::nullopt;
  std::optional<std::size_t> found;
  for (std::size_t pos = 0; pos < last.size(); ++pos) {
    if (pos > 0 && is_word_char(last[pos - 1])) continue;
    std::size_t which = 0;
    if (auto end = match_entry_at(last, pos, vocabulary, &which)) {
      if (found && *found != which) return std::nullopt;  // both labels named: ambiguous
      found = which;
      pos = *end - 1;
    }
  }
  if (!found) return std::nullopt;
  return vocabulary[*found];
}

}  // namespace detail

/// Layered label extraction: label line on the final non-empty line, then the last
/// label line anywhere, then a vocabulary word in the last sentence.
inline LabelMatch extract_label_detailed(std::string_view text, const LabelVocabulary& vocabulary) {
  auto lines = text::split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (text::trim(*it).empty()) continue;
    auto hits = detail::label_line_hits(*it, vocabulary);
    if (!hits.empty()) return {hits.back(), LabelSource::kFinalLine};
    break;
  }
  auto hits = detail::label_line_hits(text, vocabulary);
  if (!hits.empty()) return {hits.back(), LabelSource::kScan};
  if (auto hit = detail::last_sentence_hit(text, vocabulary)) {
    return {*hit, LabelSource::kLastSentence};
  }
  return {};
}

inline std::optional<std::string> extract_label(std::string_view text,
                                                const LabelVocabulary& vocabulary) {
  return extract_label_detailed(text, vocabulary).label;
}

/// Never throws; every failure is reported through `status`.
inline ParsedResponse parse(std::string_view completion, const PromptStrategy& strategy,
                            const LabelVocabulary& vocabulary, std::string example_id = {}) {
  ParsedResponse out;
  out.example_id = std::move(example_id);
  out.strategy_id = strategy.id();
  out.sections = detail::extract_sections(completion);
  for (auto& tag : required_tags(strategy)) {
    if (!out.sections.contains(tag)) out.missing_tags.push_back(std::move(tag));
  }
  auto match = extract_label_detailed(completion, vocabulary);
  out.label = match.label;
  out.label_source = match.source;
  if (!out.missing_tags.empty()) {
    out.status = ParseStatus::kMalformedTags;
  } else if (!out.label) {
    out.status = ParseStatus::kMissingLabel;
  } else if (match.source == LabelSource::kLastSentence) {
    out.status = ParseStatus::kRecovered;
  } else {
    out.status = ParseStatus::kClean;
  }
  return out;
}

}  // namespace moralbench
