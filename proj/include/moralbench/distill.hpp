#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "moralbench/dataset.hpp"
#include "moralbench/error.hpp"
#include "moralbench/gateway.hpp"
#include "moralbench/io.hpp"
#include "moralbench/parser.hpp"
#include "moralbench/prompt.hpp"
#include "moralbench/taxonomy.hpp"
#include "moralbench/text.hpp"

namespace moralbench {

struct DistillCandidate {
  std::string example_id;
  std::string teacher_name;
  std::string strategy_id;
  std::string prompt_text;
  std::string raw_output;
  ParsedResponse parsed;
};

enum class RejectReason { kLabelMismatch, kMalformedTags, kTooShort, kTooLong, kPromptEcho };

constexpr std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kLabelMismatch: return "LabelMismatch";
    case RejectReason::kMalformedTags: return "MalformedTags";
    case RejectReason::kTooShort: return "TooShort";
    case RejectReason::kTooLong: return "TooLong";
    case RejectReason::kPromptEcho: return "PromptEcho";
  }
  return "";
}

struct FilterVerdict {
  bool accepted = true;
  std::optional<RejectReason> reason;

  static FilterVerdict accept() { return {}; }
  static FilterVerdict reject(RejectReason r) { return {false, r}; }
};

/// Reasoning length bounds, in whitespace-delimited tokens.
struct LengthBounds {
  std::size_t min_tokens = 30;
  std::size_t max_tokens = 1600;
};

/// Share of the prompt that may reappear verbatim in the reasoning before it counts as echo.
inline constexpr double kEchoThreshold = 0.8;
inline constexpr std::size_t kEchoShingle = 8;

inline std::string joined_reasoning(const ParsedResponse& parsed, const PromptStrategy& s) {
  std::string out;
  for (const auto& tag : required_tags(s)) {
    if (auto it = parsed.sections.find(tag); it != parsed.sections.end()) {
      if (!out.empty()) out.push_back('\n');
      out += it->second;
    }
  }
  return out;
}

/// Fraction of the prompt's token shingles that occur verbatim in `reasoning`.
inline double echo_fraction(std::string_view prompt, std::string_view reasoning) {
  auto p = text::whitespace_tokens(prompt);
  auto r = text::whitespace_tokens(reasoning);
  if (p.empty() || r.empty()) return 0.0;
  const std::size_t k = std::min({kEchoShingle, p.size(), r.size()});
  auto shingle = [k](const std::vector<std::string_view>& toks, std::size_t i) {
    std::string s;
    for (std::size_t j = 0; j < k; ++j) {
      s.append(toks[i + j]);
      s.push_back('\x1f');
    }
    return s;
  };
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i + k <= r.size(); ++i) seen.insert(shingle(r, i));
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i + k <= p.size(); ++i) {
    ++total;
    if (seen.contains(shingle(p, i))) ++hit;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

/// Accepts a teacher generation iff its required tags are well-formed, any label it
/// states matches gold, its reasoning length is within bounds and it does not echo the
/// prompt. Gates are checked in that order; the first failure is the reported reason.
inline FilterVerdict filter_candidate(const DistillCandidate& c, const std::string& gold_label,
                                      const LengthBounds& bounds = {}) {
  auto strategy = try_parse_strategy(c.strategy_id);
  if (!strategy || !strategy->is_distill()) return FilterVerdict::reject(RejectReason::kMalformedTags);
  if (!c.parsed.missing_tags.empty()) return FilterVerdict::reject(RejectReason::kMalformedTags);
  // Only an explicit label line counts as the teacher emitting a label.
  if (c.parsed.label && c.parsed.label_source != LabelSource::kLastSentence &&
      *c.parsed.label != gold_label) {
    return FilterVerdict::reject(RejectReason::kLabelMismatch);
  }
  auto reasoning = joined_reasoning(c.parsed, *strategy);
  auto tokens = text::whitespace_tokens(reasoning).size();
  if (tokens < bounds.min_tokens) return FilterVerdict::reject(RejectReason::kTooShort);
  if (tokens > bounds.max_tokens) return FilterVerdict::reject(RejectReason::kTooLong);
  if (echo_fraction(c.prompt_text, reasoning) >= kEchoThreshold) {
    return FilterVerdict::reject(RejectReason::kPromptEcho);
  }
  return FilterVerdict::accept();
}

struct DistillRecord {
  std::string example_id;
  std::string dataset;
  /// The zero-shot prompt the student sees; it never contains the gold label.
  std::string input_text;
  /// Teacher reasoning in the zero-shot output format, ending with the label line.
  std::string target_text;
  std::string teacher_name;
  std::string gold_label;
  std::string strategy_id;

  friend bool operator==(const DistillRecord&, const DistillRecord&) = default;
};

inline std::string label_line(std::string_view label) {
  return "The Selected Label is " + std::string(label);
}

/// Re-tags the teacher's sections into the zero-shot format the student is asked for.
inline std::string build_target(const ParsedResponse& parsed, const PromptStrategy& distill_strategy,
                                const std::string& gold_label) {
  auto section = [&](const std::string& tag) {
    auto it = parsed.sections.find(tag);
    return it == parsed.sections.end() ? std::string{} : it->second;
  };
  auto wrap = [](const std::string& tag, const std::string& body) {
    return "<" + tag + ">\n" + body + "\n</" + tag + ">\n";
  };
  std::string out;
  if (distill_strategy.kind == PromptStrategy::Kind::kDistillValueEthics) {
    out += wrap("Framework_1", section("Framework_1"));
    out += wrap("Framework_2", section("Framework_2"));
  } else {
    for (const char* tag : {"step_1", "step_2", "step_3"}) out += wrap(tag, section(tag));
  }
  out += wrap("reason", section("final_reasoning"));
  out += label_line(gold_label);
  return out;
}

inline DistillRecord make_record(const DistillCandidate& c, const MoralExample& example,
                                 const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  auto strategy = parse_strategy(c.strategy_id);
  if (!strategy.is_distill()) {
    throw Error(ErrorCode::kWrongStrategyKind, c.strategy_id + " is not a distillation strategy");
  }
  DistillRecord r;
  r.example_id = example.id;
  r.dataset = std::string(to_string(example.dataset));
  r.input_text = render(strategy.zero_shot_twin(), example, registry).text;
  r.target_text = build_target(c.parsed, strategy, example.gold_label);
  r.teacher_name = c.teacher_name;
  r.gold_label = example.gold_label;
  r.strategy_id = c.strategy_id;
  return r;
}

/// Checks the invariants emit_corpus relies on; returns a description of the first
/// violation, or nothing.
inline std::optional<std::string> record_violation(const DistillRecord& r) {
  if (!r.target_text.ends_with(label_line(r.gold_label))) {
    return "record '" + r.example_id + "': target does not end with the gold label line";
  }
  auto strategy = try_parse_strategy(r.strategy_id);
  if (!strategy || !strategy->is_distill()) {
    return "record '" + r.example_id + "': '" + r.strategy_id + "' is not a distillation strategy";
  }
  auto sections = detail::extract_sections(r.target_text);
  auto reason = sections.find("reason");
  if (reason == sections.end() || text::trim(reason->second).empty()) {
    return "record '" + r.example_id + "': empty reasoning";
  }
  return std::nullopt;
}

inline nlohmann::ordered_json to_json(const DistillRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.example_id;
  j["dataset"] = r.dataset;
  j["input"] = r.input_text;
  j["target"] = r.target_text;
  j["teacher"] = r.teacher_name;
  j["gold_label"] = r.gold_label;
  j["strategy"] = r.strategy_id;
  return j;
}

inline DistillRecord record_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(),      j.at("dataset").get<std::string>(),
          j.at("input").get<std::string>(),   j.at("target").get<std::string>(),
          j.at("teacher").get<std::string>(), j.at("gold_label").get<std::string>(),
          j.at("strategy").get<std::string>()};
}

/// Writes one JSON object per line. Every record is validated first; on any violation
/// nothing is written.
inline std::size_t emit_corpus(std::span<const DistillRecord> records, const std::filesystem::path& path) {
  for (const auto& r : records) {
    if (auto v = record_violation(r)) throw Error(ErrorCode::kPreconditionViolation, *v);
  }
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  io::write_file(path, out);
  return records.size();
}

inline std::vector<DistillRecord> read_corpus(const std::filesystem::path& path) {
  std::vector<DistillRecord> records;
  std::size_t line_no = 0;
  const auto data = io::read_file(path);
  for (auto line : text::split_lines(data)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

struct CandidateBatch {
  std::vector<DistillCandidate> candidates;  // input order, failed items omitted
  std::vector<ItemError> errors;
};

/// One teacher generation per example, prompted with the gold label.
inline CandidateBatch generate_candidates(std::span<const MoralExample> examples,
                                          const ModelEndpoint& teacher, const PromptStrategy& strategy,
                                          const Gateway& gateway, const GenerationParams& params = {},
                                          const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  if (!strategy.is_distill()) {
    throw Error(ErrorCode::kWrongStrategyKind, strategy.id() + " is not a distillation strategy");
  }
  if (examples.empty()) throw Error(ErrorCode::kEmptyInput, "no training examples");
  std::unordered_set<std::string> ids;
  for (const auto& ex : examples) {
    if (!ids.insert(ex.id).second) {
      throw Error(ErrorCode::kPreconditionViolation, "duplicate example id '" + ex.id + "'");
    }
  }
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(examples.size());
  for (const auto& ex : examples) prompts.push_back(render_distill(strategy, ex, ex.gold_label, registry));

  auto batch = gateway.complete_batch(teacher, prompts, params);
  std::map<std::string, const RenderedPrompt*> by_id;
  std::map<std::string, const MoralExample*> example_by_id;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    by_id[prompts[i].example_id] = &prompts[i];
    example_by_id[examples[i].id] = &examples[i];
  }
  CandidateBatch out;
  out.errors = std::move(batch.errors);
  for (auto& c : batch.completions) {
    const auto& ex = *example_by_id.at(c.example_id);
    DistillCandidate cand;
    cand.example_id = c.example_id;
    cand.teacher_name = teacher.name;
    cand.strategy_id = strategy.id();
    cand.prompt_text = by_id.at(c.example_id)->text;
    cand.parsed = parse(c.text, strategy, ex.label_vocabulary, c.example_id);
    cand.raw_output = std::move(c.text);
    out.candidates.push_back(std::move(cand));
  }
  return out;
}

struct DistillOutcome {
  std::vector<DistillRecord> records;
  std::map<std::string, std::size_t> rejections;  // reason -> count
  std::vector<ItemError> errors;
  std::size_t candidates = 0;
};

/// Generation, filtering and record construction for one teacher and strategy.
inline DistillOutcome build_corpus(std::span<const MoralExample> examples, const ModelEndpoint& teacher,
                                   const PromptStrategy& strategy, const Gateway& gateway,
                                   const GenerationParams& params = {}, const LengthBounds& bounds = {},
                                   const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  auto batch = generate_candidates(examples, teacher, strategy, gateway, params, registry);
  std::map<std::string, const MoralExample*> by_id;
  for (const auto& ex : examples) by_id[ex.id] = &ex;
  DistillOutcome out;
  out.errors = std::move(batch.errors);
  out.candidates = batch.candidates.size();
  for (const auto& c : batch.candidates) {
    const auto& ex = *by_id.at(c.example_id);
    auto verdict = filter_candidate(c, ex.gold_label, bounds);
    if (!verdict.accepted) {
      ++out.rejections[std::string(to_string(*verdict.reason))];
      continue;
    }
    out.records.push_back(make_record(c, ex, registry));
  }
  return out;
}

}  // namespace moralbench
