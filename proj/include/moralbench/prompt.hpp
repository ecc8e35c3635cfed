#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "moralbench/assets.hpp"
#include "moralbench/dataset.hpp"
#include "moralbench/error.hpp"
#include "moralbench/io.hpp"
#include "moralbench/taxonomy.hpp"
#include "moralbench/text.hpp"

namespace moralbench {

enum class Placeholder { kScenario, kValue, kLabel, kFramework1, kFramework2 };

constexpr std::string_view placeholder_name(Placeholder p) {
  switch (p) {
    case Placeholder::kScenario: return "Scenario";
    case Placeholder::kValue: return "Value";
    case Placeholder::kLabel: return "Label";
    case Placeholder::kFramework1: return "framework_1";
    case Placeholder::kFramework2: return "framework_2";
  }
  return "";
}

inline std::optional<Placeholder> placeholder_from_name(std::string_view name) {
  for (auto p : {Placeholder::kScenario, Placeholder::kValue, Placeholder::kLabel,
                 Placeholder::kFramework1, Placeholder::kFramework2}) {
    if (placeholder_name(p) == name) return p;
  }
  return std::nullopt;
}

// The phrase in template instructions naming the two labels. Templates are written with
// the Value Kaleidoscope vocabulary and rewritten for other datasets.
inline constexpr std::string_view kTemplateLabelPhrase = "Support or Oppose";

struct PromptTemplate {
  std::string key;
  std::string body;
  std::set<Placeholder> required_placeholders;

  /// Scans `body` for `{Name}` placeholders. Any brace group that is not a known
  /// placeholder is rejected so typos in template assets surface at load time.
  static PromptTemplate from_text(std::string key, std::string body) {
    PromptTemplate t{std::move(key), std::move(body), {}};
    for (std::size_t pos = t.body.find('{'); pos != std::string::npos; pos = t.body.find('{', pos + 1)) {
      auto close = t.body.find('}', pos);
      if (close == std::string::npos) {
        throw Error(ErrorCode::kPlaceholderMismatch, t.key + ": unbalanced '{'");
      }
      auto name = std::string_view(t.body).substr(pos + 1, close - pos - 1);
      auto p = placeholder_from_name(name);
      if (!p) {
        throw Error(ErrorCode::kPlaceholderMismatch,
                    t.key + ": unknown placeholder '{" + std::string(name) + "}'");
      }
      t.required_placeholders.insert(*p);
    }
    return t;
  }

  std::size_t occurrences(Placeholder p) const {
    return text::count_occurrences(body, "{" + std::string(placeholder_name(p)) + "}");
  }
};

struct RenderedPrompt {
  std::string text;
  std::string strategy_id;
  std::string example_id;
  LabelVocabulary label_vocabulary;
};

/// Template assets keyed like "templates/cognitive.first_principles". Defaults to the
/// compiled-in set; a directory of `<key>.txt` files can override individual templates.
class TemplateRegistry {
 public:
  TemplateRegistry() {
    for (const auto& [key, body] : assets::all()) {
      if (key.starts_with("templates/")) {
        templates_.emplace(std::string(key), PromptTemplate::from_text(std::string(key), std::string(body)));
      }
    }
  }

  /// Replaces templates with any `templates/<id>.txt` found under `root`.
  void load_overrides(const std::filesystem::path& root) {
    for (auto& [key, tmpl] : templates_) {
      auto path = root / (key + ".txt");
      if (!std::filesystem::exists(path)) continue;
      auto body = io::read_file(path);
      if (!body.empty() && body.back() == '\n') body.pop_back();
      tmpl = PromptTemplate::from_text(key, std::move(body));
    }
  }

  const PromptTemplate& for_strategy(const PromptStrategy& s) const {
    auto it = templates_.find(s.template_key());
    if (it == templates_.end()) {
      throw Error(ErrorCode::kUnknownStrategy, "no template for strategy '" + s.id() + "'");
    }
    return it->second;
  }

  const std::map<std::string, PromptTemplate>& all() const { return templates_; }

  static const TemplateRegistry& builtin() {
    static const TemplateRegistry registry;
    return registry;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

namespace detail {

inline std::string substitute(const PromptTemplate& tmpl,
                              const std::map<Placeholder, std::string>& values,
                              const LabelVocabulary& vocabulary) {
  for (auto p : tmpl.required_placeholders) {
    if (!values.contains(p)) {
      throw Error(p == Placeholder::kLabel ? ErrorCode::kPlaceholderMismatch : ErrorCode::kMissingField,
                  tmpl.key + ": no value for {" + std::string(placeholder_name(p)) + "}");
    }
  }
  std::string body = tmpl.body;
  if (vocabulary.size() == 2) {
    body = text::replace_all(body, kTemplateLabelPhrase, vocabulary[0] + " or " + vocabulary[1]);
  }
  // Single pass: substituted values are never rescanned, so braces inside scenario
  // text pass through untouched.
  std::string out;
  out.reserve(body.size() + 512);
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      auto close = body.find('}', i);
      if (close != std::string::npos) {
        if (auto p = placeholder_from_name(std::string_view(body).substr(i + 1, close - i - 1))) {
          out += values.at(*p);
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(body[i++]);
  }
  return out;
}

inline std::map<Placeholder, std::string> example_values(const PromptStrategy& strategy,
                                                         const MoralExample& ex) {
  if (text::trim(ex.scenario).empty()) {
    throw Error(ErrorCode::kMissingField, "example '" + ex.id + "' has no scenario");
  }
  if (text::trim(ex.value_or_options).empty()) {
    throw Error(ErrorCode::kMissingField, "example '" + ex.id + "' has no value/options");
  }
  std::map<Placeholder, std::string> values{{Placeholder::kScenario, ex.scenario},
                                            {Placeholder::kValue, ex.value_or_options}};
  if (strategy.uses_frameworks()) {
    values.emplace(Placeholder::kFramework1, std::string(description_block(strategy.value_system)));
    values.emplace(Placeholder::kFramework2, std::string(description_line(strategy.ethical_theory)));
  }
  return values;
}

}  // namespace detail

/// Renders a zero-shot prompt. Distillation strategies need a gold label and go
/// through render_distill instead.
inline RenderedPrompt render(const PromptStrategy& strategy, const MoralExample& example,
                             const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  const auto& tmpl = registry.for_strategy(strategy);
  if (strategy.is_distill() || tmpl.required_placeholders.contains(Placeholder::kLabel)) {
    throw Error(ErrorCode::kPlaceholderMismatch,
                "strategy '" + strategy.id() + "' requires a {Label}; use render_distill");
  }
  auto values = detail::example_values(strategy, example);
  return {detail::substitute(tmpl, values, example.label_vocabulary), strategy.id(), example.id,
          example.label_vocabulary};
}

/// Renders a teacher prompt with the gold label filled in.
inline RenderedPrompt render_distill(const PromptStrategy& strategy, const MoralExample& example,
                                     const std::string& gold_label,
                                     const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  if (!strategy.is_distill()) {
    throw Error(ErrorCode::kWrongStrategyKind,
                "strategy '" + strategy.id() + "' is not a distillation strategy");
  }
  const auto& vocab = example.label_vocabulary;
  if (std::find(vocab.begin(), vocab.end(), gold_label) == vocab.end()) {
    throw Error(ErrorCode::kInvalidLabel,
                "label '" + gold_label + "' not in vocabulary of example '" + example.id + "'");
  }
  const auto& tmpl = registry.for_strategy(strategy);
  auto values = detail::example_values(strategy, example);
  values.emplace(Placeholder::kLabel, gold_label);
  return {detail::substitute(tmpl, values, vocab), strategy.id(), example.id, vocab};
}

}  // namespace moralbench
