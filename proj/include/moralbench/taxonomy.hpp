#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moralbench/assets.hpp"
#include "moralbench/error.hpp"

namespace moralbench {

enum class ValueSystem { kMoralFoundations, kSchwartz, kHofstede, kRokeach };

enum class EthicalTheory {
  kDeontology,
  kUtilitarianism,
  kVirtueEthics,
  kCareEthics,
  kRightsEthics,
  kContractarianism,
  kEthicalPluralism,
  kPragmaticEthics,
};

enum class CognitiveStrategy {
  kStepByStep,
  kHarmBenefit,
  kStakeholder,
  kCounterfactual,
  kConsequentialist,
  kFirstPrinciples,
};

inline constexpr std::array kValueSystems = {
    ValueSystem::kMoralFoundations, ValueSystem::kSchwartz, ValueSystem::kHofstede,
    ValueSystem::kRokeach};

inline constexpr std::array kEthicalTheories = {
    EthicalTheory::kDeontology,       EthicalTheory::kUtilitarianism,
    EthicalTheory::kVirtueEthics,     EthicalTheory::kCareEthics,
    EthicalTheory::kRightsEthics,     EthicalTheory::kContractarianism,
    EthicalTheory::kEthicalPluralism, EthicalTheory::kPragmaticEthics};

inline constexpr std::array kCognitiveStrategies = {
    CognitiveStrategy::kStepByStep,     CognitiveStrategy::kHarmBenefit,
    CognitiveStrategy::kStakeholder,    CognitiveStrategy::kCounterfactual,
    CognitiveStrategy::kConsequentialist, CognitiveStrategy::kFirstPrinciples};

constexpr std::string_view slug(ValueSystem v) {
  switch (v) {
    case ValueSystem::kMoralFoundations: return "moral_foundations";
    case ValueSystem::kSchwartz: return "schwartz";
    case ValueSystem::kHofstede: return "hofstede";
    case ValueSystem::kRokeach: return "rokeach";
  }
  return "";
}

constexpr std::string_view slug(EthicalTheory t) {
  switch (t) {
    case EthicalTheory::kDeontology: return "deontology";
    case EthicalTheory::kUtilitarianism: return "utilitarianism";
    case EthicalTheory::kVirtueEthics: return "virtue_ethics";
    case EthicalTheory::kCareEthics: return "care_ethics";
    case EthicalTheory::kRightsEthics: return "rights_ethics";
    case EthicalTheory::kContractarianism: return "contractarianism";
    case EthicalTheory::kEthicalPluralism: return "ethical_pluralism";
    case EthicalTheory::kPragmaticEthics: return "pragmatic_ethics";
  }
  return "";
}

constexpr std::string_view slug(CognitiveStrategy s) {
  switch (s) {
    case CognitiveStrategy::kStepByStep: return "step_by_step";
    case CognitiveStrategy::kHarmBenefit: return "harm_benefit";
    case CognitiveStrategy::kStakeholder: return "stakeholder";
    case CognitiveStrategy::kCounterfactual: return "counterfactual";
    case CognitiveStrategy::kConsequentialist: return "consequentialist";
    case CognitiveStrategy::kFirstPrinciples: return "first_principles";
  }
  return "";
}

template <typename Enum, std::size_t N>
std::optional<Enum> from_slug(const std::array<Enum, N>& members, std::string_view s) {
  for (auto m : members) {
    if (slug(m) == s) return m;
  }
  return std::nullopt;
}

/// The framework bullet list injected as Framework_1.
inline std::string_view description_block(ValueSystem v) {
  return *assets::find("frameworks/value_system." + std::string(slug(v)));
}

/// The one-line definition injected as Framework_2.
inline std::string_view description_line(EthicalTheory t) {
  return *assets::find("frameworks/ethical_theory." + std::string(slug(t)));
}

/// Identifier of the template asset backing a cognitive strategy.
inline std::string template_id(CognitiveStrategy s) {
  return "cognitive." + std::string(slug(s));
}

using ValueEthicsPair = std::pair<ValueSystem, EthicalTheory>;

/// All value-system x ethical-theory combinations, value systems outer.
inline std::vector<ValueEthicsPair> enumerate_value_ethics_pairs() {
  std::vector<ValueEthicsPair> pairs;
  pairs.reserve(kValueSystems.size() * kEthicalTheories.size());
  for (auto v : kValueSystems) {
    for (auto t : kEthicalTheories) pairs.emplace_back(v, t);
  }
  return pairs;
}

constexpr ValueEthicsPair default_scaffold() {
  return {ValueSystem::kSchwartz, EthicalTheory::kCareEthics};
}

constexpr CognitiveStrategy default_cognitive() { return CognitiveStrategy::kFirstPrinciples; }

/// A node of the prompting taxonomy. Only the fields relevant to `kind` are meaningful;
/// construct through the named factories so the rest stay at their defaults.
struct PromptStrategy {
  enum class Kind {
    kWithoutReasoning,
    kWithReasoning,
    kValueEthics,
    kCognitive,
    kDistillValueEthics,
    kDistillCognitive,
  };

  Kind kind = Kind::kWithoutReasoning;
  ValueSystem value_system = ValueSystem::kMoralFoundations;
  EthicalTheory ethical_theory = EthicalTheory::kDeontology;
  CognitiveStrategy cognitive = CognitiveStrategy::kStepByStep;

  static constexpr PromptStrategy without_reasoning() { return {Kind::kWithoutReasoning}; }
  static constexpr PromptStrategy with_reasoning() { return {Kind::kWithReasoning}; }
  static constexpr PromptStrategy value_ethics(ValueSystem v, EthicalTheory t) {
    return {Kind::kValueEthics, v, t};
  }
  static constexpr PromptStrategy cognitive_strategy(CognitiveStrategy s) {
    return {Kind::kCognitive, ValueSystem::kMoralFoundations, EthicalTheory::kDeontology, s};
  }
  static constexpr PromptStrategy distill_value_ethics(ValueSystem v, EthicalTheory t) {
    return {Kind::kDistillValueEthics, v, t};
  }
  static constexpr PromptStrategy distill_cognitive(CognitiveStrategy s) {
    return {Kind::kDistillCognitive, ValueSystem::kMoralFoundations, EthicalTheory::kDeontology,
            s};
  }

  constexpr bool is_distill() const {
    return kind == Kind::kDistillValueEthics || kind == Kind::kDistillCognitive;
  }
  constexpr bool uses_frameworks() const {
    return kind == Kind::kValueEthics || kind == Kind::kDistillValueEthics;
  }
  constexpr bool is_cognitive() const {
    return kind == Kind::kCognitive || kind == Kind::kDistillCognitive;
  }

  /// Dotted identifier used in CLI flags, manifests and report columns.
  std::string id() const {
    switch (kind) {
      case Kind::kWithoutReasoning: return "baseline.label_only";
      case Kind::kWithReasoning: return "baseline.reason_then_label";
      case Kind::kValueEthics:
        return "value_ethics." + std::string(slug(value_system)) + "." +
               std::string(slug(ethical_theory));
      case Kind::kCognitive: return "cognitive." + std::string(slug(cognitive));
      case Kind::kDistillValueEthics:
        return "distill.value_ethics." + std::string(slug(value_system)) + "." +
               std::string(slug(ethical_theory));
      case Kind::kDistillCognitive: return "distill.cognitive." + std::string(slug(cognitive));
    }
    return {};
  }

  /// Key of the template asset this strategy renders through. Value/ethics strategies
  /// share one template; the frameworks are substituted in.
  std::string template_key() const {
    switch (kind) {
      case Kind::kWithoutReasoning:
      case Kind::kWithReasoning:
      case Kind::kCognitive:
        return "templates/" + id();
      case Kind::kValueEthics: return "templates/value_ethics";
      case Kind::kDistillValueEthics: return "templates/distill.value_ethics";
      case Kind::kDistillCognitive: return "templates/distill.cognitive." + std::string(slug(cognitive));
    }
    return {};
  }

  /// The zero-shot strategy a distillation strategy mirrors; identity for zero-shot kinds.
  constexpr PromptStrategy zero_shot_twin() const {
    switch (kind) {
      case Kind::kDistillValueEthics: return value_ethics(value_system, ethical_theory);
      case Kind::kDistillCognitive: return cognitive_strategy(cognitive);
      default: return *this;
    }
  }

  friend constexpr bool operator==(const PromptStrategy& a, const PromptStrategy& b) {
    if (a.kind != b.kind) return false;
    if (a.uses_frameworks()) {
      return a.value_system == b.value_system && a.ethical_theory == b.ethical_theory;
    }
    if (a.is_cognitive()) return a.cognitive == b.cognitive;
    return true;
  }
};

/// Every strategy in the taxonomy, in declaration order:
/// baselines, value/ethics pairs, cognitive, then the distillation variants.
inline std::vector<PromptStrategy> all_strategies() {
  std::vector<PromptStrategy> out{PromptStrategy::without_reasoning(),
                                  PromptStrategy::with_reasoning()};
  for (auto [v, t] : enumerate_value_ethics_pairs()) out.push_back(PromptStrategy::value_ethics(v, t));
  for (auto s : kCognitiveStrategies) out.push_back(PromptStrategy::cognitive_strategy(s));
  for (auto [v, t] : enumerate_value_ethics_pairs()) {
    out.push_back(PromptStrategy::distill_value_ethics(v, t));
  }
  for (auto s : kCognitiveStrategies) out.push_back(PromptStrategy::distill_cognitive(s));
  return out;
}

inline std::optional<PromptStrategy> try_parse_strategy(std::string_view id) {
  auto split = [](std::string_view s) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      auto dot = s.find('.', start);
      parts.push_back(s.substr(start, dot == std::string_view::npos ? s.npos : dot - start));
      if (dot == std::string_view::npos) break;
      start = dot + 1;
    }
    return parts;
  };
  auto parts = split(id);
  bool distill = !parts.empty() && parts.front() == "distill";
  if (distill) parts.erase(parts.begin());
  if (parts.empty()) return std::nullopt;

  if (!distill && parts.size() == 2 && parts[0] == "baseline") {
    if (parts[1] == "label_only") return PromptStrategy::without_reasoning();
    if (parts[1] == "reason_then_label") return PromptStrategy::with_reasoning();
    return std::nullopt;
  }
  if (parts.size() == 3 && parts[0] == "value_ethics") {
    auto v = from_slug(kValueSystems, parts[1]);
    auto t = from_slug(kEthicalTheories, parts[2]);
    if (!v || !t) return std::nullopt;
    return distill ? PromptStrategy::distill_value_ethics(*v, *t)
                   : PromptStrategy::value_ethics(*v, *t);
  }
  if (parts.size() == 2 && parts[0] == "cognitive") {
    auto s = from_slug(kCognitiveStrategies, parts[1]);
    if (!s) return std::nullopt;
    return distill ? PromptStrategy::distill_cognitive(*s) : PromptStrategy::cognitive_strategy(*s);
  }
  return std::nullopt;
}

inline PromptStrategy parse_strategy(std::string_view id) {
  if (auto s = try_parse_strategy(id)) return *s;
  throw Error(ErrorCode::kUnknownStrategy, "unknown strategy id '" + std::string(id) + "'");
}

}  // namespace moralbench
