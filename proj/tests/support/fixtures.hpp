#pragma once

// Shared synthetic inputs for the unit and acceptance tests.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "moralbench/dataset.hpp"
#include "moralbench/distill.hpp"
#include "moralbench/gateway.hpp"
#include "moralbench/responses.hpp"

namespace fixtures {

namespace mb = moralbench;

inline mb::MoralExample vk_example(int i, std::string gold = "Support") {
  mb::MoralExample ex;
  ex.id = "vk-" + std::to_string(i);
  ex.dataset = mb::Dataset::kVK;
  ex.scenario = "Scenario " + std::to_string(i) + ": a neighbour asks to borrow a ladder late at night.";
  ex.value_or_options = "Helpfulness toward neighbours";
  ex.gold_label = std::move(gold);
  ex.label_vocabulary = mb::label_vocabulary(mb::Dataset::kVK);
  return ex;
}

inline std::vector<mb::MoralExample> vk_examples(int n) {
  std::vector<mb::MoralExample> out;
  for (int i = 0; i < n; ++i) out.push_back(vk_example(i, i % 3 == 0 ? "Oppose" : "Support"));
  return out;
}

inline const char* kTeacherFiller =
    "Weighing the scenario against the stated value shows how the obligation to help a neighbour "
    "interacts with the inconvenience and risk of the request at that hour of the night";

inline std::string other_label(const mb::MoralExample& ex) {
  return ex.label_vocabulary[0] == ex.gold_label ? ex.label_vocabulary[1] : ex.label_vocabulary[0];
}

/// A well-formed teacher generation agreeing with gold.
inline std::string teacher_output(const mb::PromptStrategy& s, const std::string& label) {
  return mb::compliant_response(s, label, kTeacherFiller);
}

/// Drops the closing tag of the last required section.
inline std::string malformed(std::string text, const mb::PromptStrategy& s) {
  auto close = "</" + mb::required_tags(s).back() + ">";
  auto pos = text.find(close);
  if (pos != std::string::npos) text.erase(pos, close.size());
  return text;
}

enum class Defect { kNone, kLabelMismatch, kMalformedTags };

/// Every tenth example from offset 3 is a label mismatch, from offset 7 malformed.
inline Defect planted_defect(std::size_t i) {
  if (i % 10 == 3) return Defect::kLabelMismatch;
  if (i % 10 == 7) return Defect::kMalformedTags;
  return Defect::kNone;
}

inline std::string planted_output(const mb::MoralExample& ex, const mb::PromptStrategy& s, Defect d) {
  switch (d) {
    case Defect::kLabelMismatch: return teacher_output(s, other_label(ex));
    case Defect::kMalformedTags: return malformed(teacher_output(s, ex.gold_label), s);
    case Defect::kNone: break;
  }
  return teacher_output(s, ex.gold_label);
}

/// Scripted teacher answering each distill prompt with the given output.
inline std::shared_ptr<mb::MockTransport> scripted_teacher(const std::vector<mb::MoralExample>& examples,
                                                           const mb::PromptStrategy& s,
                                                           const std::vector<std::string>& outputs) {
  std::map<std::string, std::string> table;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto p = mb::render_distill(s, examples[i], examples[i].gold_label);
    table[mb::prompt_hash(p.text)] = outputs[i];
  }
  return mb::MockTransport::scripted(std::move(table));
}

inline mb::ModelEndpoint fast_endpoint(const std::string& name, std::size_t max_in_flight = 4) {
  mb::ModelEndpoint e;
  e.name = name;
  e.max_in_flight = max_in_flight;
  e.requests_per_minute = 1e9;
  return e;
}

inline mb::RetryPolicy no_sleep(std::size_t attempts = 6) {
  mb::RetryPolicy p;
  p.max_attempts = attempts;
  p.sleep = [](std::chrono::milliseconds) {};
  return p;
}

}  // namespace fixtures
