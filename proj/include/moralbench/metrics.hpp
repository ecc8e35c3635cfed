#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "moralbench/csv.hpp"
#include "moralbench/dataset.hpp"
#include "moralbench/error.hpp"
#include "moralbench/parser.hpp"

namespace moralbench {

struct EvalOutcome {
  std::string example_id;
  std::string strategy_id;
  std::string gold;
  std::optional<std::string> predicted;
  ParseStatus parse_status = ParseStatus::kClean;
};

struct ClassStats {
  std::size_t support = 0;
  std::size_t predicted = 0;
  std::size_t true_positive = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  /// confusion[gold][predicted], indices into `vocabulary`.
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::map<std::string, std::size_t> per_class_tp;
  std::vector<ClassStats> per_class;
  LabelVocabulary vocabulary;
  std::size_t n = 0;
};

namespace detail {

inline std::size_t label_index(const LabelVocabulary& vocab, const std::string& label) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == label) return i;
  }
  throw Error(ErrorCode::kMixedVocabulary, "label '" + label + "' not in vocabulary {" +
                                               vocab[0] + ", " + vocab[1] + "}");
}

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

/// Accuracy, macro- and weighted-F1 over a binary vocabulary.
///
/// A missing prediction is scored as wrong: it is booked in the confusion matrix as
/// the label opposite to gold. Per-class F1 uses 0/0 := 0; the macro average runs over
/// classes that occur in gold or predictions.
inline MetricsReport score(std::span<const EvalOutcome> outcomes, const LabelVocabulary& vocabulary) {
  if (outcomes.empty()) throw Error(ErrorCode::kEmptyInput, "no outcomes to score");
  if (vocabulary.size() != 2) throw Error(ErrorCode::kMixedVocabulary, "vocabulary must have 2 labels");

  MetricsReport r;
  r.vocabulary = vocabulary;
  r.n = outcomes.size();
  for (const auto& o : outcomes) {
    auto g = detail::label_index(vocabulary, o.gold);
    auto p = o.predicted ? detail::label_index(vocabulary, *o.predicted) : 1 - g;
    ++r.confusion[g][p];
  }

  r.per_class.resize(2);
  double macro_sum = 0.0;
  std::size_t macro_classes = 0;
  double weighted_sum = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& cs = r.per_class[c];
    cs.true_positive = r.confusion[c][c];
    cs.support = r.confusion[c][0] + r.confusion[c][1];
    cs.predicted = r.confusion[0][c] + r.confusion[1][c];
    cs.precision = detail::ratio(cs.true_positive, cs.predicted);
    cs.recall = detail::ratio(cs.true_positive, cs.support);
    cs.f1 = detail::ratio(2 * cs.true_positive, cs.support + cs.predicted);
    r.per_class_tp[vocabulary[c]] = cs.true_positive;
    if (cs.support + cs.predicted > 0) {
      macro_sum += cs.f1;
      ++macro_classes;
    }
    weighted_sum += cs.f1 * static_cast<double>(cs.support);
  }
  r.accuracy = detail::ratio(r.confusion[0][0] + r.confusion[1][1], r.n);
  r.macro_f1 = macro_classes ? macro_sum / static_cast<double>(macro_classes) : 0.0;
  r.weighted_f1 = weighted_sum / static_cast<double>(r.n);
  return r;
}

/// Per-strategy true-positive counts for each label.
inline std::map<std::string, std::map<std::string, std::size_t>> confusion_breakdown(
    std::span<const EvalOutcome> outcomes, const LabelVocabulary& vocabulary) {
  std::map<std::string, std::map<std::string, std::size_t>> table;
  for (const auto& o : outcomes) {
    auto& row = table[o.strategy_id];
    for (const auto& label : vocabulary) row.try_emplace(label, 0);
    detail::label_index(vocabulary, o.gold);
    if (o.predicted && *o.predicted == o.gold) ++row[o.gold];
  }
  return table;
}

inline void write_breakdown_csv(
    std::ostream& os, const std::map<std::string, std::map<std::string, std::size_t>>& table) {
  csv::write_row(os, {"strategy", "label", "true_positives"});
  for (const auto& [strategy, counts] : table) {
    for (const auto& [label, tp] : counts) csv::write_row(os, {strategy, label, std::to_string(tp)});
  }
}

}  // namespace moralbench
