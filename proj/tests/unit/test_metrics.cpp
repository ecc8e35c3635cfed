#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "moralbench/metrics.hpp"
#include "support/oracles.hpp"

namespace mb = moralbench;

namespace {

const mb::LabelVocabulary kVK{"Support", "Oppose"};

std::vector<mb::EvalOutcome> outcomes(const std::vector<std::string>& gold,
                                      const std::vector<std::optional<std::string>>& pred,
                                      const std::string& strategy = "baseline.label_only") {
  std::vector<mb::EvalOutcome> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.push_back({"e" + std::to_string(i), strategy, gold[i], pred[i],
                   pred[i] ? mb::ParseStatus::kClean : mb::ParseStatus::kMissingLabel});
  }
  return out;
}

template <class Fn>
mb::ErrorCode error_code(Fn&& fn) {
  try {
    fn();
  } catch (const mb::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return mb::ErrorCode::kIOError;
}

}  // namespace

TEST(Score, MacroWorkedExample) {
  auto r = mb::score(outcomes({"Support", "Support", "Oppose", "Oppose"}, {"Support", "Oppose", "Oppose", "Oppose"}), kVK);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_NEAR(r.per_class[0].f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.per_class[1].f1, 4.0 / 5.0, 1e-15);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, 1e-15);
  EXPECT_NEAR(r.macro_f1, 0.733333333333, 1e-9);
}

TEST(Score, WeightedWorkedExample) {
  auto r = mb::score(outcomes({"Support", "Support", "Support", "Oppose"}, {"Support", "Support", "Oppose", "Oppose"}), kVK);
  EXPECT_NEAR(r.per_class[0].f1, 0.8, 1e-15);
  EXPECT_NEAR(r.per_class[1].f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.weighted_f1, (3 * 0.8 + 1 * (2.0 / 3.0)) / 4, 1e-15);
  EXPECT_NEAR(r.weighted_f1, 0.766666666667, 1e-9);
}

TEST(Score, Identity) {
  for (std::size_t n : {1u, 2u, 7u, 50u}) {
    std::vector<std::string> gold;
    for (std::size_t i = 0; i < n; ++i) gold.push_back(kVK[i % 3 == 0]);
    std::vector<std::optional<std::string>> pred(gold.begin(), gold.end());
    auto r = mb::score(outcomes(gold, pred), kVK);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);
    EXPECT_EQ(r.weighted_f1, 1.0);
  }
}

TEST(Score, MissingPredictionIsWrongAndKeepsN) {
  auto r = mb::score(outcomes({"Support", "Oppose", "Oppose"}, {std::nullopt, "Oppose", std::nullopt}), kVK);
  EXPECT_EQ(r.n, 3u);
  EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-15);
  // Booked as the opposite label: Support->Oppose and Oppose->Support.
  EXPECT_EQ(r.confusion[0][1], 1u);
  EXPECT_EQ(r.confusion[1][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
}

TEST(Score, ConfusionInvariants) {
  auto r = mb::score(outcomes({"Support", "Oppose", "Support", "Support"}, {"Oppose", "Oppose", "Support", std::nullopt}), kVK);
  std::size_t sum = 0;
  for (auto& row : r.confusion) {
    for (auto c : row) sum += c;
  }
  EXPECT_EQ(sum, r.n);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) / r.n);
  EXPECT_EQ(r.per_class_tp.at("Support"), 1u);
  EXPECT_EQ(r.per_class_tp.at("Oppose"), 1u);
}

TEST(Score, ZeroOverZeroIsZero) {
  // Nothing is predicted Oppose and nothing is gold Oppose except one: precision 0/0.
  auto r = mb::score(outcomes({"Support", "Oppose"}, {"Support", "Support"}), kVK);
  EXPECT_EQ(r.per_class[1].precision, 0.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Score, Errors) {
  EXPECT_EQ(error_code([] { mb::score({}, kVK); }), mb::ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code([] { mb::score(outcomes({"Reasonable"}, {"Reasonable"}), kVK); }),
            mb::ErrorCode::kMixedVocabulary);
  EXPECT_EQ(error_code([] { mb::score(outcomes({"Support"}, {"Reasonable"}), kVK); }),
            mb::ErrorCode::kMixedVocabulary);
}

TEST(Score, MatchesBruteForceOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 50;
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(kVK[rng() % 2]);
      auto roll = rng() % 10;
      pred.push_back(roll == 0 ? std::nullopt : std::optional<std::string>(kVK[rng() % 2]));
    }
    auto r = mb::score(outcomes(gold, pred), kVK);
    auto o = oracle::brute_force_scores(gold, pred, kVK);
    EXPECT_NEAR(r.accuracy, o.accuracy, 1e-12);
    EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-12);
    EXPECT_NEAR(r.weighted_f1, o.weighted_f1, 1e-12);
  }
}

TEST(Score, PermutationInvariant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (int i = 0; i < 30; ++i) {
      gold.push_back(kVK[rng() % 2]);
      pred.push_back(rng() % 8 ? std::optional<std::string>(kVK[rng() % 2]) : std::nullopt);
    }
    auto base = outcomes(gold, pred);
    auto shuffled = base;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto a = mb::score(base, kVK), b = mb::score(shuffled, kVK);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.macro_f1, b.macro_f1);
    EXPECT_EQ(a.weighted_f1, b.weighted_f1);
    EXPECT_EQ(a.confusion, b.confusion);
  }
}

TEST(Score, EqualSupportsMakeWeightedEqualMacro) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (int i = 0; i < 20; ++i) {
      gold.push_back(kVK[i % 2]);
      pred.push_back(kVK[rng() % 2]);
    }
    auto r = mb::score(outcomes(gold, pred), kVK);
    EXPECT_NEAR(r.weighted_f1, r.macro_f1, 1e-15);
  }
}

TEST(Breakdown, SpecExamples) {
  auto same = mb::confusion_breakdown(outcomes({"Support", "Oppose"}, {"Support", "Oppose"}), kVK);
  EXPECT_EQ(same.at("baseline.label_only").at("Support"), 1u);
  EXPECT_EQ(same.at("baseline.label_only").at("Oppose"), 1u);
  auto swapped = mb::confusion_breakdown(outcomes({"Support", "Oppose"}, {"Oppose", "Support"}), kVK);
  EXPECT_EQ(swapped.at("baseline.label_only").at("Support"), 0u);
  EXPECT_EQ(swapped.at("baseline.label_only").at("Oppose"), 0u);
}

TEST(Breakdown, MatchesGroupByOracle) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> strategies{"baseline.label_only", "cognitive.first_principles"};
  std::vector<mb::EvalOutcome> all;
  std::map<std::string, std::map<std::string, std::size_t>> expected;
  for (int i = 0; i < 200; ++i) {
    const auto& s = strategies[rng() % 2];
    auto g = kVK[rng() % 2];
    std::optional<std::string> p = rng() % 6 ? std::optional<std::string>(kVK[rng() % 2]) : std::nullopt;
    all.push_back({"e" + std::to_string(i), s, g, p, mb::ParseStatus::kClean});
    expected[s].try_emplace("Support", 0);
    expected[s].try_emplace("Oppose", 0);
    if (p == g) ++expected[s][g];
  }
  EXPECT_EQ(mb::confusion_breakdown(all, kVK), expected);
  // Per-partition identity: each strategy's counts equal score() on that partition alone.
  for (const auto& s : strategies) {
    std::vector<mb::EvalOutcome> part;
    std::copy_if(all.begin(), all.end(), std::back_inserter(part), [&](const auto& o) { return o.strategy_id == s; });
    EXPECT_EQ(mb::score(part, kVK).per_class_tp, expected[s]);
  }
  std::ostringstream csv;
  mb::write_breakdown_csv(csv, expected);
  EXPECT_TRUE(csv.str().starts_with("strategy,label,true_positives\n"));
}
