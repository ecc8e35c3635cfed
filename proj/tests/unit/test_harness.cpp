#include <gtest/gtest.h>

#include <sstream>

#include "moralbench/harness.hpp"
#include "moralbench/io.hpp"
#include "support/fixtures.hpp"
#include "support/workspace.hpp"

namespace mb = moralbench;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

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

std::string read(const fs::path& p) { return mb::io::read_file(p); }

}  // namespace

TEST(Config, ParsesAndResolvesPaths) {
  auto dir = fixtures::fresh_dir("cfg_parse");
  auto j = fixtures::tiny_eval_config(dir, {"cognitive.first_principles"});
  j["endpoints"].push_back({{"name", "remote"},
                            {"base_url", "http://localhost:8000/v1"},
                            {"auth_env", "REMOTE_TOKEN"},
                            {"supports_seed", true}});
  j["params"] = {{"temperature", 0.0}};
  j["global_seed"] = 7;
  j["retry"] = {{"max_attempts", 3}, {"base_delay_ms", 10}};
  auto c = mb::parse_run_config(j, dir);
  ASSERT_EQ(c.manifests.size(), 1u);
  EXPECT_EQ(c.manifests[0].source_path, dir / "test.csv");
  EXPECT_EQ(c.output_dir, dir / "out");
  EXPECT_EQ(c.endpoints.size(), 2u);
  EXPECT_EQ(c.endpoint("remote").kind, "http");
  EXPECT_TRUE(c.endpoint("remote").endpoint.supports_seed);
  EXPECT_EQ(c.endpoint("mock-gold").mock_mode, "gold");
  EXPECT_EQ(c.params.temperature, 0.0);
  EXPECT_EQ(c.params.max_new_tokens, 2048u);
  EXPECT_EQ(c.params.seed, 7);
  EXPECT_EQ(c.retry.max_attempts, 3u);
  EXPECT_EQ(c.retry.base_delay.count(), 10);
  EXPECT_TRUE(c.strict_counts);
  EXPECT_EQ(error_code([&] { c.endpoint("missing"); }), mb::ErrorCode::kConfigError);
}

TEST(Config, SeedDefaultsTo42) {
  auto dir = fixtures::fresh_dir("cfg_seed");
  auto c = mb::parse_run_config(fixtures::tiny_eval_config(dir, {"baseline.label_only"}), dir);
  EXPECT_EQ(c.global_seed, 42);
  EXPECT_EQ(c.params.seed, 42);
}

TEST(Config, InvalidInputsAreConfigErrors) {
  auto dir = fixtures::fresh_dir("cfg_invalid");
  auto base = fixtures::tiny_eval_config(dir, {"baseline.label_only"});
  auto broken = [&](auto mutate) {
    auto j = base;
    mutate(j);
    return error_code([&] { mb::parse_run_config(j, dir); });
  };
  EXPECT_EQ(broken([](json& j) { j["endpoints"][0]["mock"]["mode"] = "psychic"; }), mb::ErrorCode::kConfigError);
  EXPECT_EQ(broken([](json& j) { j["endpoints"][0]["kind"] = "carrier-pigeon"; }), mb::ErrorCode::kConfigError);
  EXPECT_EQ(broken([](json& j) { j["endpoints"][0] = {{"name", "h"}}; }), mb::ErrorCode::kConfigError);
  EXPECT_EQ(broken([](json& j) { j["endpoints"][0]["max_in_flight"] = 0; }), mb::ErrorCode::kConfigError);
  EXPECT_EQ(broken([](json& j) { j["params"] = {{"temperature", -1.0}}; }), mb::ErrorCode::kConfigError);
  EXPECT_EQ(broken([](json& j) { j["strategies"] = "baseline.label_only"; }), mb::ErrorCode::kConfigError);

  auto path = dir / "bad.json";
  mb::io::write_file(path, "{ not json");
  EXPECT_EQ(error_code([&] { mb::load_run_config(path); }), mb::ErrorCode::kConfigError);
}

TEST(Config, StrategyRegistryClosure) {
  auto dir = fixtures::fresh_dir("cfg_strategies");
  auto c = mb::parse_run_config(fixtures::tiny_eval_config(dir, {"cognitive.first_principles"}), dir);
  EXPECT_EQ(mb::eval_strategies(c).size(), 1u);
  c.strategies = {"cognitive.vibes"};
  EXPECT_EQ(error_code([&] { mb::eval_strategies(c); }), mb::ErrorCode::kUnknownStrategy);
  c.strategies = {"distill.cognitive.first_principles"};
  EXPECT_EQ(error_code([&] { mb::eval_strategies(c); }), mb::ErrorCode::kConfigError);
  c.strategies = {};
  EXPECT_EQ(error_code([&] { mb::eval_strategies(c); }), mb::ErrorCode::kConfigError);
}

TEST(Config, UnknownStrategyFailsBeforeAnyOutput) {
  auto dir = fixtures::fresh_dir("cfg_preflight");
  auto c = mb::parse_run_config(fixtures::tiny_eval_config(dir, {"baseline.label_only", "cognitive.vibes"}), dir);
  std::ostringstream log;
  EXPECT_EQ(error_code([&] { mb::cmd_eval(c, {}, log); }), mb::ErrorCode::kUnknownStrategy);
  EXPECT_FALSE(fs::exists(c.output_dir));
}

TEST(ConfigHash, ChangesWithEveryField) {
  auto dir = fixtures::fresh_dir("cfg_hash");
  const auto base = mb::parse_run_config(fixtures::tiny_eval_config(dir, {"baseline.label_only"}), dir);
  const auto h = mb::config_hash(base);
  EXPECT_EQ(h, mb::config_hash(mb::parse_run_config(fixtures::tiny_eval_config(dir, {"baseline.label_only"}), dir)));

  std::vector<std::pair<std::string, std::function<void(mb::RunConfig&)>>> edits{
      {"strategies", [](auto& c) { c.strategies.push_back("baseline.reason_then_label"); }},
      {"temperature", [](auto& c) { c.params.temperature = 0.1; }},
      {"max_new_tokens", [](auto& c) { c.params.max_new_tokens = 16; }},
      {"seed", [](auto& c) { c.params.seed = 1; }},
      {"global_seed", [](auto& c) { c.global_seed = 1; }},
      {"output_dir", [](auto& c) { c.output_dir = "elsewhere"; }},
      {"strict_counts", [](auto& c) { c.strict_counts = false; }},
      {"retry", [](auto& c) { c.retry.max_attempts = 2; }},
      {"length_bounds", [](auto& c) { c.length_bounds.min_tokens = 5; }},
      {"templates_dir", [](auto& c) { c.templates_dir = "tmpl"; }},
      {"endpoint name", [](auto& c) { c.endpoints[0].endpoint.name = "other"; }},
      {"endpoint rate", [](auto& c) { c.endpoints[0].endpoint.requests_per_minute = 5; }},
      {"mock mode", [](auto& c) { c.endpoints[0].mock_mode = "constant"; }},
      {"manifest count", [](auto& c) { c.manifests[0].expected_count = 5; }},
      {"manifest path", [](auto& c) { c.manifests[0].source_path = "x.csv"; }},
  };
  std::set<std::string> seen{h};
  for (auto& [what, edit] : edits) {
    auto c = base;
    edit(c);
    auto changed = mb::config_hash(c);
    EXPECT_NE(changed, h) << what;
    seen.insert(changed);
  }
  EXPECT_EQ(seen.size(), edits.size() + 1);
}

TEST(Eval, CellAccountingAndGoldAccuracy) {
  auto dir = fixtures::fresh_dir("eval_cells");
  auto c = mb::parse_run_config(
      fixtures::tiny_eval_config(dir, {"baseline.label_only", "value_ethics.schwartz.care_ethics"}), dir);
  std::ostringstream log;
  auto summary = mb::cmd_eval(c, {}, log);
  EXPECT_EQ(summary.exit_code(), 0);
  ASSERT_EQ(summary.cells.size(), 2u);
  for (const auto& cell : summary.cells) {
    EXPECT_EQ(cell.metrics.n, 4u);
    EXPECT_EQ(cell.metrics.accuracy, 1.0);
    EXPECT_EQ(cell.completions, 4u);
    EXPECT_EQ(cell.status_histogram.at("Clean"), 4u);
  }
  for (const auto& f : fixtures::kReportFiles) EXPECT_TRUE(fs::exists(c.output_dir / f)) << f;

  auto agg = mb::csv::Table(mb::csv::parse(read(c.output_dir / "aggregate.csv")));
  ASSERT_EQ(agg.rows().size(), 2u);
  for (const auto& row : agg.rows()) {
    EXPECT_EQ(row[agg.column("n")], "4");
    EXPECT_EQ(std::stod(row[agg.column("accuracy")]), 1.0);
    EXPECT_EQ(row[agg.column("model")], "mock-gold");
    EXPECT_EQ(row[agg.column("dataset")], "VK");
  }
  auto per = mb::csv::Table(mb::csv::parse(read(c.output_dir / "per_example.csv")));
  EXPECT_EQ(per.rows().size(), 8u);

  auto manifest = json::parse(read(c.output_dir / "run_manifest.json"));
  EXPECT_EQ(manifest["config_hash"], mb::config_hash(c));
  EXPECT_EQ(manifest["cells"].size(), 2u);
  EXPECT_TRUE(manifest.contains("started_at"));
}

TEST(Eval, ConstantMockScoresHalf) {
  auto dir = fixtures::fresh_dir("eval_constant");
  auto j = fixtures::tiny_eval_config(dir, {"baseline.reason_then_label"}, "mock-const");
  j["endpoints"][0]["mock"] = {{"mode", "constant"}, {"label", "Support"}};
  auto summary = mb::cmd_eval(mb::parse_run_config(j, dir), {}, std::cerr);
  ASSERT_EQ(summary.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(summary.cells[0].metrics.accuracy, 0.5);
}

TEST(Eval, FailedRequestsMarkTheRunFailed) {
  auto dir = fixtures::fresh_dir("eval_script");
  auto j = fixtures::tiny_eval_config(dir, {"baseline.label_only"}, "mock-script");
  mb::io::write_file(dir / "script.json", "{}");
  j["endpoints"][0]["mock"] = {{"mode", "script"}, {"path", "script.json"}};
  std::ostringstream log;
  auto summary = mb::cmd_eval(mb::parse_run_config(j, dir), {}, log);
  EXPECT_EQ(summary.exit_code(), 1);
  ASSERT_EQ(summary.cells.size(), 1u);
  EXPECT_EQ(summary.cells[0].errors.size(), 4u);
  EXPECT_EQ(summary.cells[0].status_histogram.at("MissingLabel"), 4u);
  EXPECT_EQ(summary.cells[0].metrics.accuracy, 0.0);
}

TEST(Eval, ResumeProducesIdenticalReports) {
  auto dir = fixtures::fresh_dir("eval_resume");
  auto c = mb::parse_run_config(
      fixtures::tiny_eval_config(dir, {"baseline.label_only", "cognitive.first_principles"}, "mock-resume"), dir);
  std::ostringstream log;
  mb::cmd_eval(c, {}, log);
  std::map<std::string, std::string> first;
  for (const auto& f : fixtures::kReportFiles) first[f] = read(c.output_dir / f);
  auto first_manifest = fixtures::manifest_sans_timestamps(c.output_dir);

  auto again = mb::cmd_eval(c, {}, log);
  for (const auto& cell : again.cells) EXPECT_EQ(cell.from_transcript, 4u);
  for (const auto& f : fixtures::kReportFiles) {
    if (f == "run_manifest.json") continue;
    EXPECT_EQ(read(c.output_dir / f), first[f]) << f;
  }
  EXPECT_EQ(fixtures::manifest_sans_timestamps(c.output_dir), first_manifest);
}

TEST(Regress, SingleStrategyIsMissingReference) {
  auto dir = fixtures::fresh_dir("regress_single");
  mb::io::write_file(dir / "aggregate.csv",
                     "model,dataset,strategy,accuracy,macro_f1,weighted_f1,n\n"
                     "m1,VK,baseline.label_only,0.5,0.5,0.5,4\n"
                     "m2,VK,baseline.label_only,0.7,0.7,0.7,4\n");
  EXPECT_EQ(error_code([&] { mb::cmd_regress(dir / "aggregate.csv", "baseline.label_only", dir); }),
            mb::ErrorCode::kMissingReference);
}

TEST(Regress, WritesCoefficientsAndSummary) {
  auto dir = fixtures::fresh_dir("regress_fixture");
  auto result = mb::cmd_regress(MORALBENCH_TEST_DATA_DIR "/data/tables_accuracy.csv", "baseline.label_only", dir);
  EXPECT_TRUE(fs::exists(dir / "coefficients.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
  EXPECT_NEAR(result.r_squared, 0.7340567156045389, 1e-9);
}

namespace {

struct DistillWorkspace {
  fs::path dir;
  json config;
};

// 10 training rows; rows 3 and 8 answer with the wrong label.
DistillWorkspace distill_workspace(const std::string& name, const std::string& strategy_id) {
  auto dir = fixtures::fresh_dir(name);
  fixtures::write_vk_csv(dir / "train.csv", 10, "tr");
  json config = {{"splits", json::array({fixtures::split_json("train", "train.csv", 10)})},
                 {"endpoints", json::array({{{"name", "teacher"},
                                             {"kind", "mock"},
                                             {"mock", {{"mode", "script"}, {"path", "teacher.json"}}},
                                             {"requests_per_minute", 1e9}}})},
                 {"strategies", json::array({"baseline.label_only"})},
                 {"output_dir", "out"}};
  auto parsed = mb::parse_run_config(config, dir);
  auto examples = mb::load(parsed.manifests[0]);
  auto strategy = mb::parse_strategy(strategy_id);
  json script = json::object();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    auto label = (i == 2 || i == 7) ? fixtures::other_label(ex) : ex.gold_label;
    script[mb::prompt_hash(mb::render_distill(strategy, ex, ex.gold_label).text)] =
        fixtures::teacher_output(strategy, label);
  }
  mb::io::write_file(dir / "teacher.json", script.dump());
  return {dir, config};
}

}  // namespace

TEST(DistillCorpus, PlantedMismatchesAndDeterminism) {
  const std::string strategy = "distill.value_ethics.schwartz.care_ethics";
  auto ws = distill_workspace("distill_cmd", strategy);
  auto c = mb::parse_run_config(ws.config, ws.dir);
  std::ostringstream log;
  auto s = mb::cmd_distill_corpus(c, "teacher", strategy, {}, log);
  EXPECT_EQ(s.exit_code(), 0);
  EXPECT_EQ(s.examples, 10u);
  EXPECT_EQ(s.written, 8u);
  EXPECT_EQ(s.rejections, (std::map<std::string, std::size_t>{{"LabelMismatch", 2}}));
  EXPECT_EQ(s.corpus_path, c.output_dir / "distill" / ("teacher." + strategy + ".jsonl"));
  EXPECT_NE(log.str().find("LabelMismatch: 2"), std::string::npos);
  EXPECT_EQ(mb::read_corpus(s.corpus_path).size(), 8u);
  auto stats = json::parse(read(s.corpus_path.string() + ".stats.json"));
  EXPECT_EQ(stats["written"], 8);
  const auto first = read(s.corpus_path);

  // A fresh directory and a fresh transcript: the bytes come from generation, not the cache.
  auto ws2 = distill_workspace("distill_cmd_rerun", strategy);
  auto c2 = mb::parse_run_config(ws2.config, ws2.dir);
  auto s2 = mb::cmd_distill_corpus(c2, "teacher", strategy, {}, log);
  EXPECT_EQ(read(s2.corpus_path), first);
  // And a resumed rerun in place.
  mb::cmd_distill_corpus(c, "teacher", strategy, {}, log);
  EXPECT_EQ(read(s.corpus_path), first);
}

TEST(DistillCorpus, Preconditions) {
  auto ws = distill_workspace("distill_pre", "distill.cognitive.stakeholder");
  auto c = mb::parse_run_config(ws.config, ws.dir);
  std::ostringstream log;
  EXPECT_EQ(error_code([&] { mb::cmd_distill_corpus(c, "teacher", "cognitive.stakeholder", {}, log); }),
            mb::ErrorCode::kWrongStrategyKind);
  EXPECT_EQ(error_code([&] { mb::cmd_distill_corpus(c, "nobody", "distill.cognitive.stakeholder", {}, log); }),
            mb::ErrorCode::kConfigError);
  c.manifests.clear();
  EXPECT_EQ(error_code([&] { mb::cmd_distill_corpus(c, "teacher", "distill.cognitive.stakeholder", {}, log); }),
            mb::ErrorCode::kEmptyInput);
}

TEST(DistillCorpus, EmptyTrainFileIsEmptyInput) {
  auto ws = distill_workspace("distill_empty", "distill.cognitive.stakeholder");
  mb::io::write_file(ws.dir / "train.csv", "id,scenario,value,label\n");
  auto c = mb::parse_run_config(ws.config, ws.dir);
  c.strict_counts = false;
  std::ostringstream log;
  EXPECT_EQ(error_code([&] { mb::cmd_distill_corpus(c, "teacher", "distill.cognitive.stakeholder", {}, log); }),
            mb::ErrorCode::kEmptyInput);
}
