#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moralbench/csv.hpp"
#include "moralbench/dataset.hpp"
#include "moralbench/distill.hpp"
#include "moralbench/error.hpp"
#include "moralbench/gateway.hpp"
#include "moralbench/io.hpp"
#include "moralbench/metrics.hpp"
#include "moralbench/ols.hpp"
#include "moralbench/parser.hpp"
#include "moralbench/prompt.hpp"
#include "moralbench/responses.hpp"
#include "moralbench/taxonomy.hpp"

namespace moralbench {

/// How an endpoint is served: a real HTTP server, or one of the built-in mocks.
struct EndpointConfig {
  ModelEndpoint endpoint;
  std::string kind = "http";  // http | mock
  std::string mock_mode;      // gold | constant | script
  std::string mock_label;     // constant mode
  std::filesystem::path mock_script;
};

struct RunConfig {
  std::vector<SplitManifest> manifests;
  std::vector<EndpointConfig> endpoints;
  std::vector<std::string> strategies;
  GenerationParams params;
  std::filesystem::path output_dir = "runs";
  bool strict_counts = true;
  long long global_seed = 42;
  RetryPolicy retry;
  LengthBounds length_bounds;
  std::filesystem::path templates_dir;

  const EndpointConfig& endpoint(const std::string& name) const {
    for (const auto& e : endpoints) {
      if (e.endpoint.name == name) return e;
    }
    throw Error(ErrorCode::kConfigError, "no endpoint named '" + name + "' in config");
  }
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

/// Parses a run config. Relative paths resolve against `base_dir` (the config file's folder).
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("manifest")) {
      c.manifests = read_manifest(resolve(base_dir, j.at("manifest").get<std::string>()));
    }
    if (j.contains("splits")) {
      for (const auto& s : j.at("splits")) c.manifests.push_back(split_manifest_from_json(s, base_dir));
    }
    for (const auto& e : j.value("endpoints", nlohmann::json::array())) {
      EndpointConfig ec;
      auto& ep = ec.endpoint;
      ep.name = e.at("name").get<std::string>();
      ep.model = e.value("model", std::string{});
      ep.base_url = e.value("base_url", std::string{});
      ep.max_in_flight = e.value("max_in_flight", std::size_t{4});
      ep.requests_per_minute = e.value("requests_per_minute", 60.0);
      ep.auth_env = e.value("auth_env", std::string{});
      ep.supports_seed = e.value("supports_seed", false);
      ep.timeout_seconds = e.value("timeout_seconds", 300.0);
      ec.kind = e.value("kind", std::string("http"));
      if (ec.kind == "mock") {
        const auto& m = e.at("mock");
        ec.mock_mode = m.at("mode").get<std::string>();
        ec.mock_label = m.value("label", std::string{});
        if (m.contains("path")) ec.mock_script = resolve(base_dir, m.at("path").get<std::string>());
        if (ec.mock_mode != "gold" && ec.mock_mode != "constant" && ec.mock_mode != "script") {
          throw Error(ErrorCode::kConfigError, ep.name + ": unknown mock mode '" + ec.mock_mode + "'");
        }
      } else if (ec.kind != "http") {
        throw Error(ErrorCode::kConfigError, ep.name + ": unknown endpoint kind '" + ec.kind + "'");
      } else if (ep.base_url.empty()) {
        throw Error(ErrorCode::kConfigError, ep.name + ": http endpoint needs base_url");
      }
      ep.validate();
      c.endpoints.push_back(std::move(ec));
    }
    c.strategies = j.value("strategies", std::vector<std::string>{});
    if (j.contains("params")) {
      const auto& p = j.at("params");
      c.params.temperature = p.value("temperature", c.params.temperature);
      c.params.max_new_tokens = p.value("max_new_tokens", c.params.max_new_tokens);
      if (p.contains("seed")) {
        c.params.seed = p.at("seed").is_null() ? std::nullopt
                                               : std::optional<long long>(p.at("seed").get<long long>());
      }
    }
    c.params.validate();
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("runs")));
    c.strict_counts = j.value("strict_counts", true);
    c.global_seed = j.value("global_seed", 42LL);
    if (!j.contains("params") || !j.at("params").contains("seed")) c.params.seed = c.global_seed;
    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", 500LL));
      c.retry.max_delay = std::chrono::milliseconds(r.value("max_delay_ms", 30000LL));
    }
    if (j.contains("length_bounds")) {
      const auto& b = j.at("length_bounds");
      c.length_bounds.min_tokens = b.value("min_tokens", c.length_bounds.min_tokens);
      c.length_bounds.max_tokens = b.value("max_tokens", c.length_bounds.max_tokens);
    }
    if (j.contains("templates_dir")) c.templates_dir = resolve(base_dir, j.at("templates_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

/// Canonical form of every effective setting. Secrets are left out; the env var name is kept.
inline nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json j;
  for (const auto& m : c.manifests) {
    nlohmann::json jm;
    jm["dataset"] = to_string(m.dataset);
    jm["split"] = to_string(m.split);
    jm["expected_count"] = m.expected_count;
    jm["path"] = m.source_path.lexically_normal().string();
    jm["columns"] = {{"id", m.columns.id},
                     {"scenario", m.columns.scenario},
                     {"value", m.columns.value},
                     {"options", m.columns.options},
                     {"label", m.columns.label},
                     {"annotator_description", m.columns.annotator_description}};
    jm["label_map"] = m.label_map;
    jm["vocabulary"] = m.effective_vocabulary();
    if (m.sample) jm["sample"] = {{"size", m.sample->size}, {"seed", m.sample->seed}};
    j["manifests"].push_back(std::move(jm));
  }
  for (const auto& ec : c.endpoints) {
    const auto& e = ec.endpoint;
    j["endpoints"].push_back({{"name", e.name},
                              {"model", e.model},
                              {"base_url", e.base_url},
                              {"max_in_flight", e.max_in_flight},
                              {"requests_per_minute", e.requests_per_minute},
                              {"auth_env", e.auth_env},
                              {"supports_seed", e.supports_seed},
                              {"timeout_seconds", e.timeout_seconds},
                              {"kind", ec.kind},
                              {"mock_mode", ec.mock_mode},
                              {"mock_label", ec.mock_label},
                              {"mock_script", ec.mock_script.lexically_normal().string()}});
  }
  j["strategies"] = c.strategies;
  j["params"] = {{"temperature", c.params.temperature}, {"max_new_tokens", c.params.max_new_tokens}};
  j["params"]["seed"] = c.params.seed ? nlohmann::json(*c.params.seed) : nlohmann::json();
  j["output_dir"] = c.output_dir.lexically_normal().string();
  j["strict_counts"] = c.strict_counts;
  j["global_seed"] = c.global_seed;
  j["retry"] = {{"max_attempts", c.retry.max_attempts},
                {"base_delay_ms", c.retry.base_delay.count()},
                {"max_delay_ms", c.retry.max_delay.count()}};
  j["length_bounds"] = {{"min_tokens", c.length_bounds.min_tokens}, {"max_tokens", c.length_bounds.max_tokens}};
  j["templates_dir"] = c.templates_dir.lexically_normal().string();
  return j;
}

inline std::string config_hash(const RunConfig& c) { return text::content_hash(canonical_json(c).dump()); }

/// Response table the mock endpoints answer from, filled by the harness before each batch.
class MockScript {
 public:
  void set(const std::string& hash, std::string response) {
    std::lock_guard lock(mu_);
    table_[hash] = std::move(response);
  }
  std::optional<std::string> get(const std::string& hash) const {
    std::lock_guard lock(mu_);
    if (auto it = table_.find(hash); it != table_.end()) return it->second;
    return std::nullopt;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> table_;
};

using TransportFactory = std::function<std::shared_ptr<Transport>(const EndpointConfig&)>;

struct EvalCell {
  std::string model;
  std::string dataset;
  std::string strategy;
  std::size_t completions = 0;
  std::size_t from_transcript = 0;
  std::vector<ItemError> errors;
  std::map<std::string, std::size_t> status_histogram;
  MetricsReport metrics;
};

struct EvalSummary {
  std::vector<EvalCell> cells;
  bool any_cell_failed = false;
  int exit_code() const { return any_cell_failed ? 1 : 0; }
};

namespace detail {

// Long enough to clear the default reasoning length bounds.
inline constexpr std::string_view kMockReasoning =
    "Considering the scenario in light of the stated value, the actor's choice affects the people "
    "involved, the obligations they hold toward one another, and the likely consequences for "
    "everyone concerned, so the decision follows from weighing these considerations together.";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct MockEndpoint {
  std::shared_ptr<MockScript> script = std::make_shared<MockScript>();
  std::shared_ptr<Transport> transport;
};

inline MockEndpoint make_mock(const EndpointConfig& ec) {
  MockEndpoint m;
  if (ec.mock_mode == "script") {
    auto j = nlohmann::json::parse(io::read_file(ec.mock_script));
    for (const auto& [hash, text] : j.items()) m.script->set(hash, text.get<std::string>());
  }
  m.transport = std::make_shared<MockTransport>([script = m.script](const std::string& body) -> HttpReply {
    if (auto text = script->get(prompt_hash(request_prompt(body)))) {
      return {200, MockTransport::chat_body(*text), {}};
    }
    return {404, R"({"error":"unscripted prompt"})", {}};
  });
  return m;
}

// Gold and constant mocks answer in the strategy's own format; script mocks answer as scripted.
inline void prime_mock(const EndpointConfig& ec, MockScript& script, const PromptStrategy& strategy,
                       const std::vector<RenderedPrompt>& prompts, const std::vector<const MoralExample*>& examples) {
  if (ec.mock_mode == "script") return;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& label = ec.mock_mode == "gold" ? examples[i]->gold_label : ec.mock_label;
    script.set(prompt_hash(prompts[i].text), compliant_response(strategy, label, kMockReasoning));
  }
}

inline std::vector<std::vector<MoralExample>> load_splits(const RunConfig& config, Split split,
                                                          std::vector<const SplitManifest*>* which) {
  std::vector<std::vector<MoralExample>> out;
  for (const auto& m : config.manifests) {
    if (m.split != split) continue;
    out.push_back(load(m, config.strict_counts));
    which->push_back(&m);
  }
  return out;
}

}  // namespace detail

/// Validates strategy ids for zero-shot evaluation: known ids only, no distillation variants.
inline std::vector<PromptStrategy> eval_strategies(const RunConfig& config) {
  if (config.strategies.empty()) throw Error(ErrorCode::kConfigError, "no strategies configured");
  std::vector<PromptStrategy> out;
  for (const auto& id : config.strategies) {
    auto s = parse_strategy(id);
    if (s.is_distill()) {
      throw Error(ErrorCode::kConfigError,
                  "'" + id + "' is a distillation strategy; evaluation runs zero-shot only");
    }
    out.push_back(s);
  }
  return out;
}

/// render -> complete -> parse -> score for every (model, dataset, strategy) cell, then
/// per-example, aggregate, breakdown and manifest reports under config.output_dir.
inline EvalSummary cmd_eval(const RunConfig& config, const TransportFactory& http_factory = {},
                            std::ostream& log = std::cerr) {
  const auto started = utc_timestamp();
  auto strategies = eval_strategies(config);
  if (config.endpoints.empty()) throw Error(ErrorCode::kConfigError, "no endpoints configured");
  TemplateRegistry registry;
  if (!config.templates_dir.empty()) registry.load_overrides(config.templates_dir);

  std::vector<const SplitManifest*> manifests;
  auto splits = detail::load_splits(config, Split::kTest, &manifests);
  if (splits.empty()) throw Error(ErrorCode::kConfigError, "no test splits in manifest");

  std::filesystem::create_directories(config.output_dir);
  auto transcript = std::make_shared<TranscriptLog>(config.output_dir / "transcript.jsonl");

  EvalSummary summary;
  std::ostringstream per_example;
  csv::write_row(per_example, {"model", "dataset", "id", "strategy", "gold", "predicted", "parse_status"});

  for (const auto& ec : config.endpoints) {
    detail::MockEndpoint mock;
    std::shared_ptr<Transport> transport;
    if (ec.kind == "mock") {
      mock = detail::make_mock(ec);
      transport = mock.transport;
    } else {
      if (!http_factory) throw Error(ErrorCode::kConfigError, "no HTTP transport available");
      transport = http_factory(ec);
    }
    Gateway gateway(transport, config.retry, transcript);

    for (std::size_t d = 0; d < splits.size(); ++d) {
      const auto& examples = splits[d];
      const auto dataset = std::string(to_string(manifests[d]->dataset));
      if (examples.empty()) continue;
      for (const auto& strategy : strategies) {
        EvalCell cell;
        cell.model = ec.endpoint.name;
        cell.dataset = dataset;
        cell.strategy = strategy.id();
        std::vector<RenderedPrompt> prompts;
        std::vector<const MoralExample*> refs;
        for (const auto& ex : examples) {
          prompts.push_back(render(strategy, ex, registry));
          refs.push_back(&ex);
        }
        if (ec.kind == "mock") detail::prime_mock(ec, *mock.script, strategy, prompts, refs);

        auto batch = gateway.complete_batch(ec.endpoint, prompts, config.params);
        cell.errors = batch.errors;
        cell.completions = batch.completions.size();
        std::map<std::string, const RawCompletion*> by_id;
        for (const auto& c : batch.completions) {
          by_id[c.example_id] = &c;
          if (c.from_transcript) ++cell.from_transcript;
        }

        std::vector<EvalOutcome> outcomes;
        for (const auto& ex : examples) {
          EvalOutcome o{ex.id, cell.strategy, ex.gold_label, std::nullopt, ParseStatus::kMissingLabel};
          if (auto it = by_id.find(ex.id); it != by_id.end()) {
            auto parsed = parse(it->second->text, strategy, ex.label_vocabulary, ex.id);
            o.predicted = parsed.label;
            o.parse_status = parsed.status;
          }
          ++cell.status_histogram[std::string(to_string(o.parse_status))];
          csv::write_row(per_example, {cell.model, dataset, o.example_id, o.strategy_id, o.gold,
                                       o.predicted.value_or(""), std::string(to_string(o.parse_status))});
          outcomes.push_back(std::move(o));
        }
        cell.metrics = score(outcomes, examples.front().label_vocabulary);
        if (!cell.errors.empty()) {
          summary.any_cell_failed = true;
          log << "cell " << cell.model << "/" << dataset << "/" << cell.strategy << ": "
              << cell.errors.size() << " request(s) failed; first: " << cell.errors.front().message << "\n";
        }
        log << "cell " << cell.model << "/" << dataset << "/" << cell.strategy << ": n=" << cell.metrics.n
            << " accuracy=" << detail::format_double(cell.metrics.accuracy)
            << " (" << cell.from_transcript << " from transcript)\n";
        summary.cells.push_back(std::move(cell));
      }
    }
  }

  std::ostringstream aggregate, breakdown, markdown;
  csv::write_row(aggregate, {"model", "dataset", "strategy", "accuracy", "macro_f1", "weighted_f1", "n"});
  csv::write_row(breakdown, {"model", "dataset", "strategy", "label", "true_positives"});
  markdown << "| model | dataset | strategy | accuracy | macro-F1 | weighted-F1 | n |\n"
           << "|---|---|---|---|---|---|---|\n";
  nlohmann::ordered_json manifest;
  manifest["config_hash"] = config_hash(config);
  manifest["cells"] = nlohmann::ordered_json::array();
  for (const auto& cell : summary.cells) {
    const auto& m = cell.metrics;
    csv::write_row(aggregate, {cell.model, cell.dataset, cell.strategy, detail::format_double(m.accuracy),
                               detail::format_double(m.macro_f1), detail::format_double(m.weighted_f1),
                               std::to_string(m.n)});
    for (const auto& label : m.vocabulary) {
      csv::write_row(breakdown, {cell.model, cell.dataset, cell.strategy, label,
                                 std::to_string(m.per_class_tp.at(label))});
    }
    markdown << "| " << cell.model << " | " << cell.dataset << " | " << cell.strategy << " | "
             << detail::format_double(m.accuracy) << " | " << detail::format_double(m.macro_f1) << " | "
             << detail::format_double(m.weighted_f1) << " | " << m.n << " |\n";
    nlohmann::ordered_json jc;
    jc["model"] = cell.model;
    jc["dataset"] = cell.dataset;
    jc["strategy"] = cell.strategy;
    jc["completions"] = cell.completions;
    jc["failed_requests"] = cell.errors.size();
    jc["parse_status"] = cell.status_histogram;
    jc["accuracy"] = m.accuracy;
    jc["macro_f1"] = m.macro_f1;
    jc["weighted_f1"] = m.weighted_f1;
    jc["n"] = m.n;
    manifest["cells"].push_back(std::move(jc));
  }
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_timestamp();

  io::write_file(config.output_dir / "per_example.csv", per_example.str());
  io::write_file(config.output_dir / "aggregate.csv", aggregate.str());
  io::write_file(config.output_dir / "breakdown.csv", breakdown.str());
  io::write_file(config.output_dir / "report.md", markdown.str());
  io::write_file(config.output_dir / "run_manifest.json", manifest.dump(2) + "\n");
  return summary;
}

/// Strategy-effect regression over an aggregate CSV; writes coefficients.csv and summary.txt.
inline RegressionResult cmd_regress(const std::filesystem::path& aggregate_csv, const std::string& reference,
                                    const std::filesystem::path& output_dir) {
  auto table = run_table_from_aggregate_csv(io::read_file(aggregate_csv));
  EffectsOptions opts;
  opts.reference = reference;
  auto result = strategy_effects(table, opts);
  std::ostringstream coef, summary;
  write_coefficients_csv(coef, result);
  write_summary(summary, result);
  io::write_file(output_dir / "coefficients.csv", coef.str());
  io::write_file(output_dir / "summary.txt", summary.str());
  return result;
}

struct DistillSummary {
  std::filesystem::path corpus_path;
  std::size_t examples = 0;
  std::size_t written = 0;
  std::map<std::string, std::size_t> rejections;
  std::vector<ItemError> errors;
  int exit_code() const { return errors.empty() ? 0 : 1; }
};

/// Teacher generation over every train split, filtering, and corpus emission.
inline DistillSummary cmd_distill_corpus(const RunConfig& config, const std::string& teacher_name,
                                         const std::string& strategy_id,
                                         const TransportFactory& http_factory = {},
                                         std::ostream& log = std::cerr) {
  auto strategy = parse_strategy(strategy_id);
  if (!strategy.is_distill()) {
    throw Error(ErrorCode::kWrongStrategyKind, strategy_id + " is not a distillation strategy");
  }
  const auto& ec = config.endpoint(teacher_name);
  TemplateRegistry registry;
  if (!config.templates_dir.empty()) registry.load_overrides(config.templates_dir);

  std::vector<const SplitManifest*> manifests;
  auto splits = detail::load_splits(config, Split::kTrain, &manifests);
  std::vector<MoralExample> examples;
  for (auto& s : splits) {
    for (auto& ex : s) examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw Error(ErrorCode::kEmptyInput, "no training examples in the manifest");

  std::shared_ptr<Transport> transport;
  detail::MockEndpoint mock;
  if (ec.kind == "mock") {
    mock = detail::make_mock(ec);
    transport = mock.transport;
    if (ec.mock_mode != "script") {
      for (const auto& ex : examples) {
        const auto& label = ec.mock_mode == "gold" ? ex.gold_label : ec.mock_label;
        auto prompt = render_distill(strategy, ex, ex.gold_label, registry);
        mock.script->set(prompt_hash(prompt.text), compliant_response(strategy, label, detail::kMockReasoning));
      }
    }
  } else {
    if (!http_factory) throw Error(ErrorCode::kConfigError, "no HTTP transport available");
    transport = http_factory(ec);
  }

  std::filesystem::create_directories(config.output_dir);
  auto transcript = std::make_shared<TranscriptLog>(config.output_dir / "distill_transcript.jsonl");
  Gateway gateway(transport, config.retry, transcript);
  auto outcome = build_corpus(examples, ec.endpoint, strategy, gateway, config.params, config.length_bounds, registry);

  DistillSummary s;
  s.examples = examples.size();
  s.corpus_path = config.output_dir / "distill" / (teacher_name + "." + strategy_id + ".jsonl");
  s.written = emit_corpus(outcome.records, s.corpus_path);
  s.rejections = outcome.rejections;
  s.errors = outcome.errors;

  nlohmann::ordered_json stats;
  stats["teacher"] = teacher_name;
  stats["strategy"] = strategy_id;
  stats["examples"] = s.examples;
  stats["candidates"] = outcome.candidates;
  stats["written"] = s.written;
  stats["rejections"] = s.rejections;
  stats["failed_requests"] = s.errors.size();
  io::write_file(s.corpus_path.string() + ".stats.json", stats.dump(2) + "\n");

  log << "corpus: " << s.corpus_path.string() << "\n";
  log << "examples " << s.examples << ", written " << s.written << ", failed requests " << s.errors.size() << "\n";
  for (const auto& [reason, count] : s.rejections) log << "  rejected " << reason << ": " << count << "\n";
  return s;
}

}  // namespace moralbench
