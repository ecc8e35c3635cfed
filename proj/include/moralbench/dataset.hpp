#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "moralbench/csv.hpp"
#include "moralbench/error.hpp"
#include "moralbench/io.hpp"
#include "moralbench/text.hpp"

namespace moralbench {

enum class Dataset { kVK, kUniMoral, kEthics, kMoralCoT };

enum class Split { kTrain, kTest };

inline constexpr std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::kVK: return "VK";
    case Dataset::kUniMoral: return "UniMoral";
    case Dataset::kEthics: return "ETHICS";
    case Dataset::kMoralCoT: return "MoralCoT";
  }
  return "";
}

inline constexpr std::string_view to_string(Split s) {
  return s == Split::kTrain ? "train" : "test";
}

inline Dataset parse_dataset(std::string_view s) {
  for (auto d : {Dataset::kVK, Dataset::kUniMoral, Dataset::kEthics, Dataset::kMoralCoT}) {
    if (text::iequals(to_string(d), s)) return d;
  }
  throw Error(ErrorCode::kSchemaError, "unknown dataset '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  if (text::iequals(s, "train")) return Split::kTrain;
  if (text::iequals(s, "test")) return Split::kTest;
  throw Error(ErrorCode::kSchemaError, "unknown split '" + std::string(s) + "'");
}

/// Ordered two-label vocabulary, positive class first.
using LabelVocabulary = std::vector<std::string>;

/// Default vocabulary per dataset. Manifests may override it.
inline LabelVocabulary label_vocabulary(Dataset d) {
  switch (d) {
    case Dataset::kVK: return {"Support", "Oppose"};
    case Dataset::kUniMoral: return {"Support", "Oppose"};
    case Dataset::kEthics: return {"Reasonable", "Unreasonable"};
    case Dataset::kMoralCoT: return {"Permissible", "Impermissible"};
  }
  return {};
}

/// Canonical vocabulary entry matching `word` case-insensitively.
inline std::optional<std::string> normalize_label(std::string_view word,
                                                  const LabelVocabulary& vocabulary) {
  auto w = text::trim(word);
  for (const auto& v : vocabulary) {
    if (text::iequals(w, v)) return v;
  }
  return std::nullopt;
}

struct MoralExample {
  std::string id;
  Dataset dataset = Dataset::kVK;
  std::string scenario;
  /// VK value string, or "(1) ...\n(2) ..." option lines for option-style records.
  std::string value_or_options;
  std::optional<std::string> annotator_description;
  std::string gold_label;
  LabelVocabulary label_vocabulary;

  friend bool operator==(const MoralExample&, const MoralExample&) = default;
};

inline void validate(const MoralExample& ex) {
  if (ex.label_vocabulary.size() != 2) {
    throw Error(ErrorCode::kSchemaError, "example '" + ex.id + "': vocabulary must have 2 labels");
  }
  if (text::trim(ex.scenario).empty()) {
    throw Error(ErrorCode::kSchemaError, "example '" + ex.id + "': empty scenario");
  }
  if (std::find(ex.label_vocabulary.begin(), ex.label_vocabulary.end(), ex.gold_label) ==
      ex.label_vocabulary.end()) {
    throw Error(ErrorCode::kLabelError,
                "example '" + ex.id + "': gold label '" + ex.gold_label + "' outside vocabulary");
  }
}

/// Renders enumerated options as "(1) a\n(2) b".
inline std::string format_options(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out.push_back('\n');
    out += "(" + std::to_string(i + 1) + ") " + options[i];
  }
  return out;
}

struct ColumnMap {
  std::string id;  // empty: ids are synthesized from the row index
  std::string scenario = "scenario";
  std::string value = "value";
  std::vector<std::string> options;  // non-empty: option-style records
  std::string label = "label";
  std::string annotator_description;
};

struct SampleSpec {
  std::size_t size = 0;
  std::uint64_t seed = 42;
  std::filesystem::path manifest_out;  // optional: where to persist the sampled ids
};

struct SplitManifest {
  Dataset dataset = Dataset::kVK;
  Split split = Split::kTest;
  std::size_t expected_count = 0;
  std::filesystem::path source_path;
  ColumnMap columns;
  std::map<std::string, std::string> label_map;
  std::optional<LabelVocabulary> vocabulary;
  std::optional<SampleSpec> sample;

  LabelVocabulary effective_vocabulary() const {
    return vocabulary ? *vocabulary : label_vocabulary(dataset);
  }
};

namespace detail {

inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  // Rejection sampling; portable across standard libraries, unlike uniform_int_distribution.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

struct RawRecord {
  std::string id;
  std::string scenario;
  std::string value;
  std::vector<std::string> options;
  std::string label;
  std::string annotator_description;
};

inline std::vector<RawRecord> read_csv_records(const SplitManifest& m, std::string_view data,
                                               char sep = ',') {
  csv::Table table(csv::parse(data, sep));
  const auto& cols = m.columns;
  std::optional<std::size_t> id_col;
  if (!cols.id.empty()) id_col = table.column(cols.id);
  auto scenario_col = table.column(cols.scenario);
  auto label_col = table.column(cols.label);
  std::optional<std::size_t> value_col;
  std::vector<std::size_t> option_cols;
  if (cols.options.empty()) {
    value_col = table.column(cols.value);
  } else {
    for (const auto& o : cols.options) option_cols.push_back(table.column(o));
  }
  std::optional<std::size_t> desc_col;
  if (!cols.annotator_description.empty()) desc_col = table.column(cols.annotator_description);

  std::vector<RawRecord> out;
  out.reserve(table.rows().size());
  std::size_t line = 1;
  for (const auto& row : table.rows()) {
    ++line;
    if (row.size() != table.header().size()) {
      throw Error(ErrorCode::kSchemaError, m.source_path.string() + ":" + std::to_string(line) +
                                               ": expected " + std::to_string(table.header().size()) +
                                               " fields, got " + std::to_string(row.size()));
    }
    RawRecord r;
    if (id_col) r.id = row[*id_col];
    r.scenario = row[scenario_col];
    r.label = row[label_col];
    if (value_col) r.value = row[*value_col];
    for (auto c : option_cols) r.options.push_back(row[c]);
    if (desc_col) r.annotator_description = row[*desc_col];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string json_field(const nlohmann::json& obj, const std::string& key,
                              const std::filesystem::path& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw Error(ErrorCode::kSchemaError,
                path.string() + ":" + std::to_string(line) + ": missing field '" + key + "'");
  }
  if (it->is_string()) return it->get<std::string>();
  return it->dump();  // numeric or boolean labels
}

inline std::vector<RawRecord> read_jsonl_records(const SplitManifest& m, std::string_view data) {
  const auto& cols = m.columns;
  std::vector<RawRecord> out;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(data)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  m.source_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    RawRecord r;
    if (!cols.id.empty()) r.id = json_field(obj, cols.id, m.source_path, line_no);
    r.scenario = json_field(obj, cols.scenario, m.source_path, line_no);
    r.label = json_field(obj, cols.label, m.source_path, line_no);
    if (cols.options.empty()) {
      r.value = json_field(obj, cols.value, m.source_path, line_no);
    } else {
      for (const auto& o : cols.options) r.options.push_back(json_field(obj, o, m.source_path, line_no));
    }
    if (!cols.annotator_description.empty() && obj.contains(cols.annotator_description)) {
      r.annotator_description = json_field(obj, cols.annotator_description, m.source_path, line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Seeded uniform sample of `k` distinct indices from [0, n), returned ascending.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) {
    throw Error(ErrorCode::kCountMismatch, "cannot sample " + std::to_string(k) + " of " +
                                               std::to_string(n) + " records");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + detail::bounded(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Loads one split through its adapter. In strict mode the record count must equal
/// `expected_count` exactly.
inline std::vector<MoralExample> load(const SplitManifest& m, bool strict = true) {
  auto data = io::read_file(m.source_path);
  auto ext = text::to_lower(m.source_path.extension().string());
  std::vector<detail::RawRecord> raw;
  if (ext == ".jsonl" || ext == ".ndjson") {
    raw = detail::read_jsonl_records(m, data);
  } else if (ext == ".tsv") {
    raw = detail::read_csv_records(m, data, '\t');
  } else {
    raw = detail::read_csv_records(m, data);
  }

  const auto vocabulary = m.effective_vocabulary();
  std::vector<MoralExample> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& r = raw[i];
    MoralExample ex;
    ex.id = r.id.empty() ? std::string(to_string(m.dataset)) + "-" + std::string(to_string(m.split)) +
                               "-" + std::to_string(i)
                         : r.id;
    ex.dataset = m.dataset;
    ex.scenario = std::move(r.scenario);
    ex.value_or_options = r.options.empty() ? std::move(r.value) : format_options(r.options);
    if (!r.annotator_description.empty()) ex.annotator_description = r.annotator_description;
    ex.label_vocabulary = vocabulary;

    std::string label = std::string(text::trim(r.label));
    if (auto it = m.label_map.find(label); it != m.label_map.end()) {
      label = it->second;
    } else {
      for (const auto& [from, to] : m.label_map) {
        if (text::iequals(from, label)) {
          label = to;
          break;
        }
      }
    }
    auto normalized = normalize_label(label, vocabulary);
    if (!normalized) {
      throw Error(ErrorCode::kLabelError, m.source_path.string() + ": record '" + ex.id +
                                              "' has label '" + r.label + "' outside vocabulary");
    }
    ex.gold_label = *normalized;
    if (text::trim(ex.scenario).empty()) {
      throw Error(ErrorCode::kSchemaError, m.source_path.string() + ": record '" + ex.id +
                                               "' has an empty scenario");
    }
    out.push_back(std::move(ex));
  }

  if (m.sample) {
    auto picked = sample_indices(out.size(), m.sample->size, m.sample->seed);
    std::vector<MoralExample> sampled;
    sampled.reserve(picked.size());
    for (auto i : picked) sampled.push_back(std::move(out[i]));
    out = std::move(sampled);
    if (!m.sample->manifest_out.empty()) {
      std::string ids;
      for (const auto& ex : out) ids += ex.id + "\n";
      io::write_file(m.sample->manifest_out, ids);
    }
  }

  if (strict && out.size() != m.expected_count) {
    throw Error(ErrorCode::kCountMismatch, m.source_path.string() + ": expected " +
                                               std::to_string(m.expected_count) + " records, got " +
                                               std::to_string(out.size()));
  }
  return out;
}

/// Parses one split entry of a manifest file. Relative paths resolve against `base_dir`.
inline SplitManifest split_manifest_from_json(const nlohmann::json& j,
                                              const std::filesystem::path& base_dir) {
  try {
    SplitManifest m;
    m.dataset = parse_dataset(j.at("dataset").get<std::string>());
    m.split = parse_split(j.at("split").get<std::string>());
    auto count = j.at("expected_count").get<long long>();
    if (count <= 0) throw Error(ErrorCode::kSchemaError, "expected_count must be positive");
    m.expected_count = static_cast<std::size_t>(count);
    std::filesystem::path p = j.at("path").get<std::string>();
    m.source_path = p.is_absolute() ? p : base_dir / p;
    if (auto c = j.find("columns"); c != j.end()) {
      m.columns.id = c->value("id", m.columns.id);
      m.columns.scenario = c->value("scenario", m.columns.scenario);
      m.columns.value = c->value("value", m.columns.value);
      m.columns.label = c->value("label", m.columns.label);
      m.columns.annotator_description = c->value("annotator_description", std::string{});
      if (c->contains("options")) m.columns.options = c->at("options").get<std::vector<std::string>>();
    }
    if (auto lm = j.find("label_map"); lm != j.end()) {
      m.label_map = lm->get<std::map<std::string, std::string>>();
    }
    if (auto v = j.find("vocabulary"); v != j.end()) {
      auto vocab = v->get<LabelVocabulary>();
      if (vocab.size() != 2) throw Error(ErrorCode::kSchemaError, "vocabulary must have 2 labels");
      m.vocabulary = std::move(vocab);
    }
    if (auto s = j.find("sample"); s != j.end()) {
      SampleSpec spec;
      spec.size = s->at("size").get<std::size_t>();
      spec.seed = s->value("seed", std::uint64_t{42});
      if (s->contains("manifest_out")) {
        std::filesystem::path out = s->at("manifest_out").get<std::string>();
        spec.manifest_out = out.is_absolute() ? out : base_dir / out;
      }
      m.sample = spec;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("manifest: ") + e.what());
  }
}

/// Reads a manifest file: {"splits": [ {dataset, split, path, expected_count, ...}, ... ]}.
inline std::vector<SplitManifest> read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, path.string() + ": " + e.what());
  }
  std::vector<SplitManifest> out;
  const auto base = path.parent_path();
  const auto& splits = j.is_array() ? j : j.at("splits");
  for (const auto& s : splits) out.push_back(split_manifest_from_json(s, base));
  return out;
}

}  // namespace moralbench
