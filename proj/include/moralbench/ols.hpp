#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "moralbench/csv.hpp"
#include "moralbench/error.hpp"
#include "moralbench/taxonomy.hpp"

namespace moralbench {

/// Dense row-major matrix, just enough for least squares on design matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double> multiply(std::span<const double> v) const {
    if (v.size() != cols_) throw Error(ErrorCode::kDimensionMismatch, "matrix-vector size mismatch");
    std::vector<double> out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) acc += (*this)(r, c) * v[c];
      out[r] = acc;
    }
    return out;
  }

  /// Xᵀv
  std::vector<double> multiply_transposed(std::span<const double> v) const {
    if (v.size() != rows_) throw Error(ErrorCode::kDimensionMismatch, "matrix-vector size mismatch");
    std::vector<double> out(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) out[c] += (*this)(r, c) * v[r];
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct OlsFit {
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  std::vector<double> residuals;
  double ssr = 0.0;
  double sst = 0.0;
  double r_squared = 0.0;
  double sigma2 = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;
};

/// Least squares via Householder QR. Standard errors come from σ̂²(XᵀX)⁻¹ = σ̂²R⁻¹R⁻ᵀ with
/// σ̂² = SSR/(n−p); they are NaN when n = p.
inline OlsFit fit_ols(const Matrix& design, std::span<const double> response) {
  const std::size_t n = design.rows();
  const std::size_t p = design.cols();
  if (response.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "design has " + std::to_string(n) +
                                                   " rows but response has " +
                                                   std::to_string(response.size()));
  }
  if (p == 0 || p > n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "need 1 <= columns <= rows, got " + std::to_string(p) + " x " + std::to_string(n));
  }

  Matrix a = design;
  std::vector<double> qty(response.begin(), response.end());
  double max_col_norm = 0.0;
  for (std::size_t c = 0; c < p; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += a(r, c) * a(r, c);
    max_col_norm = std::max(max_col_norm, std::sqrt(s));
  }
  const double tol = static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() *
                     std::max(max_col_norm, 1.0) * 16.0;

  std::vector<double> v(n);
  for (std::size_t k = 0; k < p; ++k) {
    double norm = 0.0;
    for (std::size_t r = k; r < n; ++r) norm += a(r, k) * a(r, k);
    norm = std::sqrt(norm);
    if (norm <= tol) {
      throw Error(ErrorCode::kRankDeficient, "design column " + std::to_string(k) +
                                                 " is linearly dependent on earlier columns");
    }
    const double alpha = a(k, k) > 0 ? -norm : norm;
    for (std::size_t r = k; r < n; ++r) v[r] = a(r, k);
    v[k] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t r = k; r < n; ++r) vnorm2 += v[r] * v[r];
    if (vnorm2 > 0.0) {
      for (std::size_t c = k; c < p; ++c) {
        double dot = 0.0;
        for (std::size_t r = k; r < n; ++r) dot += v[r] * a(r, c);
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t r = k; r < n; ++r) a(r, c) -= f * v[r];
      }
      double dot = 0.0;
      for (std::size_t r = k; r < n; ++r) dot += v[r] * qty[r];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = k; r < n; ++r) qty[r] -= f * v[r];
    }
    if (std::abs(a(k, k)) <= tol) {
      throw Error(ErrorCode::kRankDeficient, "design matrix is not of full column rank");
    }
  }

  OlsFit fit;
  fit.n = n;
  fit.p = p;
  fit.coefficients.assign(p, 0.0);
  for (std::size_t i = p; i-- > 0;) {
    double s = qty[i];
    for (std::size_t j = i + 1; j < p; ++j) s -= a(i, j) * fit.coefficients[j];
    fit.coefficients[i] = s / a(i, i);
  }

  auto fitted = design.multiply(fit.coefficients);
  fit.residuals.resize(n);
  double mean = 0.0;
  for (double y : response) mean += y;
  mean /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    fit.residuals[r] = response[r] - fitted[r];
    fit.ssr += fit.residuals[r] * fit.residuals[r];
    fit.sst += (response[r] - mean) * (response[r] - mean);
  }
  fit.r_squared = fit.sst > 0.0 ? 1.0 - fit.ssr / fit.sst : 0.0;

  // R⁻¹ by back substitution, column by column.
  std::vector<double> rinv(p * p, 0.0);
  for (std::size_t col = 0; col < p; ++col) {
    for (std::size_t i = col + 1; i-- > 0;) {
      double s = (i == col) ? 1.0 : 0.0;
      for (std::size_t j = i + 1; j <= col; ++j) s -= a(i, j) * rinv[j * p + col];
      rinv[i * p + col] = s / a(i, i);
    }
  }
  fit.sigma2 = n > p ? fit.ssr / static_cast<double>(n - p) : std::numeric_limits<double>::quiet_NaN();
  fit.std_errors.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    double d = 0.0;
    for (std::size_t j = i; j < p; ++j) d += rinv[i * p + j] * rinv[i * p + j];
    fit.std_errors[i] = std::sqrt(fit.sigma2 * d);
  }
  return fit;
}

struct RunRow {
  std::string model_id;
  std::string dataset_id;
  std::string strategy_id;
  double accuracy = 0.0;  // percentage points
};

struct RunTable {
  std::vector<RunRow> rows;
};

struct Coefficient {
  std::string term;
  double estimate = 0.0;
  double std_error = 0.0;

  double t_value() const { return estimate / std_error; }
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;
  double r_squared = 0.0;
  std::size_t n = 0;
  std::string reference_category;

  const Coefficient* find(std::string_view term) const {
    for (const auto& c : coefficients) {
      if (c.term == term) return &c;
    }
    return nullptr;
  }

  double estimate(std::string_view term) const {
    if (const auto* c = find(term)) return c->estimate;
    throw Error(ErrorCode::kMissingReference, "no term '" + std::string(term) + "'");
  }
};

inline std::string intercept_term() { return "(Intercept)"; }
inline std::string strategy_term(std::string_view id) { return "strategy:" + std::string(id); }
inline std::string model_term(std::string_view id) { return "model:" + std::string(id); }
inline std::string dataset_term(std::string_view id) { return "dataset:" + std::string(id); }

struct EffectsOptions {
  std::string reference = "baseline.label_only";
  /// Levels whose dummies are dropped; defaults to the first level in sorted order.
  std::optional<std::string> dropped_model;
  std::optional<std::string> dropped_dataset;
};

/// Accuracy on strategy dummies with model and dataset fixed effects plus an intercept.
/// Strategy coefficients are in the same units as `accuracy` (percentage points).
inline RegressionResult strategy_effects(const RunTable& table, const EffectsOptions& opts = {}) {
  std::set<std::tuple<std::string, std::string, std::string>> keys;
  std::set<std::string> models, datasets, strategies;
  for (const auto& r : table.rows) {
    auto s = try_parse_strategy(r.strategy_id);
    if (!s || s->is_distill()) {
      throw Error(ErrorCode::kUnknownStrategy,
                  "'" + r.strategy_id + "' is not a zero-shot strategy id");
    }
    if (!keys.emplace(r.model_id, r.dataset_id, r.strategy_id).second) {
      throw Error(ErrorCode::kPreconditionViolation, "duplicate cell (" + r.model_id + ", " +
                                                         r.dataset_id + ", " + r.strategy_id + ")");
    }
    models.insert(r.model_id);
    datasets.insert(r.dataset_id);
    strategies.insert(r.strategy_id);
  }
  if (!strategies.contains(opts.reference)) {
    throw Error(ErrorCode::kMissingReference, "reference strategy '" + opts.reference + "' absent");
  }
  if (strategies.size() < 2) {
    throw Error(ErrorCode::kMissingReference, "need at least two strategies to estimate effects");
  }
  auto pick_dropped = [](const std::set<std::string>& levels, const std::optional<std::string>& want,
                         const char* what) {
    if (!want) return *levels.begin();
    if (!levels.contains(*want)) {
      throw Error(ErrorCode::kMissingReference, std::string(what) + " level '" + *want + "' absent");
    }
    return *want;
  };
  const auto dropped_model = pick_dropped(models, opts.dropped_model, "model");
  const auto dropped_dataset = pick_dropped(datasets, opts.dropped_dataset, "dataset");

  std::vector<std::string> terms{intercept_term()};
  std::map<std::string, std::size_t> strategy_col, model_col, dataset_col;
  for (const auto& s : strategies) {
    if (s == opts.reference) continue;
    strategy_col[s] = terms.size();
    terms.push_back(strategy_term(s));
  }
  for (const auto& m : models) {
    if (m == dropped_model) continue;
    model_col[m] = terms.size();
    terms.push_back(model_term(m));
  }
  for (const auto& d : datasets) {
    if (d == dropped_dataset) continue;
    dataset_col[d] = terms.size();
    terms.push_back(dataset_term(d));
  }

  Matrix x(table.rows.size(), terms.size());
  std::vector<double> y(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    x(i, 0) = 1.0;
    if (auto it = strategy_col.find(r.strategy_id); it != strategy_col.end()) x(i, it->second) = 1.0;
    if (auto it = model_col.find(r.model_id); it != model_col.end()) x(i, it->second) = 1.0;
    if (auto it = dataset_col.find(r.dataset_id); it != dataset_col.end()) x(i, it->second) = 1.0;
    y[i] = r.accuracy;
  }

  auto fit = fit_ols(x, y);
  RegressionResult result;
  result.r_squared = fit.r_squared;
  result.n = fit.n;
  result.reference_category = opts.reference;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    result.coefficients.push_back({terms[j], fit.coefficients[j], fit.std_errors[j]});
  }
  return result;
}

/// Reads the aggregate report (model, dataset, strategy, accuracy, ...). Accuracy there is a
/// fraction in [0, 1]; the run table holds percentage points.
inline RunTable run_table_from_aggregate_csv(std::string_view data) {
  csv::Table t(csv::parse(data));
  auto mc = t.column("model"), dc = t.column("dataset"), sc = t.column("strategy"),
       ac = t.column("accuracy");
  RunTable table;
  for (const auto& row : t.rows()) {
    RunRow r{row.at(mc), row.at(dc), row.at(sc), 0.0};
    try {
      r.accuracy = std::stod(row.at(ac)) * 100.0;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kSchemaError, "bad accuracy value '" + row.at(ac) + "'");
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

inline void write_coefficients_csv(std::ostream& os, const RegressionResult& r) {
  csv::write_row(os, {"term", "estimate", "std_error"});
  char buf[64];
  for (const auto& c : r.coefficients) {
    std::snprintf(buf, sizeof(buf), "%.6f", c.estimate);
    std::string est = buf;
    std::snprintf(buf, sizeof(buf), "%.6f", c.std_error);
    csv::write_row(os, {c.term, est, buf});
  }
}

inline void write_summary(std::ostream& os, const RegressionResult& r) {
  char buf[256];
  os << "OLS: accuracy (percentage points) ~ strategy + model + dataset\n";
  os << "reference strategy: " << r.reference_category << "\n";
  std::snprintf(buf, sizeof(buf), "n = %zu, R^2 = %.4f\n\n", r.n, r.r_squared);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-48s %10s %10s %8s\n", "term", "estimate", "std_error", "t");
  os << buf;
  for (const auto& c : r.coefficients) {
    std::snprintf(buf, sizeof(buf), "%-48s %10.4f %10.4f %8.2f\n", c.term.c_str(), c.estimate,
                  c.std_error, c.t_value());
    os << buf;
  }
}

}  // namespace moralbench
