#pragma once

// Reference implementations written independently of the library, used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Scores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
};

/// Brute-force per-class counting. A missing prediction is replaced by the other label
/// before counting, so it is always wrong.
inline Scores brute_force_scores(const std::vector<std::string>& gold,
                                 const std::vector<std::optional<std::string>>& predicted,
                                 const std::vector<std::string>& vocab) {
  std::vector<std::string> pred;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i]) {
      pred.push_back(*predicted[i]);
    } else {
      pred.push_back(gold[i] == vocab[0] ? vocab[1] : vocab[0]);
    }
  }
  Scores s;
  double correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i] ? 1 : 0;
  s.accuracy = correct / static_cast<double>(gold.size());

  std::set<std::string> present(gold.begin(), gold.end());
  present.insert(pred.begin(), pred.end());
  double macro = 0, weighted = 0;
  for (const auto& label : present) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      bool g = gold[i] == label, p = pred[i] == label;
      if (g && p) tp += 1;
      if (!g && p) fp += 1;
      if (g && !p) fn += 1;
      if (g) support += 1;
    }
    double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    macro += f1;
    weighted += f1 * support;
  }
  s.macro_f1 = macro / static_cast<double>(present.size());
  s.weighted_f1 = weighted / static_cast<double>(gold.size());
  return s;
}

/// Solves (XᵀX) b = Xᵀy by Gaussian elimination with partial pivoting.
/// `x` is row-major with `p` columns.
inline std::vector<double> normal_equations(const std::vector<double>& x, const std::vector<double>& y,
                                            std::size_t p) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < n; ++r) a[i][j] += x[r * p + i] * x[r * p + j];
    }
    for (std::size_t r = 0; r < n; ++r) a[i][p] += x[r * p + i] * y[r];
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> b(p);
  for (std::size_t i = 0; i < p; ++i) b[i] = a[i][p] / a[i][i];
  return b;
}

}  // namespace oracle
