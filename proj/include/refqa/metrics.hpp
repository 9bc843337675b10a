// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "refqa/error.hpp"

namespace refqa {

/// SRCC/PLCC/KRCC/RMSE over one prediction set. Correlations need n >= 2 and
/// non-constant inputs; `degenerate` carries the reason when they could not
/// be computed (rmse is still filled in that case).
struct EvalResult {
  double srcc = 0.0;
  double plcc = 0.0;
  double krcc = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  std::optional<std::string> degenerate;
};

namespace detail {

inline void require_paired(const std::vector<double>& x, const std::vector<double>& y,
                           std::size_t min_n, const char* what) {
  if (x.size() != y.size())
    throw DimError(std::string(what) + ": length " + std::to_string(x.size()) + " vs " +
                   std::to_string(y.size()));
  if (x.size() < min_n)
    throw NumericError(std::string(what) + ": needs at least " + std::to_string(min_n) +
                       " observations");
}

inline bool is_constant(const std::vector<double>& v) {
  for (double x : v)
    if (x != v.front()) return false;
  return true;
}

}  // namespace detail

/// Sample Pearson correlation. Constant input is a degenerate-input error.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require_paired(x, y, 2, "pearson");
  if (detail::is_constant(x) || detail::is_constant(y))
    throw NumericError("pearson: constant input");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0) throw NumericError("pearson: zero variance");
  return cov / (std::sqrt(vx) * std::sqrt(vy));
}

/// Fractional ranks, ties receiving the mean of their rank positions.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    // positions i..j (0-based) share the average 1-based rank
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require_paired(x, y, 2, "spearman");
  return pearson(fractional_ranks(x), fractional_ranks(y));
}

/// Kendall tau-b. Pairs tied in both arguments count toward both tie terms,
/// matching the multiplicity-based definition.
inline double kendall(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require_paired(x, y, 2, "kendall");
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if (dx * dy > 0.0) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const long long total_pairs = static_cast<long long>(n) * (n - 1) / 2;
  const double fx = static_cast<double>(total_pairs - ties_x);
  const double fy = static_cast<double>(total_pairs - ties_y);
  if (fx == 0.0 || fy == 0.0) throw NumericError("kendall: all pairs tied in one input");
  return static_cast<double>(concordant - discordant) / std::sqrt(fx * fy);
}

inline double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  detail::require_paired(pred, target, 1, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

/// All four metrics at once; correlation failures are captured rather than
/// thrown so callers always at least get the RMSE.
inline EvalResult score_predictions(const std::vector<double>& pred,
                                    const std::vector<double>& mos) {
  detail::require_paired(pred, mos, 1, "score_predictions");
  EvalResult r;
  r.n = pred.size();
  r.rmse = rmse(pred, mos);
  try {
    r.plcc = pearson(pred, mos);
    r.srcc = spearman(pred, mos);
    r.krcc = kendall(pred, mos);
  } catch (const NumericError& e) {
    r.degenerate = e.what();
    r.plcc = r.srcc = r.krcc = std::nan("");
  }
  return r;
}

}  // namespace refqa
