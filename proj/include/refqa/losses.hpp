// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "refqa/graph.hpp"

namespace refqa {

/// Stabilizer added under each square root of the correlation denominator;
/// keeps constant batches defined (r = 0, loss = 1/2) instead of erroring
/// mid-training.
constexpr double kPlccEps = 1e-8;

/// 1/2 (1 - r) with r the Pearson correlation of predictions vs opinion
/// scores, built from tape primitives so gradients flow through exactly.
/// Output lies in [0, 1]; a zero-variance mos batch is reported via
/// *constant_mos rather than an error.
inline Var plcc_loss(Graph& g, const std::vector<Var>& preds, const std::vector<double>& mos,
                     bool* constant_mos = nullptr) {
  const std::size_t m = preds.size();
  if (m < 2) throw NumericError("plcc_loss: needs at least 2 samples");
  if (mos.size() != m)
    throw DimError("plcc_loss: " + std::to_string(m) + " predictions vs " +
                   std::to_string(mos.size()) + " scores");

  double mos_mean = 0.0;
  for (double s : mos) mos_mean += s;
  mos_mean /= static_cast<double>(m);
  Tensor centered_mos = Tensor::zeros({m});
  double mos_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    centered_mos[i] = mos[i] - mos_mean;
    mos_sq += centered_mos[i] * centered_mos[i];
  }
  if (constant_mos) *constant_mos = mos_sq == 0.0;
  const double mos_norm = std::sqrt(mos_sq + kPlccEps);

  Var y = g.stack(preds);
  Var mean = g.scale_const(g.sum(y), 1.0 / static_cast<double>(m));
  Var yc = g.sub_broadcast(y, mean);
  Var cov = g.dot(yc, g.constant(centered_mos));
  Var pred_norm = g.sqrt_scalar(g.add_const(g.dot(yc, yc), kPlccEps));
  Var r = g.div(cov, g.scale_const(pred_norm, mos_norm));
  return g.scale_const(g.add_const(g.scale_const(r, -1.0), 1.0), 0.5);
}

/// Pairwise hinge over all ordered pairs:
/// (1/m^2) sum_ij max(0, |s_i - s_j| - sign(s_i - s_j) (y_i - y_j)).
/// Tied pairs and the diagonal contribute exactly zero; the subgradient at
/// the hinge kink is zero (relu convention).
inline Var rank_loss(Graph& g, const std::vector<Var>& preds, const std::vector<double>& mos) {
  const std::size_t m = preds.size();
  if (m < 1) throw NumericError("rank_loss: needs at least 1 sample");
  if (mos.size() != m)
    throw DimError("rank_loss: " + std::to_string(m) + " predictions vs " +
                   std::to_string(mos.size()) + " scores");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double gap = mos[i] - mos[j];
      if (gap == 0.0) continue;  // tied or diagonal: max(0, 0) = 0
      const double e = gap > 0.0 ? 1.0 : -1.0;
      // |s_i - s_j| - e (y_i - y_j)
      Var margin = g.add_const(
          g.add(g.scale_const(preds[i], -e), g.scale_const(preds[j], e)), std::abs(gap));
      terms.push_back(g.relu(margin));
    }
  }
  if (terms.empty()) return g.constant_scalar(0.0);
  return g.scale_const(g.sum(g.stack(terms)), 1.0 / static_cast<double>(m * m));
}

/// L = L_plcc + gamma * L_rank.
inline Var total_loss(Graph& g, const std::vector<Var>& preds, const std::vector<double>& mos,
                      double gamma, bool* constant_mos = nullptr) {
  Var plcc = plcc_loss(g, preds, mos, constant_mos);
  if (gamma == 0.0) return plcc;
  return g.add(plcc, g.scale_const(rank_loss(g, preds, mos), gamma));
}

// Value-only conveniences over a throwaway tape.
namespace detail {

template <class BuildLoss>
double loss_value(const std::vector<double>& pred, BuildLoss&& build) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(pred.size());
  for (double p : pred) vars.push_back(g.constant_scalar(p));
  return g.value(build(g, vars))[0];
}

}  // namespace detail

inline double loss_plcc(const std::vector<double>& pred, const std::vector<double>& mos,
                        bool* constant_mos = nullptr) {
  return detail::loss_value(pred, [&](Graph& g, const std::vector<Var>& v) {
    return plcc_loss(g, v, mos, constant_mos);
  });
}

inline double loss_rank(const std::vector<double>& pred, const std::vector<double>& mos) {
  return detail::loss_value(
      pred, [&](Graph& g, const std::vector<Var>& v) { return rank_loss(g, v, mos); });
}

inline double loss_total(const std::vector<double>& pred, const std::vector<double>& mos,
                         double gamma) {
  return detail::loss_value(
      pred, [&](Graph& g, const std::vector<Var>& v) { return total_loss(g, v, mos, gamma); });
}

}  // namespace refqa
