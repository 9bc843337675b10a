// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "refqa/graph.hpp"

namespace refqa {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_err = 0.0;
  double tol = 0.0;

  bool pass() const { return max_rel_err <= tol; }
};

/// Relative-error denominator floor. Central differences carry an O(h^2)
/// truncation error (~1e-9 at h = 1e-4 on unit-scale objectives) that no
/// correct gradient can beat, so entries smaller than this floor are judged
/// on absolute error against tol * floor instead of pure relative error.
constexpr double kGradCheckScaleFloor = 1e-4;

/// Compares the analytic gradient of a scalar computation against central
/// finite differences (f(p+h) - f(p-h)) / 2h, entry by entry.
///
/// `f` is called as f(reg, with_grad); when with_grad is true it must run
/// backward and leave gradients in the registry, otherwise it only needs to
/// return the value. The computation must be deterministic (disable dropout).
template <class F>
GradCheckReport grad_check(ParamRegistry& reg, F&& f, double h, double tol) {
  if (h <= 0.0) throw ConfigError("grad_check: h must be positive");
  GradCheckReport report;
  report.tol = tol;

  reg.zero_grads();
  const double base = f(reg, true);
  if (!std::isfinite(base)) throw NumericError("grad_check: f is non-finite at the base point");

  std::vector<Tensor> analytic;
  analytic.reserve(reg.size());
  for (std::size_t p = 0; p < reg.size(); ++p) analytic.push_back(reg.grad_at(p));

  for (std::size_t p = 0; p < reg.size(); ++p) {
    GradCheckEntry entry;
    entry.name = reg.name_at(p);
    Tensor& theta = reg.value_at(p);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = theta[k];
      theta[k] = saved + h;
      const double fp = f(reg, false);
      theta[k] = saved - h;
      const double fm = f(reg, false);
      theta[k] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite f when perturbing " + entry.name + "[" +
                           std::to_string(k) + "]");
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[p][k];
      const double abs_err = std::abs(an - fd);
      const double rel_err =
          abs_err / std::max({std::abs(an), std::abs(fd), kGradCheckScaleFloor});
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, rel_err);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  reg.zero_grads();
  return report;
}

}  // namespace refqa
