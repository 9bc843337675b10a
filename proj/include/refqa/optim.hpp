// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "refqa/graph.hpp"

namespace refqa {

/// Linear warm-up to base_lr over the first warmup_frac of the run, then
/// cosine annealing to zero at total_steps.
inline double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr,
                          double warmup_frac) {
  if (step > total_steps) throw ConfigError("lr_schedule: step beyond total_steps");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0))
    throw ConfigError("lr_schedule: warmup_frac in [0, 1)");
  const std::size_t warmup =
      static_cast<std::size_t>(warmup_frac * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps == warmup) return base_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// AdamW over a ParamRegistry: bias-corrected moments plus decoupled weight
/// decay (theta -= lr * wd * theta, independent of the adaptive step).
/// Gradients are validated and zeroed by each step.
class AdamW {
 public:
  AdamW(ParamRegistry& reg, AdamWConfig cfg = {}) : reg_(&reg), cfg_(cfg) {
    m_.reserve(reg.size());
    v_.reserve(reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      m_.push_back(Tensor::zeros(reg.value_at(i).shape));
      v_.push_back(Tensor::zeros(reg.value_at(i).shape));
    }
  }

  std::size_t steps_taken() const { return step_; }

  void step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < reg_->size(); ++p) {
      Tensor& theta = reg_->value_at(p);
      Tensor& grad = reg_->grad_at(p);
      if (!grad.all_finite())
        throw NumericError("adamw: non-finite gradient for " + reg_->name_at(p));
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (std::size_t k = 0; k < theta.size(); ++k) {
        if (cfg_.weight_decay != 0.0) theta[k] -= lr * cfg_.weight_decay * theta[k];
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * grad[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        theta[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        grad[k] = 0.0;
      }
    }
  }

 private:
  ParamRegistry* reg_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

}  // namespace refqa
