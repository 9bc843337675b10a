// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "refqa/graph.hpp"
#include "refqa/rng.hpp"

namespace refqa {

enum class Act { none, relu, gelu };

struct MlpLayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Act act = Act::none;
};

/// A plain feed-forward stack. Dropout, when nonzero, follows every hidden
/// activation but never the output layer.
struct MlpSpec {
  std::vector<MlpLayerSpec> layers;
  double dropout = 0.0;
};

/// Glorot-uniform matrix; entries drawn row-major so the stream layout is
/// part of the format.
inline Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

inline std::string mlp_param_name(const std::string& prefix, std::size_t layer, const char* kind) {
  return prefix + ".l" + std::to_string(layer) + "." + kind;
}

inline void register_mlp(ParamRegistry& reg, const std::string& prefix, const MlpSpec& spec,
                         Rng& rng) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    reg.add(mlp_param_name(prefix, i, "W"), glorot_uniform(l.out, l.in, rng));
    reg.add(mlp_param_name(prefix, i, "b"), Tensor::zeros({l.out}));
  }
}

inline Var apply_act(Graph& g, Var x, Act act) {
  switch (act) {
    case Act::relu:
      return g.relu(x);
    case Act::gelu:
      return g.gelu(x);
    case Act::none:
      return x;
  }
  return x;
}

/// Runs the stack on the tape. Evaluation mode is deterministic; training
/// mode consumes rng draws only when dropout is active.
inline Var mlp_forward(Graph& g, Var x, const std::string& prefix, const MlpSpec& spec,
                       bool training, Rng& rng) {
  Var h = x;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Var W = g.param(mlp_param_name(prefix, i, "W"));
    Var b = g.param(mlp_param_name(prefix, i, "b"));
    h = g.linear(h, W, b);
    h = apply_act(g, h, spec.layers[i].act);
    const bool hidden = i + 1 < spec.layers.size();
    if (hidden && spec.dropout > 0.0) h = g.dropout(h, spec.dropout, training, rng);
  }
  return h;
}

/// Residual refinement block: mlp(x) + x. Both linears are square.
inline MlpSpec adapter_spec(std::size_t dim) {
  return MlpSpec{{{dim, dim, Act::gelu}, {dim, dim, Act::none}}, 0.0};
}

inline Var adapter_forward(Graph& g, Var x, const std::string& prefix, std::size_t dim,
                           bool training, Rng& rng) {
  return g.add(mlp_forward(g, x, prefix, adapter_spec(dim), training, rng), x);
}

}  // namespace refqa
