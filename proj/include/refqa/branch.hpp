// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "refqa/graph.hpp"
#include "refqa/mlp.hpp"

namespace refqa {

/// What a branch aggregates from each reference: query-minus-reference
/// difference vectors, or the raw reference features (ablation path).
enum class FeatureMode { diff, self };

/// How multiple references combine: similarity-weighted sum (the reference
/// graph) or a plain average.
enum class AggregationMode { graph, average };

inline const char* feature_mode_name(FeatureMode m) {
  return m == FeatureMode::diff ? "diff" : "self";
}

inline const char* aggregation_name(AggregationMode m) {
  return m == AggregationMode::graph ? "graph" : "avg";
}

inline FeatureMode feature_mode_from_name(const std::string& s) {
  if (s == "diff") return FeatureMode::diff;
  if (s == "self") return FeatureMode::self;
  throw ConfigError("unknown feature mode: " + s);
}

inline AggregationMode aggregation_from_name(const std::string& s) {
  if (s == "graph") return AggregationMode::graph;
  if (s == "avg" || s == "average") return AggregationMode::average;
  throw ConfigError("unknown aggregation mode: " + s);
}

/// One reference as a branch sees it: the edge weight plus a view of the
/// reference's feature vector at this branch's dimension.
struct RefFeature {
  std::string id;
  const std::vector<double>* feat = nullptr;
  double weight = 1.0;
};

constexpr double kLayerNormEps = 1e-5;

/// Delta_n = query - ref_n, order preserving.
inline std::vector<std::vector<double>> diff_features(
    const std::vector<double>& query, const std::vector<const std::vector<double>*>& refs) {
  std::vector<std::vector<double>> out;
  out.reserve(refs.size());
  for (const auto* r : refs) {
    if (r->size() != query.size())
      throw DimError("diff_features: query dim " + std::to_string(query.size()) + " vs ref dim " +
                     std::to_string(r->size()));
    std::vector<double> d(query.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = query[i] - (*r)[i];
    out.push_back(std::move(d));
  }
  return out;
}

/// GeLU(sum_n s_n * W * x_n), with the weighted sum folded into a single
/// projection; an empty reference set yields the zero vector.
inline Var aggregate(Graph& g, const std::vector<std::vector<double>>& vecs,
                     const std::vector<double>& weights, Var projection) {
  if (vecs.size() != weights.size())
    throw DimError("aggregate: " + std::to_string(vecs.size()) + " vectors vs " +
                   std::to_string(weights.size()) + " weights");
  const std::size_t dim = g.value(projection).shape[1];
  Tensor z = Tensor::zeros({dim});
  for (std::size_t n = 0; n < vecs.size(); ++n) {
    if (vecs[n].size() != dim)
      throw DimError("aggregate: vector dim " + std::to_string(vecs[n].size()) +
                     " vs projection " + g.value(projection).shape_str());
    for (std::size_t i = 0; i < dim; ++i) z[i] += weights[n] * vecs[n][i];
  }
  return g.gelu(g.matvec(projection, g.constant(std::move(z))));
}

/// GeLU((1/N) * sum_n W * x_n); reference weights are ignored.
inline Var aggregate_avg(Graph& g, const std::vector<std::vector<double>>& vecs, Var projection) {
  std::vector<double> uniform(vecs.size(),
                              vecs.empty() ? 0.0 : 1.0 / static_cast<double>(vecs.size()));
  return aggregate(g, vecs, uniform, projection);
}

/// Learnable state of one difference-aggregation branch, registered under a
/// unique prefix. The projection is bias-free; the gate starts at zero so
/// reference trust opens at the neutral sigmoid midpoint.
inline void register_branch_params(ParamRegistry& reg, const std::string& prefix, std::size_t dim,
                                   Rng& rng) {
  reg.add(prefix + ".proj", glorot_uniform(dim, dim, rng));
  register_mlp(reg, prefix + ".adapt_self", adapter_spec(dim), rng);
  register_mlp(reg, prefix + ".adapt_ref", adapter_spec(dim), rng);
  reg.add(prefix + ".gate", Tensor::zeros({2 * dim}));
  register_mlp(reg, prefix + ".fuse", MlpSpec{{{2 * dim, dim, Act::gelu}}, 0.0}, rng);
  reg.add(prefix + ".ln.gain", [&] {
    Tensor t = Tensor::zeros({dim});
    for (double& v : t.data) v = 1.0;
    return t;
  }());
  reg.add(prefix + ".ln.bias", Tensor::zeros({dim}));
}

struct BranchConfig {
  std::size_t dim = 0;
  FeatureMode feature = FeatureMode::diff;
  AggregationMode aggregation = AggregationMode::graph;
};

struct BranchOutput {
  Var enhanced;               // the reference-enhanced representation
  double gate = 0.0;          // sigmoid gate value in (0, 1)
  Tensor aggregated;          // value of the aggregated reference feature
  std::vector<std::vector<double>> diffs;  // per-reference vectors (diagnostics)
};

/// Full branch pass. References are summed in ascending-id order regardless
/// of input order, which makes the result bit-identical under permutation of
/// the reference list.
inline BranchOutput branch_forward(Graph& g, const std::vector<double>& query_feat,
                                   std::vector<RefFeature> refs, const std::string& prefix,
                                   const BranchConfig& cfg, bool training, Rng& rng,
                                   bool want_diagnostics = false) {
  if (query_feat.size() != cfg.dim)
    throw DimError("branch_forward: query dim " + std::to_string(query_feat.size()) +
                   " vs configured " + std::to_string(cfg.dim));
  std::sort(refs.begin(), refs.end(),
            [](const RefFeature& a, const RefFeature& b) { return a.id < b.id; });

  Tensor z = Tensor::zeros({cfg.dim});
  const double scale = cfg.aggregation == AggregationMode::average && !refs.empty()
                           ? 1.0 / static_cast<double>(refs.size())
                           : 1.0;
  BranchOutput out;
  for (const RefFeature& r : refs) {
    if (r.feat->size() != cfg.dim)
      throw DimError("branch_forward: reference " + r.id + " dim " +
                     std::to_string(r.feat->size()) + " vs configured " +
                     std::to_string(cfg.dim));
    const double w = cfg.aggregation == AggregationMode::graph ? r.weight : scale;
    std::vector<double> base(cfg.dim);
    for (std::size_t i = 0; i < cfg.dim; ++i) {
      base[i] = cfg.feature == FeatureMode::diff ? query_feat[i] - (*r.feat)[i] : (*r.feat)[i];
      z[i] += w * base[i];
    }
    if (want_diagnostics) out.diffs.push_back(std::move(base));
  }

  Var aggregated = g.gelu(g.matvec(g.param(prefix + ".proj"), g.constant(std::move(z))));
  Var self_refined = adapter_forward(g, g.constant(Tensor::vector(query_feat)),
                                     prefix + ".adapt_self", cfg.dim, training, rng);
  Var ref_refined =
      adapter_forward(g, aggregated, prefix + ".adapt_ref", cfg.dim, training, rng);
  Var alpha = g.sigmoid(g.dot(g.param(prefix + ".gate"), g.concat(self_refined, ref_refined)));
  Var fused = mlp_forward(g, g.concat(self_refined, g.scale(alpha, ref_refined)),
                          prefix + ".fuse", MlpSpec{{{2 * cfg.dim, cfg.dim, Act::gelu}}, 0.0},
                          training, rng);
  out.enhanced = g.layer_norm(fused, g.param(prefix + ".ln.gain"), g.param(prefix + ".ln.bias"),
                              kLayerNormEps);
  out.gate = g.value(alpha)[0];
  out.aggregated = g.value(aggregated);
  return out;
}

}  // namespace refqa
