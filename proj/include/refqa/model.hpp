// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "refqa/branch.hpp"
#include "refqa/dataio.hpp"
#include "refqa/graph.hpp"
#include "refqa/retrieval.hpp"

namespace refqa {

/// Everything that shapes the predictor. `visual_branch`/`align_branch`
/// remove a branch entirely (the fusion input shrinks); `visual_refs`/
/// `align_refs` keep the branch but starve it of references, which by the
/// empty-set semantics equals retrieval returning nothing.
struct ModelConfig {
  std::size_t visual_dim = 64;
  std::size_t align_dim = 64;
  std::size_t hidden_dim = 32;
  double tau = 0.7;
  RetrievalStrategy strategy = RetrievalStrategy::prompt;
  AggregationMode aggregation = AggregationMode::graph;
  FeatureMode feature_mode = FeatureMode::diff;
  bool visual_branch = true;
  bool align_branch = true;
  bool visual_refs = true;
  bool align_refs = true;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::size_t random_refs = 8;  // k for the random retrieval strategy
  std::size_t max_refs = 0;     // 0 = unlimited; otherwise keep top-k by weight

  void validate() const {
    if (!visual_branch && !align_branch)
      throw ConfigError("model config: at least one branch must be enabled");
    if (visual_dim == 0 || align_dim == 0 || hidden_dim == 0)
      throw ConfigError("model config: dims must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout in [0, 1)");
    if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("model config: tau in [0, 1)");
  }

  std::size_t fused_width() const {
    return (visual_branch ? visual_dim : 0) + (align_branch ? align_dim : 0);
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"visual_dim", c.visual_dim},
                     {"align_dim", c.align_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"tau", c.tau},
                     {"strategy", strategy_name(c.strategy)},
                     {"aggregation", aggregation_name(c.aggregation)},
                     {"feature_mode", feature_mode_name(c.feature_mode)},
                     {"visual_branch", c.visual_branch},
                     {"align_branch", c.align_branch},
                     {"visual_refs", c.visual_refs},
                     {"align_refs", c.align_refs},
                     {"dropout", c.dropout},
                     {"seed", c.seed},
                     {"random_refs", c.random_refs},
                     {"max_refs", c.max_refs}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.visual_dim = j.value("visual_dim", d.visual_dim);
  c.align_dim = j.value("align_dim", d.align_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.tau = j.value("tau", d.tau);
  c.strategy = strategy_from_name(j.value("strategy", std::string("prompt")));
  c.aggregation = aggregation_from_name(j.value("aggregation", std::string("graph")));
  c.feature_mode = feature_mode_from_name(j.value("feature_mode", std::string("diff")));
  c.visual_branch = j.value("visual_branch", d.visual_branch);
  c.align_branch = j.value("align_branch", d.align_branch);
  c.visual_refs = j.value("visual_refs", d.visual_refs);
  c.align_refs = j.value("align_refs", d.align_refs);
  c.dropout = j.value("dropout", d.dropout);
  c.seed = j.value("seed", d.seed);
  c.random_refs = j.value("random_refs", d.random_refs);
  c.max_refs = j.value("max_refs", d.max_refs);
}

constexpr const char* kVisualPrefix = "visual";
constexpr const char* kAlignPrefix = "align";

inline MlpSpec fusion_spec(const ModelConfig& c) {
  return MlpSpec{{{c.fused_width(), c.hidden_dim, Act::relu},
                  {c.hidden_dim, c.hidden_dim, Act::none}},
                 c.dropout};
}

/// Model = config + parameter registry. Parameters register in a fixed order
/// (visual branch, alignment branch, fusion, regression), which pins both the
/// init stream layout and the serialized format.
struct ModelState {
  ModelConfig config;
  ParamRegistry params;
};

inline ModelState init_model(const ModelConfig& config) {
  config.validate();
  ModelState state;
  state.config = config;
  Rng rng = Rng(config.seed).fork(0x6d6f64);
  if (config.visual_branch)
    register_branch_params(state.params, kVisualPrefix, config.visual_dim, rng);
  if (config.align_branch)
    register_branch_params(state.params, kAlignPrefix, config.align_dim, rng);
  register_mlp(state.params, "head.fuse", fusion_spec(config), rng);
  register_mlp(state.params, "head.reg", MlpSpec{{{config.hidden_dim, 1, Act::none}}, 0.0}, rng);
  return state;
}

struct PredictDiag {
  double visual_gate = 0.0;
  double align_gate = 0.0;
  std::size_t visual_refs = 0;
  std::size_t align_refs = 0;
};

/// Tape-building forward pass shared by prediction and training. The same
/// reference graph feeds both branches; each branch reads features at its
/// own dimension.
inline Var predict_var(Graph& g, const ModelState& state, const Sample& sample,
                       const std::vector<RefFeature>& refs_v,
                       const std::vector<RefFeature>& refs_s, bool training, Rng& rng,
                       PredictDiag* diag = nullptr) {
  const ModelConfig& c = state.config;
  if (sample.visual_feat.size() != c.visual_dim || sample.align_feat.size() != c.align_dim)
    throw DimError("predict: sample " + sample.id + " features (" +
                   std::to_string(sample.visual_feat.size()) + ", " +
                   std::to_string(sample.align_feat.size()) + ") vs config dims (" +
                   std::to_string(c.visual_dim) + ", " + std::to_string(c.align_dim) + ")");

  std::vector<Var> parts;
  if (c.visual_branch) {
    BranchConfig bc{c.visual_dim, c.feature_mode, c.aggregation};
    BranchOutput out = branch_forward(g, sample.visual_feat, refs_v, kVisualPrefix, bc, training,
                                      rng, diag != nullptr);
    if (diag) {
      diag->visual_gate = out.gate;
      diag->visual_refs = refs_v.size();
    }
    parts.push_back(out.enhanced);
  }
  if (c.align_branch) {
    BranchConfig bc{c.align_dim, c.feature_mode, c.aggregation};
    BranchOutput out = branch_forward(g, sample.align_feat, refs_s, kAlignPrefix, bc, training,
                                      rng, diag != nullptr);
    if (diag) {
      diag->align_gate = out.gate;
      diag->align_refs = refs_s.size();
    }
    parts.push_back(out.enhanced);
  }
  Var fused_in = parts.size() == 2 ? g.concat(parts[0], parts[1]) : parts[0];
  Var h = mlp_forward(g, fused_in, "head.fuse", fusion_spec(c), training, rng);
  Var raw = mlp_forward(g, h, "head.reg", MlpSpec{{{c.hidden_dim, 1, Act::none}}, 0.0}, training,
                        rng);
  return g.softplus(raw);
}

/// Plain-value prediction; evaluation mode is deterministic and the score is
/// strictly positive.
inline double predict(const ModelState& state, const Sample& sample,
                      const std::vector<RefFeature>& refs_v,
                      const std::vector<RefFeature>& refs_s, bool training, Rng& rng,
                      PredictDiag* diag = nullptr) {
  // forward-only pass: the registry is read, never written (no backward here),
  // so concurrent predicts over one shared state are safe
  Graph g(const_cast<ParamRegistry*>(&state.params));
  Var y = predict_var(g, state, sample, refs_v, refs_s, training, rng, diag);
  const double score = g.value(y)[0];
  if (!std::isfinite(score)) throw NumericError("predict: non-finite score for " + sample.id);
  return score;
}

/// Materializes one reference graph into per-branch feature lists, honoring
/// the per-branch reference toggles and the optional top-k cap.
struct GatheredRefs {
  std::vector<RefFeature> visual;
  std::vector<RefFeature> align;
  std::size_t graph_size = 0;
};

inline GatheredRefs gather_refs(const ModelConfig& config, const Sample& query,
                                const ReferencePool& pool, Rng* rng = nullptr,
                                const std::vector<std::size_t>* batch_rows = nullptr) {
  GatheredRefs out;
  if (!config.visual_refs && !config.align_refs) return out;
  ReferenceGraph graph = retrieve_variant(config.strategy, query, pool, config.tau,
                                          config.random_refs, rng, batch_rows);
  if (config.max_refs > 0 && graph.refs.size() > config.max_refs)
    graph.refs.resize(config.max_refs);  // edges are sorted by descending weight
  out.graph_size = graph.refs.size();
  const Dataset& ds = pool.dataset();
  for (const ReferenceEdge& e : graph.refs) {
    const Sample& r = ds.samples[e.sample_index];
    if (config.visual_refs) out.visual.push_back({e.id, &r.visual_feat, e.weight});
    if (config.align_refs) out.align.push_back({e.id, &r.align_feat, e.weight});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: "RFQM" | u32 version | u32 config json length | json bytes |
// u32 param count | per param: u32 name length, name, u32 rank, u64 extents,
// f64 data. Parameters follow registry order, so files are byte-reproducible.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'R', 'F', 'Q', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const ModelState& state, const std::string& path) {
  std::string out;
  out.append(kModelMagic, 4);
  detail::put_u32(out, kModelVersion);
  const std::string cfg = nlohmann::json(state.config).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  detail::put_u32(out, static_cast<std::uint32_t>(state.params.size()));
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const std::string& name = state.params.name_at(i);
    const Tensor& t = state.params.value_at(i);
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape) detail::put_u64(out, e);
    for (double v : t.data) detail::put_f64(out, v);
  }
  detail::write_file_bytes(path, out);
}

inline ModelState load_model(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  if (r.raw(4) != std::string(kModelMagic, 4)) throw DataError("bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw DataError("unsupported model version " + std::to_string(version) + " in " + path);
  const std::uint32_t cfg_len = r.u32();
  ModelConfig config;
  try {
    config = nlohmann::json::parse(r.raw(cfg_len)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt config block in " + path + ": " + e.what());
  }

  // Rebuild the registry from the config, then overwrite values; any
  // disagreement between stored shapes and the config is a hard error.
  ModelState state = init_model(config);
  const std::uint32_t count = r.u32();
  if (count != state.params.size())
    throw DataError("model file " + path + " has " + std::to_string(count) +
                    " parameters, config implies " + std::to_string(state.params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.raw(name_len);
    if (!state.params.contains(name))
      throw DataError("model file " + path + " has unexpected parameter: " + name);
    Tensor& dst = state.params.value(name);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t k = 0; k < rank; ++k) shape[k] = static_cast<std::size_t>(r.u64());
    if (shape != dst.shape) {
      Tensor probe;
      probe.shape = shape;
      throw DataError("model file " + path + ": parameter " + name + " has shape " +
                      probe.shape_str() + ", config implies " + dst.shape_str());
    }
    for (double& v : dst.data) v = r.f64();
  }
  if (!r.at_end()) throw DataError("trailing bytes in " + path);
  return state;
}

}  // namespace refqa
