// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "refqa/dataio.hpp"
#include "refqa/error.hpp"
#include "refqa/rng.hpp"

namespace refqa {

/// Candidate references: the training split only. The pool is shared by
/// training and inference and never contains test ids.
class ReferencePool {
 public:
  ReferencePool(const Dataset& ds) : ds_(&ds), rows_(ds.rows_of(Split::train)) {}

  std::size_t size() const { return rows_.size(); }
  const Dataset& dataset() const { return *ds_; }
  const std::vector<std::size_t>& rows() const { return rows_; }

  const Sample& member(std::size_t i) const { return ds_->samples[rows_[i]]; }

  bool contains(const std::string& id) const {
    for (std::size_t r : rows_)
      if (ds_->samples[r].id == id) return true;
    return false;
  }

 private:
  const Dataset* ds_;
  std::vector<std::size_t> rows_;
};

/// One edge of a query-centered star graph.
struct ReferenceEdge {
  std::string id;
  std::size_t sample_index = 0;  // row in the pool's dataset
  double weight = 0.0;
};

/// Star topology: edges run only between the query and each reference,
/// weighted by prompt similarity. The query never references itself and an
/// empty reference list is a legal graph.
struct ReferenceGraph {
  std::string query_id;
  std::vector<ReferenceEdge> refs;
};

enum class RetrievalStrategy { prompt, feature, random, batch };

inline const char* strategy_name(RetrievalStrategy s) {
  switch (s) {
    case RetrievalStrategy::prompt:
      return "prompt";
    case RetrievalStrategy::feature:
      return "feature";
    case RetrievalStrategy::random:
      return "random";
    case RetrievalStrategy::batch:
      return "batch";
  }
  return "?";
}

inline RetrievalStrategy strategy_from_name(const std::string& name) {
  if (name == "prompt") return RetrievalStrategy::prompt;
  if (name == "feature") return RetrievalStrategy::feature;
  if (name == "random") return RetrievalStrategy::random;
  if (name == "batch") return RetrievalStrategy::batch;
  throw ConfigError("unknown retrieval strategy: " + name);
}

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimError("cosine_sim: length " + std::to_string(a.size()) + " vs " +
                   std::to_string(b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine_sim: zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

namespace detail {

inline void sort_edges(std::vector<ReferenceEdge>& refs) {
  std::sort(refs.begin(), refs.end(), [](const ReferenceEdge& a, const ReferenceEdge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.id < b.id;
  });
}

template <class FeatOf>
ReferenceGraph retrieve_by_similarity(const Sample& query, const ReferencePool& pool, double tau,
                                      FeatOf&& feat_of) {
  if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("retrieval threshold must be in [0, 1)");
  ReferenceGraph graph;
  graph.query_id = query.id;
  const auto& qf = feat_of(query);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Sample& cand = pool.member(i);
    if (cand.id == query.id) continue;  // a video is never its own reference
    const double s = cosine_sim(qf, feat_of(cand));
    if (s > tau) graph.refs.push_back({cand.id, pool.rows()[i], s});
  }
  sort_edges(graph.refs);
  return graph;
}

}  // namespace detail

/// Threshold retrieval over prompt similarity; the production strategy.
/// Ordering is descending weight with id as the tiebreak.
inline ReferenceGraph retrieve(const Sample& query, const ReferencePool& pool, double tau) {
  return detail::retrieve_by_similarity(
      query, pool, tau, [](const Sample& s) -> const std::vector<double>& { return s.prompt_emb; });
}

/// Ablation strategies. `random` draws k distinct members (seeded) and
/// `batch` uses the other members of the current mini-batch; both carry
/// uniform weight 1 since no similarity is involved.
inline ReferenceGraph retrieve_variant(RetrievalStrategy strategy, const Sample& query,
                                       const ReferencePool& pool, double tau, std::size_t k = 0,
                                       Rng* rng = nullptr,
                                       const std::vector<std::size_t>* batch_rows = nullptr) {
  switch (strategy) {
    case RetrievalStrategy::prompt:
      return retrieve(query, pool, tau);
    case RetrievalStrategy::feature:
      return detail::retrieve_by_similarity(
          query, pool, tau,
          [](const Sample& s) -> const std::vector<double>& { return s.visual_feat; });
    case RetrievalStrategy::random: {
      if (k < 1) throw ConfigError("random retrieval requires k >= 1");
      if (!rng) throw ConfigError("random retrieval requires an rng");
      ReferenceGraph graph;
      graph.query_id = query.id;
      std::vector<std::size_t> candidates;
      candidates.reserve(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool.member(i).id != query.id) candidates.push_back(i);
      const std::size_t take = std::min(k, candidates.size());
      for (std::size_t t = 0; t < take; ++t) {
        const std::size_t j = t + static_cast<std::size_t>(rng->below(candidates.size() - t));
        std::swap(candidates[t], candidates[j]);
        const Sample& cand = pool.member(candidates[t]);
        graph.refs.push_back({cand.id, pool.rows()[candidates[t]], 1.0});
      }
      detail::sort_edges(graph.refs);
      return graph;
    }
    case RetrievalStrategy::batch: {
      if (!batch_rows) throw ConfigError("batch retrieval requires the current batch");
      ReferenceGraph graph;
      graph.query_id = query.id;
      for (std::size_t row : *batch_rows) {
        const Sample& cand = pool.dataset().samples[row];
        if (cand.id == query.id) continue;
        graph.refs.push_back({cand.id, row, 1.0});
      }
      detail::sort_edges(graph.refs);
      return graph;
    }
  }
  throw ConfigError("unknown retrieval strategy");
}

struct PoolStats {
  std::size_t min_refs = 0;
  std::size_t max_refs = 0;
  double mean_refs = 0.0;
};

/// Reference-set sizes over every sample of the dataset used as a query.
inline PoolStats pool_stats(const ReferencePool& pool, const Dataset& ds, double tau) {
  PoolStats st;
  st.min_refs = std::numeric_limits<std::size_t>::max();
  double total = 0.0;
  for (const Sample& q : ds.samples) {
    const std::size_t n = retrieve(q, pool, tau).refs.size();
    st.min_refs = std::min(st.min_refs, n);
    st.max_refs = std::max(st.max_refs, n);
    total += static_cast<double>(n);
  }
  if (ds.samples.empty()) st.min_refs = 0;
  st.mean_refs = ds.samples.empty() ? 0.0 : total / static_cast<double>(ds.samples.size());
  return st;
}

}  // namespace refqa
