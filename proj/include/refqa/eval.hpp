// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "refqa/metrics.hpp"
#include "refqa/model.hpp"
#include "refqa/retrieval.hpp"

namespace refqa {

struct ScoredSample {
  std::string id;
  double mos = 0.0;
  double score = 0.0;
};

/// Scores every sample of a split in evaluation mode, references drawn from
/// the (train-only) pool. Batch-strategy models have no mini-batch at
/// inference time and degrade to reference-free scoring.
inline std::vector<ScoredSample> predict_split(const ModelState& state, const Dataset& ds,
                                               Split split, const ReferencePool& pool) {
  std::vector<ScoredSample> out;
  Rng eval_rng(state.config.seed);  // eval mode draws nothing; kept for the signature
  Rng retrieval_rng = Rng(state.config.seed).fork(0x65766c);
  for (std::size_t row : ds.rows_of(split)) {
    const Sample& s = ds.samples[row];
    if (!s.mos) throw DataError("sample " + s.id + " has no mos; cannot evaluate");
    GatheredRefs refs = state.config.strategy == RetrievalStrategy::batch
                            ? GatheredRefs{}
                            : gather_refs(state.config, s, pool, &retrieval_rng);
    const double score =
        predict(state, s, refs.visual, refs.align, /*training=*/false, eval_rng);
    out.push_back({s.id, *s.mos, score});
  }
  return out;
}

/// SRCC/PLCC/KRCC/RMSE of the model over one split.
inline EvalResult evaluate(const ModelState& state, const Dataset& ds, Split split,
                           const ReferencePool& pool) {
  const auto scored = predict_split(state, ds, split, pool);
  if (scored.empty())
    throw DataError(std::string("evaluate: split '") + split_name(split) +
                    "' is empty; the manifest carries no such labels");
  std::vector<double> pred, mos;
  pred.reserve(scored.size());
  mos.reserve(scored.size());
  for (const auto& s : scored) {
    pred.push_back(s.score);
    mos.push_back(s.mos);
  }
  return score_predictions(pred, mos);
}

}  // namespace refqa
