// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "refqa/eval.hpp"
#include "refqa/losses.hpp"
#include "refqa/model.hpp"
#include "refqa/optim.hpp"

namespace refqa {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr = 1e-5;
  double weight_decay = 0.05;
  double gamma = 0.3;
  double warmup_frac = 0.1;
  std::uint64_t seed = 1;
  std::size_t repeats = 5;
  double train_frac = 0.8;

  void validate() const {
    if (batch_size < 2) throw ConfigError("train config: batch_size must be >= 2");
    if (gamma < 0.0) throw ConfigError("train config: gamma must be >= 0");
    if (!(warmup_frac >= 0.0 && warmup_frac < 1.0))
      throw ConfigError("train config: warmup_frac in [0, 1)");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (repeats < 1) throw ConfigError("train config: repeats must be >= 1");
    if (!(train_frac > 0.0 && train_frac < 1.0))
      throw ConfigError("train config: train_frac in (0, 1)");
    if (lr <= 0.0) throw ConfigError("train config: lr must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"gamma", c.gamma},
                     {"warmup_frac", c.warmup_frac},
                     {"seed", c.seed},
                     {"repeats", c.repeats},
                     {"train_frac", c.train_frac}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.gamma = j.value("gamma", d.gamma);
  c.warmup_frac = j.value("warmup_frac", d.warmup_frac);
  c.seed = j.value("seed", d.seed);
  c.repeats = j.value("repeats", d.repeats);
  c.train_frac = j.value("train_frac", d.train_frac);
}

struct EpochStats {
  double plcc_loss = 0.0;
  double rank_loss = 0.0;
  double total_loss = 0.0;
  std::size_t batches = 0;
  std::size_t constant_mos_batches = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochStats& e) {
  j = nlohmann::json{{"plcc_loss", e.plcc_loss},
                     {"rank_loss", e.rank_loss},
                     {"total_loss", e.total_loss},
                     {"batches", e.batches},
                     {"constant_mos_batches", e.constant_mos_batches}};
}

inline void to_json(nlohmann::json& j, const TrainReport& r) {
  j = nlohmann::json{{"epochs", r.epochs},
                     {"seed", r.seed},
                     {"train_size", r.train_size},
                     {"steps", r.steps},
                     {"wall_seconds", r.wall_seconds}};
}

namespace detail {

/// Mini-batch row groups in a fixed order. Tail groups smaller than 2 are
/// dropped (the correlation loss is undefined on them); anything of size
/// >= 2 is kept.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& rows,
                                                          std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, rows.size());
    if (end - start < 2) break;
    batches.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                         rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace detail

/// Stage-two training over cached features: shuffle, batch, retrieve from the
/// train-only pool, forward both branches, optimize the correlation + rank
/// objective under the warm-up/cosine schedule. Fully deterministic per seed.
inline std::pair<ModelState, TrainReport> train(const Dataset& ds, const ModelConfig& model_config,
                                                const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<std::size_t> train_rows = ds.rows_of(Split::train);
  if (train_rows.size() < 2 * train_config.batch_size)
    throw DataError("train: split has " + std::to_string(train_rows.size()) +
                    " samples, needs at least " + std::to_string(2 * train_config.batch_size));
  for (std::size_t row : train_rows)
    if (!ds.samples[row].mos) throw DataError("train: sample " + ds.samples[row].id + " has no mos");

  ReferencePool pool(ds);
  ModelState state = init_model(model_config);
  AdamW optimizer(state.params,
                  AdamWConfig{0.9, 0.999, 1e-8, train_config.weight_decay});
  Rng loop_rng = Rng(train_config.seed).fork(0x747261);

  // Similarity retrieval depends only on the pool, so graphs are gathered
  // once per query id and reused across epochs.
  const bool cacheable = model_config.strategy == RetrievalStrategy::prompt ||
                         model_config.strategy == RetrievalStrategy::feature;
  std::unordered_map<std::size_t, GatheredRefs> ref_cache;
  if (cacheable) {
    for (std::size_t row : train_rows)
      ref_cache.emplace(row, gather_refs(model_config, ds.samples[row], pool));
  }

  const std::size_t batches_per_epoch =
      detail::make_batches(train_rows, train_config.batch_size).size();
  if (batches_per_epoch == 0) throw DataError("train: no usable batches");
  const std::size_t total_steps = train_config.epochs * batches_per_epoch;

  TrainReport report;
  report.seed = train_config.seed;
  report.train_size = train_rows.size();

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_rows;
    loop_rng.shuffle(order);
    EpochStats stats;
    for (const auto& batch : detail::make_batches(order, train_config.batch_size)) {
      const double lr_t = lr_schedule(step, total_steps, train_config.lr,
                                      train_config.warmup_frac);
      Graph g(&state.params);
      std::vector<Var> preds;
      std::vector<double> mos;
      preds.reserve(batch.size());
      mos.reserve(batch.size());
      for (std::size_t row : batch) {
        const Sample& s = ds.samples[row];
        GatheredRefs gathered;
        if (cacheable) {
          gathered = ref_cache.at(row);
        } else {
          gathered = gather_refs(model_config, s, pool, &loop_rng, &batch);
        }
        preds.push_back(predict_var(g, state, s, gathered.visual, gathered.align,
                                    /*training=*/true, loop_rng));
        mos.push_back(*s.mos);
      }
      bool constant_mos = false;
      Var plcc = plcc_loss(g, preds, mos, &constant_mos);
      Var rank = rank_loss(g, preds, mos);
      Var loss = g.add(plcc, g.scale_const(rank, train_config.gamma));
      const double loss_value = g.value(loss)[0];
      if (!std::isfinite(loss_value)) throw NumericError("train: non-finite loss");
      g.backward(loss);
      optimizer.step(lr_t);
      ++step;

      stats.plcc_loss += g.value(plcc)[0];
      stats.rank_loss += g.value(rank)[0];
      stats.total_loss += loss_value;
      stats.batches += 1;
      stats.constant_mos_batches += constant_mos ? 1 : 0;
    }
    stats.plcc_loss /= static_cast<double>(stats.batches);
    stats.rank_loss /= static_cast<double>(stats.batches);
    stats.total_loss /= static_cast<double>(stats.batches);
    report.epochs.push_back(stats);
  }
  report.steps = step;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(state), std::move(report)};
}

// ---------------------------------------------------------------------------
// Repeated-split protocol
// ---------------------------------------------------------------------------

struct RepeatResult {
  std::uint64_t seed = 0;
  EvalResult test_metrics;
  TrainReport train_report;
};

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct ProtocolReport {
  std::vector<RepeatResult> repeats;
  MetricAggregate srcc, plcc, krcc, rmse;
  double wall_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const EvalResult& r) {
  j = nlohmann::json{{"srcc", r.srcc}, {"plcc", r.plcc}, {"krcc", r.krcc},
                     {"rmse", r.rmse}, {"n", r.n}};
  if (r.degenerate) j["degenerate"] = *r.degenerate;
}

inline void to_json(nlohmann::json& j, const MetricAggregate& a) {
  j = nlohmann::json{{"mean", a.mean}, {"stddev", a.stddev}};
}

inline void to_json(nlohmann::json& j, const ProtocolReport& p) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : p.repeats) {
    reps.push_back(nlohmann::json{{"seed", r.seed},
                                  {"test", r.test_metrics},
                                  {"train_report", r.train_report}});
  }
  j = nlohmann::json{{"repeats", reps}, {"srcc", p.srcc},         {"plcc", p.plcc},
                     {"krcc", p.krcc},  {"rmse", p.rmse},         {"wall_seconds", p.wall_seconds}};
}

namespace detail {

inline MetricAggregate aggregate_metric(const std::vector<double>& values) {
  MetricAggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return a;
}

}  // namespace detail

/// Repeats the experiment with fresh splits and fresh seeds, reporting
/// mean +/- std per metric over the repeats.
inline ProtocolReport run_protocol(const Dataset& ds, const ModelConfig& model_config,
                                   const TrainConfig& train_config) {
  train_config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolReport out;
  std::vector<double> srcc, plcc, krcc, rmse_v;
  for (std::size_t r = 0; r < train_config.repeats; ++r) {
    const std::uint64_t repeat_seed = Rng(train_config.seed).fork(1000 + r).seed();
    Dataset split_ds = random_split(ds, train_config.train_frac, repeat_seed);
    ModelConfig mc = model_config;
    mc.seed = repeat_seed;
    TrainConfig tc = train_config;
    tc.seed = repeat_seed;
    auto [state, train_report] = train(split_ds, mc, tc);
    ReferencePool pool(split_ds);
    EvalResult metrics = evaluate(state, split_ds, Split::test, pool);
    srcc.push_back(metrics.srcc);
    plcc.push_back(metrics.plcc);
    krcc.push_back(metrics.krcc);
    rmse_v.push_back(metrics.rmse);
    out.repeats.push_back({repeat_seed, metrics, std::move(train_report)});
  }
  out.srcc = detail::aggregate_metric(srcc);
  out.plcc = detail::aggregate_metric(plcc);
  out.krcc = detail::aggregate_metric(krcc);
  out.rmse = detail::aggregate_metric(rmse_v);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace refqa
