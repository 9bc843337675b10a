// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "refqa/dataio.hpp"
#include "refqa/eval.hpp"
#include "refqa/gradcheck.hpp"
#include "refqa/model.hpp"
#include "refqa/retrieval.hpp"
#include "refqa/train.hpp"

namespace refqa::cli {

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
  SynthSpec spec;
  std::string out_dir;
  double train_frac = 0.0;  // > 0: write split labels into the manifest
};

inline nlohmann::json cmd_synth(const SynthOptions& opt) {
  Dataset ds = generate_synthetic(opt.spec);
  const bool labeled = opt.train_frac > 0.0;
  if (labeled) ds = random_split(std::move(ds), opt.train_frac, opt.spec.seed);
  save_dataset(ds, opt.out_dir, labeled);
  return nlohmann::json{{"out_dir", opt.out_dir},
                        {"manifest", opt.out_dir + "/manifest.jsonl"},
                        {"n_samples", ds.samples.size()},
                        {"n_clusters", opt.spec.n_clusters},
                        {"dims",
                         {{"prompt", ds.dims.prompt},
                          {"visual", ds.dims.visual},
                          {"align", ds.dims.align}}},
                        {"seed", opt.spec.seed}};
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string out_model;
  ModelConfig model;
  TrainConfig train;
  bool protocol = false;  // run the repeated-split protocol instead of one fit
};

/// Ensures the dataset carries a usable train/test split; datasets without
/// explicit labels get a fresh seeded split.
inline Dataset prepare_split(Dataset ds, const TrainConfig& tc) {
  const bool has_test = !ds.rows_of(Split::test).empty();
  if (!has_test) return random_split(std::move(ds), tc.train_frac, tc.seed);
  return ds;
}

inline nlohmann::json cmd_train(const TrainOptions& opt) {
  Dataset ds = load_dataset(opt.data);
  ModelConfig mc = opt.model;
  mc.visual_dim = ds.dims.visual;  // feature dims are dataset facts
  mc.align_dim = ds.dims.align;
  if (opt.protocol) {
    ProtocolReport report = run_protocol(ds, mc, opt.train);
    return nlohmann::json(report);
  }
  ds = prepare_split(std::move(ds), opt.train);
  auto [state, report] = train(ds, mc, opt.train);
  nlohmann::json out{{"train_report", report}};
  if (!opt.out_model.empty()) {
    save_model(state, opt.out_model);
    out["model"] = opt.out_model;
  }
  ReferencePool pool(ds);
  out["test"] = nlohmann::json(evaluate(state, ds, Split::test, pool));
  return out;
}

// ---------------------------------------------------------------------------
// eval / predict
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string model_path;
  std::string data;
  std::string csv_path;  // optional per-sample (id, mos, score) dump
  Split split = Split::test;
};

inline nlohmann::json cmd_eval(const EvalOptions& opt) {
  ModelState state = load_model(opt.model_path);
  Dataset ds = load_dataset(opt.data);
  if (ds.dims.visual != state.config.visual_dim || ds.dims.align != state.config.align_dim)
    throw DataError("eval: dataset dims (visual " + std::to_string(ds.dims.visual) + ", align " +
                    std::to_string(ds.dims.align) + ") do not match model config (visual_dim " +
                    std::to_string(state.config.visual_dim) + ", align_dim " +
                    std::to_string(state.config.align_dim) + ")");
  ReferencePool pool(ds);
  const auto scored = predict_split(state, ds, opt.split, pool);
  if (!opt.csv_path.empty()) {
    std::FILE* f = std::fopen(opt.csv_path.c_str(), "w");
    if (!f) throw DataError("cannot write csv: " + opt.csv_path);
    std::fprintf(f, "id,mos,score\n");
    for (const auto& s : scored)
      std::fprintf(f, "%s,%.17g,%.17g\n", s.id.c_str(), s.mos, s.score);
    std::fclose(f);
  }
  std::vector<double> pred, mos;
  for (const auto& s : scored) {
    pred.push_back(s.score);
    mos.push_back(s.mos);
  }
  nlohmann::json out = nlohmann::json(score_predictions(pred, mos));
  out["split"] = split_name(opt.split);
  return out;
}

struct PredictOptions {
  std::string model_path;
  std::string data;
};

/// Emits one {"id", "score"} JSON line per sample of the dataset.
inline void cmd_predict(std::ostream& os, const PredictOptions& opt) {
  ModelState state = load_model(opt.model_path);
  Dataset ds = load_dataset(opt.data);
  ReferencePool pool(ds);
  Rng eval_rng(state.config.seed);
  Rng retrieval_rng = Rng(state.config.seed).fork(0x65766c);
  for (const Sample& s : ds.samples) {
    GatheredRefs refs = state.config.strategy == RetrievalStrategy::batch
                            ? GatheredRefs{}
                            : gather_refs(state.config, s, pool, &retrieval_rng);
    const double score = predict(state, s, refs.visual, refs.align, false, eval_rng);
    os << nlohmann::json{{"id", s.id}, {"score", score}}.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// retrieve / pool-stats
// ---------------------------------------------------------------------------

struct RetrieveOptions {
  std::string data;
  std::string id;
  double tau = 0.7;
  RetrievalStrategy strategy = RetrievalStrategy::prompt;
  std::size_t k = 8;
  std::uint64_t seed = 1;
};

inline nlohmann::json cmd_retrieve(const RetrieveOptions& opt) {
  Dataset ds = load_dataset(opt.data);
  ReferencePool pool(ds);
  const Sample& query = ds.sample(opt.id);
  Rng rng(opt.seed);
  ReferenceGraph graph =
      retrieve_variant(opt.strategy, query, pool, opt.tau, opt.k, &rng, nullptr);
  nlohmann::json refs = nlohmann::json::array();
  for (const ReferenceEdge& e : graph.refs)
    refs.push_back({{"id", e.id}, {"weight", e.weight}});
  return nlohmann::json{{"query_id", graph.query_id},
                        {"tau", opt.tau},
                        {"strategy", strategy_name(opt.strategy)},
                        {"count", graph.refs.size()},
                        {"refs", refs}};
}

struct PoolStatsOptions {
  std::string data;
  std::vector<double> taus = {0.3, 0.5, 0.6, 0.7, 0.8};
};

inline nlohmann::json cmd_pool_stats(const PoolStatsOptions& opt) {
  Dataset ds = load_dataset(opt.data);
  ReferencePool pool(ds);
  nlohmann::json rows = nlohmann::json::array();
  for (double tau : opt.taus) {
    const PoolStats st = pool_stats(pool, ds, tau);
    rows.push_back({{"tau", tau},
                    {"min", st.min_refs},
                    {"max", st.max_refs},
                    {"avg", st.mean_refs}});
  }
  return nlohmann::json{{"pool_size", pool.size()}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::size_t visual_dim = 8;
  std::size_t align_dim = 8;
  std::size_t hidden_dim = 8;
  std::size_t batch = 4;
  double h = 1e-4;
  double tol = 1e-4;
  double gamma = 0.3;
  std::uint64_t seed = 1;
};

/// Finite-difference check of the full objective through the whole model on
/// one random batch (features, opinion scores, and reference sets drawn from
/// the seed; dropout disabled so the computation is deterministic).
inline GradCheckReport model_grad_check(const GradcheckOptions& opt) {
  ModelConfig mc;
  mc.visual_dim = opt.visual_dim;
  mc.align_dim = opt.align_dim;
  mc.hidden_dim = opt.hidden_dim;
  mc.dropout = 0.0;
  mc.seed = opt.seed;
  ModelState state = init_model(mc);

  Rng rng = Rng(opt.seed).fork(0x676331);
  struct BatchItem {
    Sample sample;
    std::vector<std::vector<double>> ref_visual;
    std::vector<std::vector<double>> ref_align;
    std::vector<double> weights;
  };
  std::vector<BatchItem> batch(opt.batch);
  std::vector<double> mos;
  for (std::size_t i = 0; i < opt.batch; ++i) {
    BatchItem& item = batch[i];
    item.sample.id = "gc-" + std::to_string(i);
    item.sample.visual_feat.resize(mc.visual_dim);
    for (double& v : item.sample.visual_feat) v = rng.normal();
    item.sample.align_feat.resize(mc.align_dim);
    for (double& v : item.sample.align_feat) v = rng.normal();
    // 0..3 references; the first sample always runs the empty-set path
    const std::size_t n_refs = i == 0 ? 0 : rng.below(4);
    for (std::size_t n = 0; n < n_refs; ++n) {
      std::vector<double> rv(mc.visual_dim), rs(mc.align_dim);
      for (double& v : rv) v = rng.normal();
      for (double& v : rs) v = rng.normal();
      item.ref_visual.push_back(std::move(rv));
      item.ref_align.push_back(std::move(rs));
      item.weights.push_back(rng.uniform(0.7, 1.0));
    }
    mos.push_back(rng.uniform(0.0, 100.0));
  }

  auto objective = [&](ParamRegistry& reg, bool with_grad) -> double {
    Graph g(&reg);
    Rng unused(0);
    std::vector<Var> preds;
    for (const BatchItem& item : batch) {
      std::vector<RefFeature> refs_v, refs_s;
      for (std::size_t n = 0; n < item.weights.size(); ++n) {
        const std::string ref_id = item.sample.id + "-r" + std::to_string(n);
        refs_v.push_back({ref_id, &item.ref_visual[n], item.weights[n]});
        refs_s.push_back({ref_id, &item.ref_align[n], item.weights[n]});
      }
      preds.push_back(
          predict_var(g, state, item.sample, refs_v, refs_s, /*training=*/false, unused));
    }
    Var loss = total_loss(g, preds, mos, opt.gamma);
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };

  return grad_check(state.params, objective, opt.h, opt.tol);
}

inline nlohmann::json cmd_gradcheck(const GradcheckOptions& opt) {
  const GradCheckReport report = model_grad_check(opt);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : report.params)
    params.push_back({{"name", p.name}, {"max_rel_err", p.max_rel_err}});
  return nlohmann::json{{"pass", report.pass()},
                        {"max_rel_err", report.max_rel_err},
                        {"tol", report.tol},
                        {"h", opt.h},
                        {"params", params}};
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOptions {
  std::string data;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> axes = {"feature", "aggregation"};
};

/// Cross-product ablation over {feature, aggregation, visual_refs,
/// align_refs}; each cell runs the full repeated-split protocol. A failing
/// cell is recorded and the run continues.
inline nlohmann::json cmd_ablate(const AblateOptions& opt) {
  Dataset ds = load_dataset(opt.data);
  ModelConfig base = opt.model;
  base.visual_dim = ds.dims.visual;
  base.align_dim = ds.dims.align;
  for (const std::string& axis : opt.axes) {
    if (axis != "feature" && axis != "aggregation" && axis != "visual_refs" &&
        axis != "align_refs")
      throw ConfigError("ablate: unknown axis: " + axis);
  }
  const bool vary_feature =
      std::find(opt.axes.begin(), opt.axes.end(), "feature") != opt.axes.end();
  const bool vary_agg =
      std::find(opt.axes.begin(), opt.axes.end(), "aggregation") != opt.axes.end();
  const bool vary_vrefs =
      std::find(opt.axes.begin(), opt.axes.end(), "visual_refs") != opt.axes.end();
  const bool vary_arefs =
      std::find(opt.axes.begin(), opt.axes.end(), "align_refs") != opt.axes.end();

  const std::vector<FeatureMode> features =
      vary_feature ? std::vector<FeatureMode>{FeatureMode::diff, FeatureMode::self}
                   : std::vector<FeatureMode>{base.feature_mode};
  const std::vector<AggregationMode> aggs =
      vary_agg ? std::vector<AggregationMode>{AggregationMode::graph, AggregationMode::average}
               : std::vector<AggregationMode>{opt.model.aggregation};
  const std::vector<bool> vrefs = vary_vrefs ? std::vector<bool>{true, false}
                                             : std::vector<bool>{opt.model.visual_refs};
  const std::vector<bool> arefs = vary_arefs ? std::vector<bool>{true, false}
                                             : std::vector<bool>{opt.model.align_refs};

  nlohmann::json rows = nlohmann::json::array();
  for (FeatureMode fm : features) {
    for (AggregationMode am : aggs) {
      for (bool vr : vrefs) {
        for (bool ar : arefs) {
          ModelConfig mc = base;
          mc.feature_mode = fm;
          mc.aggregation = am;
          mc.visual_refs = vr;
          mc.align_refs = ar;
          nlohmann::json row{{"feature", feature_mode_name(fm)},
                             {"aggregation", aggregation_name(am)},
                             {"visual_refs", vr},
                             {"align_refs", ar}};
          try {
            ProtocolReport rep = run_protocol(ds, mc, opt.train);
            row["srcc"] = nlohmann::json(rep.srcc);
            row["plcc"] = nlohmann::json(rep.plcc);
            row["krcc"] = nlohmann::json(rep.krcc);
            row["rmse"] = nlohmann::json(rep.rmse);
          } catch (const Error& e) {
            row["error"] = e.what();
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return nlohmann::json{{"axes", opt.axes}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// aligned-text rendering for --format table
// ---------------------------------------------------------------------------

inline std::string format_table(const std::vector<std::string>& columns,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += cells[c];
      if (c + 1 < cells.size()) out.append(width[c] - cells[c].size() + 2, ' ');
    }
    out += "\n";
  };
  emit(columns);
  for (const auto& row : rows) emit(row);
  return out;
}

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string pool_stats_table(const nlohmann::json& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.at("rows")) {
    rows.push_back({fmt_num(r.at("tau").get<double>()),
                    std::to_string(r.at("min").get<std::size_t>()),
                    std::to_string(r.at("max").get<std::size_t>()),
                    fmt_num(r.at("avg").get<double>())});
  }
  return format_table({"tau", "min", "max", "avg"}, rows);
}

inline std::string ablate_table(const nlohmann::json& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.at("rows")) {
    std::vector<std::string> row{r.at("feature").get<std::string>(),
                                 r.at("aggregation").get<std::string>(),
                                 r.at("visual_refs").get<bool>() ? "on" : "off",
                                 r.at("align_refs").get<bool>() ? "on" : "off"};
    if (r.contains("error")) {
      row.push_back("error: " + r.at("error").get<std::string>());
      row.insert(row.end(), 3, "-");
    } else {
      for (const char* m : {"srcc", "plcc", "krcc", "rmse"}) {
        row.push_back(fmt_num(r.at(m).at("mean").get<double>()) + "+-" +
                      fmt_num(r.at(m).at("stddev").get<double>()));
      }
    }
    rows.push_back(std::move(row));
  }
  return format_table({"feature", "aggregation", "visual_refs", "align_refs", "srcc", "plcc",
                       "krcc", "rmse"},
                      rows);
}

}  // namespace refqa::cli
