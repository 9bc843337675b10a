// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
//
// refqa: reference-aware quality scoring over precomputed embeddings.
// Subcommands: synth, train, eval, predict, retrieve, gradcheck, ablate,
// pool-stats. All stdout payloads are JSON unless --format table.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "refqa/commands.hpp"

namespace {

using nlohmann::json;

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", message}, {"type", kind}, {"code", code}}.dump() << "\n";
  return code;
}

/// Flags > config file > defaults. The config file is one JSON document
/// holding both model and training fields.
void load_config_file(const std::string& path, refqa::ModelConfig& mc, refqa::TrainConfig& tc) {
  std::ifstream in(path);
  if (!in) throw refqa::DataError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw refqa::DataError("config " + path + ": " + e.what());
  }
  mc = j.get<refqa::ModelConfig>();
  tc = j.get<refqa::TrainConfig>();
}

struct ModelFlagSet {
  std::string strategy, aggregation, feature_mode;
  refqa::ModelConfig staged;

  void attach(CLI::App* cmd) {
    cmd->add_option("--dh,--hidden-dim", staged.hidden_dim,
                    "fusion hidden dim (feature dims come from the dataset)");
    cmd->add_option("--tau", staged.tau, "retrieval similarity threshold");
    cmd->add_option("--strategy", strategy, "retrieval strategy: prompt|feature|random|batch");
    cmd->add_option("--aggregation", aggregation, "reference aggregation: graph|avg");
    cmd->add_option("--feature-mode", feature_mode, "reference features: diff|self");
    cmd->add_option("--dropout", staged.dropout, "fusion dropout rate");
    cmd->add_option("--model-seed", staged.seed, "parameter init seed");
    cmd->add_option("--random-refs", staged.random_refs, "k for the random strategy");
    cmd->add_option("--max-refs", staged.max_refs, "cap reference count (0 = unlimited)");
    cmd->add_flag("--no-visual-branch", "disable the visual branch");
    cmd->add_flag("--no-align-branch", "disable the alignment branch");
    cmd->add_flag("--no-visual-refs", "starve the visual branch of references");
    cmd->add_flag("--no-align-refs", "starve the alignment branch of references");
  }

  void apply(const CLI::App* cmd, refqa::ModelConfig& mc) const {
    auto set = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (set("--dh")) mc.hidden_dim = staged.hidden_dim;
    if (set("--tau")) mc.tau = staged.tau;
    if (set("--strategy")) mc.strategy = refqa::strategy_from_name(strategy);
    if (set("--aggregation")) mc.aggregation = refqa::aggregation_from_name(aggregation);
    if (set("--feature-mode")) mc.feature_mode = refqa::feature_mode_from_name(feature_mode);
    if (set("--dropout")) mc.dropout = staged.dropout;
    if (set("--model-seed")) mc.seed = staged.seed;
    if (set("--random-refs")) mc.random_refs = staged.random_refs;
    if (set("--max-refs")) mc.max_refs = staged.max_refs;
    if (set("--no-visual-branch")) mc.visual_branch = false;
    if (set("--no-align-branch")) mc.align_branch = false;
    if (set("--no-visual-refs")) mc.visual_refs = false;
    if (set("--no-align-refs")) mc.align_refs = false;
  }
};

struct TrainFlagSet {
  refqa::TrainConfig staged;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", staged.epochs, "training epochs");
    cmd->add_option("--batch", staged.batch_size, "mini-batch size");
    cmd->add_option("--lr", staged.lr, "base learning rate");
    cmd->add_option("--weight-decay", staged.weight_decay, "decoupled weight decay");
    cmd->add_option("--gamma", staged.gamma, "rank loss weight");
    cmd->add_option("--warmup-frac", staged.warmup_frac, "fraction of steps spent warming up");
    cmd->add_option("--seed", staged.seed, "master experiment seed");
    cmd->add_option("--repeats", staged.repeats, "protocol repeat count");
    cmd->add_option("--train-frac", staged.train_frac, "train fraction for fresh splits");
  }

  void apply(const CLI::App* cmd, refqa::TrainConfig& tc) const {
    auto set = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (set("--epochs")) tc.epochs = staged.epochs;
    if (set("--batch")) tc.batch_size = staged.batch_size;
    if (set("--lr")) tc.lr = staged.lr;
    if (set("--weight-decay")) tc.weight_decay = staged.weight_decay;
    if (set("--gamma")) tc.gamma = staged.gamma;
    if (set("--warmup-frac")) tc.warmup_frac = staged.warmup_frac;
    if (set("--seed")) tc.seed = staged.seed;
    if (set("--repeats")) tc.repeats = staged.repeats;
    if (set("--train-frac")) tc.train_frac = staged.train_frac;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reference-aware quality scoring engine"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  std::string format = "json";
  app.add_option("--format", format, "output format: json|table")
      ->check(CLI::IsMember({"json", "table"}));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  refqa::cli::SynthOptions synth_opt;
  std::pair<double, double> mos_scale{0.0, 100.0};
  synth->add_option("--out", synth_opt.out_dir, "output directory")->required();
  synth->add_option("--n", synth_opt.spec.n_samples, "number of samples");
  synth->add_option("--clusters", synth_opt.spec.n_clusters, "number of prompt clusters");
  synth->add_option("--dp", synth_opt.spec.dims.prompt, "prompt embedding dim");
  synth->add_option("--dv", synth_opt.spec.dims.visual, "visual feature dim");
  synth->add_option("--ds", synth_opt.spec.dims.align, "alignment feature dim");
  synth->add_option("--spread", synth_opt.spec.cluster_spread, "within-cluster feature spread");
  synth->add_option("--quality-noise", synth_opt.spec.quality_noise,
                    "stddev of mos observation noise");
  synth->add_option("--mos-scale", mos_scale, "mos range as LOW HIGH");
  synth->add_option("--seed", synth_opt.spec.seed, "generator seed");
  synth->add_option("--train-frac", synth_opt.train_frac,
                    "write train/test split labels at this fraction");

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a model over cached features");
  refqa::cli::TrainOptions train_opt;
  std::string train_config_path;
  ModelFlagSet train_model_flags;
  TrainFlagSet train_train_flags;
  train_cmd->add_option("--data", train_opt.data, "manifest path")->required();
  train_cmd->add_option("--out", train_opt.out_model, "output model path");
  train_cmd->add_option("--config", train_config_path, "JSON config (model + training fields)");
  train_cmd->add_flag("--protocol", train_opt.protocol,
                      "run the repeated-split protocol and report mean +/- std");
  train_model_flags.attach(train_cmd);
  train_train_flags.attach(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a split and report metrics");
  refqa::cli::EvalOptions eval_opt;
  std::string eval_split = "test";
  eval_cmd->add_option("--model", eval_opt.model_path, "model path")->required();
  eval_cmd->add_option("--data", eval_opt.data, "manifest path")->required();
  eval_cmd->add_option("--csv", eval_opt.csv_path, "write per-sample id,mos,score");
  eval_cmd->add_option("--split", eval_split, "split to score: test|train")
      ->check(CLI::IsMember({"test", "train"}));

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "emit {id, score} JSON lines");
  refqa::cli::PredictOptions predict_opt;
  predict_cmd->add_option("--model", predict_opt.model_path, "model path")->required();
  predict_cmd->add_option("--data", predict_opt.data, "manifest path")->required();

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "inspect one query's reference list");
  refqa::cli::RetrieveOptions retrieve_opt;
  std::string retrieve_strategy = "prompt";
  retrieve_cmd->add_option("--data", retrieve_opt.data, "manifest path")->required();
  retrieve_cmd->add_option("--id", retrieve_opt.id, "query sample id")->required();
  retrieve_cmd->add_option("--tau", retrieve_opt.tau, "similarity threshold");
  retrieve_cmd->add_option("--strategy", retrieve_strategy,
                           "prompt|feature|random (batch has no CLI form)");
  retrieve_cmd->add_option("--k", retrieve_opt.k, "k for the random strategy");
  retrieve_cmd->add_option("--seed", retrieve_opt.seed, "seed for the random strategy");

  // gradcheck
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  refqa::cli::GradcheckOptions gc_opt;
  gradcheck_cmd->add_option("--dv", gc_opt.visual_dim, "visual dim");
  gradcheck_cmd->add_option("--ds", gc_opt.align_dim, "alignment dim");
  gradcheck_cmd->add_option("--dh", gc_opt.hidden_dim, "hidden dim");
  gradcheck_cmd->add_option("--batch", gc_opt.batch, "batch size");
  gradcheck_cmd->add_option("--step", gc_opt.h, "finite-difference step");
  gradcheck_cmd->add_option("--tol", gc_opt.tol, "max relative error tolerance");
  gradcheck_cmd->add_option("--gamma", gc_opt.gamma, "rank loss weight");
  gradcheck_cmd->add_option("--seed", gc_opt.seed, "batch seed");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "cross-product ablation matrix");
  refqa::cli::AblateOptions ablate_opt;
  std::string ablate_config_path;
  std::vector<std::string> ablate_axes;
  ModelFlagSet ablate_model_flags;
  TrainFlagSet ablate_train_flags;
  ablate_cmd->add_option("--data", ablate_opt.data, "manifest path")->required();
  ablate_cmd->add_option("--config", ablate_config_path, "JSON config");
  ablate_cmd
      ->add_option("--axes", ablate_axes,
                   "axes to vary: feature,aggregation,visual_refs,align_refs")
      ->delimiter(',');
  ablate_model_flags.attach(ablate_cmd);
  ablate_train_flags.attach(ablate_cmd);

  // pool-stats
  auto* pool_cmd = app.add_subcommand("pool-stats", "reference counts across a tau sweep");
  refqa::cli::PoolStatsOptions pool_opt;
  std::vector<double> taus;
  pool_cmd->add_option("--data", pool_opt.data, "manifest path")->required();
  pool_cmd->add_option("--taus", taus, "thresholds to sweep")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(1, "usage", e.what());
  }

  try {
    nlohmann::json out;
    if (*synth) {
      if (synth->count("--mos-scale")) {
        synth_opt.spec.mos_low = mos_scale.first;
        synth_opt.spec.mos_high = mos_scale.second;
      }
      out = refqa::cli::cmd_synth(synth_opt);
    } else if (*train_cmd) {
      if (!train_config_path.empty())
        load_config_file(train_config_path, train_opt.model, train_opt.train);
      train_model_flags.apply(train_cmd, train_opt.model);
      train_train_flags.apply(train_cmd, train_opt.train);
      out = refqa::cli::cmd_train(train_opt);
    } else if (*eval_cmd) {
      eval_opt.split = eval_split == "train" ? refqa::Split::train : refqa::Split::test;
      out = refqa::cli::cmd_eval(eval_opt);
    } else if (*predict_cmd) {
      refqa::cli::cmd_predict(std::cout, predict_opt);
      return 0;
    } else if (*retrieve_cmd) {
      retrieve_opt.strategy = refqa::strategy_from_name(retrieve_strategy);
      out = refqa::cli::cmd_retrieve(retrieve_opt);
    } else if (*gradcheck_cmd) {
      out = refqa::cli::cmd_gradcheck(gc_opt);
    } else if (*ablate_cmd) {
      if (!ablate_config_path.empty())
        load_config_file(ablate_config_path, ablate_opt.model, ablate_opt.train);
      ablate_model_flags.apply(ablate_cmd, ablate_opt.model);
      ablate_train_flags.apply(ablate_cmd, ablate_opt.train);
      if (ablate_cmd->count("--axes")) ablate_opt.axes = ablate_axes;
      out = refqa::cli::cmd_ablate(ablate_opt);
    } else if (*pool_cmd) {
      if (pool_cmd->count("--taus")) pool_opt.taus = taus;
      out = refqa::cli::cmd_pool_stats(pool_opt);
    }

    if (format == "table") {
      if (*pool_cmd)
        std::cout << refqa::cli::pool_stats_table(out);
      else if (*ablate_cmd)
        std::cout << refqa::cli::ablate_table(out);
      else
        std::cout << out.dump(2) << "\n";
    } else {
      std::cout << out.dump() << "\n";
    }
    return 0;
  } catch (const refqa::NumericError& e) {
    return fail(3, "numeric", e.what());
  } catch (const refqa::ConfigError& e) {
    return fail(1, "usage", e.what());
  } catch (const refqa::DataError& e) {
    return fail(2, "data", e.what());
  } catch (const refqa::DimError& e) {
    return fail(2, "data", e.what());
  } catch (const refqa::Error& e) {
    return fail(2, "data", e.what());
  } catch (const std::exception& e) {
    return fail(2, "internal", e.what());
  }
}
