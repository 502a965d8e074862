// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "talr/codebook.hpp"
#include "talr/dataset.hpp"
#include "talr/evaluation.hpp"
#include "talr/trainer.hpp"

namespace talr {

namespace {

using nlohmann::json;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw data_error(path + ": write failed");
}

json per_query_array(const std::vector<QueryEval>& rows, bool defined_flag_ap,
                     double QueryEval::*field) {
  json arr = json::array();
  for (const auto& q : rows) {
    const bool defined = defined_flag_ap ? q.ap_defined : q.ndcg_defined;
    if (defined) {
      arr.push_back(q.*field);
    } else {
      arr.push_back(nullptr);
    }
  }
  return arr;
}

json metric_report(const std::string& name, double mean,
                   std::size_t undefined_queries, const json& per_query,
                   std::optional<std::size_t> cutoff = std::nullopt) {
  json j{{"name", name},
         {"mean", mean},
         {"undefined_queries", undefined_queries},
         {"per_query", per_query}};
  if (cutoff) j["cutoff"] = *cutoff;
  return j;
}

json summary_to_json(const EvalSummary& s) {
  json metrics;
  metrics["ap_t"] = metric_report(
      "AP_T", s.mean_ap, s.undefined_ap,
      per_query_array(s.per_query, true, &QueryEval::ap));
  metrics["ap_t_at_k"] = metric_report(
      "AP_T@k", s.mean_ap_at_k, s.undefined_ap,
      per_query_array(s.per_query, true, &QueryEval::ap_at_k), s.ap_cutoff);
  json dcg_arr = json::array();
  for (const auto& q : s.per_query) dcg_arr.push_back(q.dcg);
  metrics["dcg_t"] = metric_report("DCG_T", s.mean_dcg, 0, dcg_arr);
  metrics["ndcg_t"] = metric_report(
      "NDCG_T", s.mean_ndcg, s.undefined_ndcg,
      per_query_array(s.per_query, false, &QueryEval::ndcg));
  return metrics;
}

struct AffinityArgs {
  std::string mode = "single_label";
  std::vector<double> thresholds = {0.05, 0.01, 0.002, 0.001};
  std::vector<int> level_values = {1, 2, 5, 10};

  AffinityOracle make() const {
    AffinityOracle oracle;
    oracle.mode = affinity_mode_from_name(mode);
    oracle.quantiles = thresholds;
    oracle.level_values = level_values;
    return oracle;
  }
};

void add_affinity_flags(CLI::App* cmd, AffinityArgs& args) {
  cmd->add_option("--affinity-mode", args.mode,
                  "single_label | multilabel | threshold");
  cmd->add_option("--thresholds", args.thresholds,
                  "threshold mode distance quantiles (decreasing)");
  cmd->add_option("--level-values", args.level_values,
                  "threshold mode affinity values (increasing)");
}

Dataset load_dataset_files(const std::string& features_path,
                           const std::string& labels_path) {
  Dataset d;
  d.features = load_features(features_path);
  if (!labels_path.empty()) {
    d.label_sets = load_labels(labels_path);
    if (d.label_sets.size() != d.features.rows)
      throw data_error(labels_path + ": label count " +
                       std::to_string(d.label_sets.size()) +
                       " does not match feature rows " +
                       std::to_string(d.features.rows));
  }
  return d;
}

/// Folds (x - mean) * inv_std into the linear weights so checkpoints apply to
/// raw features; this turns on the bias column.
HashModel fold_standardizer(const HashModel& model, const Standardizer& std_) {
  HashModel out;
  out.num_bits = model.num_bits;
  out.input_dim = model.input_dim;
  out.has_bias = true;
  out.weights = Matrix(model.num_bits, model.input_dim + 1);
  for (std::size_t r = 0; r < model.num_bits; ++r) {
    double bias = model.has_bias ? model.weights(r, model.input_dim) : 0.0;
    for (std::size_t c = 0; c < model.input_dim; ++c) {
      const double w = model.weights(r, c) * std_.inv_std[c];
      out.weights(r, c) = w;
      bias -= w * std_.mean[c];
    }
    out.weights(r, model.input_dim) = bias;
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const std::string& out_prefix, const SynthConfig& cfg) {
  const SynthData data = make_synthetic_clusters(cfg);
  auto dump = [&](const Dataset& d, const std::string& split) {
    save_features(d.features, out_prefix + "." + split + ".feat");
    save_labels(d.label_sets, out_prefix + "." + split + ".labels");
  };
  dump(data.train, "train");
  dump(data.query, "query");
  dump(data.database, "database");
  std::printf("synth: wrote %zu train / %zu query / %zu database items (dim %zu, "
              "%zu classes) to %s.*\n",
              cfg.train, cfg.query, cfg.database, cfg.dim, cfg.classes,
              out_prefix.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string features, labels, config_path;
  std::string checkpoint_out = "model.talrmodl";
  std::string report_out;
  std::size_t bits = 16;
  AffinityArgs affinity;
  TrainConfig cfg;
  bool bias = false;
};

void apply_config_file(TrainArgs& args) {
  if (args.config_path.empty()) return;
  std::ifstream in(args.config_path);
  if (!in) throw data_error(args.config_path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(args.config_path + ": invalid JSON: " + e.what());
  }
  auto get = [&](const char* key, auto& target) {
    if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
  };
  get("bits", args.bits);
  get("batch_size", args.cfg.batch_size);
  get("epochs", args.cfg.epochs);
  get("learning_rate", args.cfg.learning_rate);
  get("momentum", args.cfg.momentum);
  get("alpha", args.cfg.alpha0);
  get("alpha_growth", args.cfg.alpha_growth);
  get("alpha_cap", args.cfg.alpha_cap);
  get("delta", args.cfg.bin_slope);
  get("seed", args.cfg.seed);
  get("bias", args.bias);
  get("paper_exact", args.cfg.relax.paper_exact);
  if (j.contains("objective"))
    args.cfg.objective = objective_from_name(j.at("objective").get<std::string>());
  get("affinity_mode", args.affinity.mode);
  get("thresholds", args.affinity.thresholds);
  get("level_values", args.affinity.level_values);
}

json train_config_echo(const TrainArgs& args) {
  return json{{"bits", args.bits},
              {"objective", objective_name(args.cfg.objective)},
              {"batch_size", args.cfg.batch_size},
              {"epochs", args.cfg.epochs},
              {"learning_rate", args.cfg.learning_rate},
              {"momentum", args.cfg.momentum},
              {"alpha", args.cfg.alpha0},
              {"alpha_growth", args.cfg.alpha_growth},
              {"alpha_cap", args.cfg.alpha_cap},
              {"delta", args.cfg.bin_slope},
              {"seed", args.cfg.seed},
              {"bias", args.bias},
              {"paper_exact", args.cfg.relax.paper_exact},
              {"affinity_mode", args.affinity.mode},
              {"thresholds", args.affinity.thresholds},
              {"level_values", args.affinity.level_values}};
}

int cmd_train(const TrainArgs& args) {
  if (args.bits == 0)
    throw std::invalid_argument("--bits must be >= 1");
  args.cfg.validate();

  const double t0 = now_ms();
  Dataset train_data = load_dataset_files(args.features, args.labels);
  const Standardizer std_ = Standardizer::fit(train_data.features);
  std_.apply(train_data.features);

  AffinityOracle oracle = args.affinity.make();
  if (oracle.mode == AffinityMode::threshold_multilevel)
    fit_threshold_cuts(oracle, train_data.features);
  else if (!train_data.has_labels())
    throw data_error("label-based affinity mode requires --labels");

  Rng init_rng(args.cfg.seed);
  HashModel model =
      init_hash_model(args.bits, train_data.dim(), args.bias, init_rng);

  TrainResult result;
  if (args.cfg.epochs == 0) {
    result.model = model;
    result.final_alpha = args.cfg.alpha0;
  } else {
    result = train(std::move(model), train_data, oracle, args.cfg);
  }
  const double train_ms = now_ms() - t0;

  const HashModel deployable = fold_standardizer(result.model, std_);
  save_checkpoint(deployable, result.final_alpha, args.checkpoint_out);

  json history = json::array();
  for (const EpochStats& e : result.history) {
    json h{{"epoch", e.epoch},
           {"objective", e.objective},
           {"exact_in_batch", e.exact_in_batch},
           {"mean_abs_code", e.mean_abs_code},
           {"alpha", e.alpha},
           {"learning_rate", e.learning_rate},
           {"skipped_queries", e.skipped_queries},
           {"degenerate_batches", e.degenerate_batches}};
    if (e.validation_metric) h["validation_metric"] = *e.validation_metric;
    history.push_back(h);
  }
  json report{{"report_version", 1},
              {"command", "train"},
              {"config", train_config_echo(args)},
              {"history", history},
              {"checkpoint", args.checkpoint_out},
              {"timings_ms", json{{"train", train_ms}}}};
  if (oracle.mode == AffinityMode::threshold_multilevel)
    report["affinity"] = json{{"mode", "threshold"},
                              {"cut_distances", oracle.cut_distances}};
  if (!args.report_out.empty()) write_json(report, args.report_out);

  if (!result.history.empty())
    std::printf("train: %zu epochs, final objective %.4f, exact in-batch %.4f\n",
                result.history.size(), result.history.back().objective,
                result.history.back().exact_in_batch);
  std::printf("train: checkpoint written to %s\n", args.checkpoint_out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string query_codebook, db_codebook;
  std::string queries, database;
  std::string query_labels, db_labels;
  std::string train_features;  // threshold mode: refit cuts + standardizer
  AffinityArgs affinity;
  std::size_t ap_cutoff = 0;  // 0 = none
  std::size_t dcg_cutoff = 0;
  bool tiebreak = false;
  std::uint64_t seed = 0;
  std::string report_out;
};

struct EvalInputs {
  BinaryCodebook query_codes, db_codes;
  Dataset query_data, db_data;
  AffinityOracle oracle;
  std::vector<int> levels;
};

EvalInputs prepare_eval_inputs(const EvalArgs& args) {
  EvalInputs in;
  in.oracle = args.affinity.make();

  if (!args.queries.empty())
    in.query_data = load_dataset_files(args.queries, args.query_labels);
  else if (!args.query_labels.empty())
    in.query_data.label_sets = load_labels(args.query_labels);
  if (!args.database.empty())
    in.db_data = load_dataset_files(args.database, args.db_labels);
  else if (!args.db_labels.empty())
    in.db_data.label_sets = load_labels(args.db_labels);

  if (!args.checkpoint.empty()) {
    if (args.queries.empty() || args.database.empty())
      throw std::invalid_argument("--checkpoint needs --queries and --database features");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    if (ck.model.input_dim != in.query_data.dim() ||
        ck.model.input_dim != in.db_data.dim())
      throw data_error("model input dim " + std::to_string(ck.model.input_dim) +
                       " does not match feature dim " +
                       std::to_string(in.query_data.dim()));
    in.query_codes = binarize_and_pack(ck.model.activations(in.query_data.features));
    in.db_codes = binarize_and_pack(ck.model.activations(in.db_data.features));
  } else if (!args.query_codebook.empty() && !args.db_codebook.empty()) {
    in.query_codes = load_codebook(args.query_codebook);
    in.db_codes = load_codebook(args.db_codebook);
  } else {
    throw std::invalid_argument(
        "eval needs either --checkpoint or --query-codebook/--db-codebook");
  }

  if (in.oracle.mode == AffinityMode::threshold_multilevel) {
    if (args.train_features.empty())
      throw std::invalid_argument("threshold affinity eval requires --train-features");
    if (args.queries.empty() || args.database.empty())
      throw std::invalid_argument("threshold affinity eval requires feature files");
    Matrix train = load_features(args.train_features);
    const Standardizer std_ = Standardizer::fit(train);
    std_.apply(train);
    fit_threshold_cuts(in.oracle, train);
    // Affinity distances live in the same standardized space as the cuts.
    std_.apply(in.query_data.features);
    std_.apply(in.db_data.features);
    in.levels = in.oracle.levels(in.db_data);
  } else {
    if (!in.query_data.has_labels() || !in.db_data.has_labels())
      throw data_error("label-based affinity mode requires query and database labels");
    if (in.query_data.label_sets.size() != in.query_codes.num_items ||
        in.db_data.label_sets.size() != in.db_codes.num_items)
      throw data_error("label counts do not match codebook items");
    if (in.oracle.mode == AffinityMode::multilabel_shared_count) {
      std::size_t most = 0;
      for (const auto& s : in.query_data.label_sets) most = std::max(most, s.size());
      for (const auto& s : in.db_data.label_sets) most = std::max(most, s.size());
      in.levels.clear();
      for (std::size_t v = 0; v <= std::max<std::size_t>(most, 1); ++v)
        in.levels.push_back(static_cast<int>(v));
    } else {
      in.levels = {0, 1};
    }
  }
  return in;
}

int cmd_eval(const EvalArgs& args) {
  EvalInputs in = prepare_eval_inputs(args);

  EvalConfig cfg;
  if (args.ap_cutoff > 0) cfg.ap_cutoff = args.ap_cutoff;
  if (args.dcg_cutoff > 0) cfg.dcg_cutoff = args.dcg_cutoff;
  cfg.with_tiebreak = args.tiebreak;
  cfg.tiebreak_seed = args.seed;

  const AffinityFn affinity = [&](std::size_t q, std::size_t i) {
    return in.oracle.affinity(in.query_data, q, in.db_data, i);
  };
  const EvalSummary summary = evaluate_hamming_ranking(
      in.query_codes, in.db_codes, affinity, in.levels, cfg);

  json report{{"report_version", 1},
              {"command", "eval"},
              {"config",
               json{{"affinity_mode", args.affinity.mode},
                    {"ap_cutoff", args.ap_cutoff},
                    {"dcg_cutoff", args.dcg_cutoff},
                    {"num_queries", in.query_codes.num_items},
                    {"num_database", in.db_codes.num_items},
                    {"bits", in.db_codes.num_bits}}},
              {"levels", summary.levels},
              {"metrics", summary_to_json(summary)},
              {"timings_ms", json{{"eval", summary.elapsed_ms}}}};
  if (!args.report_out.empty()) write_json(report, args.report_out);

  std::printf("eval: %zu queries vs %zu items (%zu bits)\n",
              in.query_codes.num_items, in.db_codes.num_items,
              in.db_codes.num_bits);
  std::printf("  AP_T    %.6f  (undefined %zu)\n", summary.mean_ap,
              summary.undefined_ap);
  if (cfg.ap_cutoff)
    std::printf("  AP_T@%zu %.6f\n", *cfg.ap_cutoff, summary.mean_ap_at_k);
  std::printf("  DCG_T   %.6f\n", summary.mean_dcg);
  std::printf("  NDCG_T  %.6f  (undefined %zu)\n", summary.mean_ndcg,
              summary.undefined_ndcg);
  return 0;
}

// ---------------------------------------------------------------------------
// tiebreak-audit

struct AuditArgs {
  std::string queries, database;
  std::string query_labels, db_labels;
  AffinityArgs affinity;
  std::vector<std::size_t> bits = {12, 48};
  std::uint64_t seed = 1;
  std::string out_prefix = "tiebreak_audit";
};

int cmd_tiebreak_audit(const AuditArgs& args) {
  Dataset query_data = load_dataset_files(args.queries, args.query_labels);
  Dataset db_data = load_dataset_files(args.database, args.db_labels);
  if (query_data.dim() != db_data.dim())
    throw data_error("query/database feature dimensions differ");
  AffinityOracle oracle = args.affinity.make();
  if (oracle.mode == AffinityMode::threshold_multilevel)
    throw std::invalid_argument("tiebreak-audit supports label-based affinities");
  const std::vector<int> levels = {0, 1};
  const AffinityFn affinity = [&](std::size_t q, std::size_t i) {
    const int v = oracle.affinity(query_data, q, db_data, i);
    return v > 0 ? 1 : 0;
  };

  // One random linear model per bit width; ranges are a property of the code
  // length, so random codes are the baseline audit subject.
  const Standardizer std_ = Standardizer::fit(db_data.features);
  std_.apply(db_data.features);
  std_.apply(query_data.features);

  std::ofstream csv(args.out_prefix + ".csv");
  if (!csv) throw data_error(args.out_prefix + ".csv: cannot open for writing");
  csv << "bits,query,pessimistic,optimistic,tie_aware,random\n";

  Rng rng(args.seed);
  json widths = json::array();
  for (std::size_t bits : args.bits) {
    Rng model_rng(rng.next_u64());
    const HashModel model =
        init_hash_model(bits, db_data.dim(), false, model_rng);
    const BinaryCodebook qc = binarize_and_pack(model.activations(query_data.features));
    const BinaryCodebook dc = binarize_and_pack(model.activations(db_data.features));
    EvalConfig cfg;
    cfg.with_tiebreak = true;
    cfg.tiebreak_seed = args.seed;
    const EvalSummary s = evaluate_hamming_ranking(qc, dc, affinity, levels, cfg);

    double range_sum = 0.0;
    std::size_t defined = 0, inside = 0;
    json rows = json::array();
    for (std::size_t q = 0; q < s.per_query.size(); ++q) {
      const QueryEval& e = s.per_query[q];
      if (!e.ap_defined) continue;
      csv << bits << ',' << q << ',' << e.ap_min << ',' << e.ap_max << ','
          << e.ap << ',' << e.ap_random << "\n";
      rows.push_back(json{{"query", q},
                          {"pessimistic", e.ap_min},
                          {"optimistic", e.ap_max},
                          {"tie_aware", e.ap},
                          {"random", e.ap_random}});
      range_sum += e.ap_max - e.ap_min;
      ++defined;
      if (e.ap >= e.ap_min - 1e-12 && e.ap <= e.ap_max + 1e-12) ++inside;
    }
    const double mean_range =
        defined ? range_sum / static_cast<double>(defined) : 0.0;
    widths.push_back(json{{"bits", bits},
                          {"mean_ap", s.mean_ap},
                          {"mean_pessimistic", s.mean_ap_min},
                          {"mean_optimistic", s.mean_ap_max},
                          {"mean_range", mean_range},
                          {"tie_aware_inside_range", inside},
                          {"defined_queries", defined},
                          {"per_query", rows}});
    std::printf("audit: %3zu bits  mAP_T %.4f  range [%.4f, %.4f]  mean width %.4f\n",
                bits, s.mean_ap, s.mean_ap_min, s.mean_ap_max, mean_range);
  }

  json report{{"report_version", 1},
              {"command", "tiebreak-audit"},
              {"config", json{{"bits", args.bits},
                              {"seed", args.seed},
                              {"affinity_mode", args.affinity.mode}}},
              {"widths", widths}};
  write_json(report, args.out_prefix + ".json");
  std::printf("audit: wrote %s.csv and %s.json\n", args.out_prefix.c_str(),
              args.out_prefix.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string objective = "all";
  GradCheckOptions opts;
  std::uint64_t seed = 0;
  std::string corrupt;  // "row,col" test hook
  std::string report_out;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  std::vector<Objective> objectives;
  if (args.objective == "all") {
    objectives = {Objective::ap_s, Objective::dcg_s, Objective::ap_r,
                  Objective::dcg_r};
  } else {
    objectives = {objective_from_name(args.objective)};
  }

  GradCheckOptions opts = args.opts;
  if (!args.corrupt.empty()) {
    std::size_t row = 0, col = 0;
    if (std::sscanf(args.corrupt.c_str(), "%zu,%zu", &row, &col) != 2)
      throw std::invalid_argument("--corrupt expects 'row,col'");
    opts.corrupt_coord = {row, col};
  }

  bool all_ok = true;
  json results = json::array();
  Rng rng(args.seed);
  for (Objective obj : objectives) {
    // Verify the bin-decomposition assumption of the matrix fast path against
    // the naive chain rule; fall back to the naive path when they disagree.
    bool use_naive = args.opts.use_naive_backprop;
    if (!use_naive) {
      Rng probe_rng(args.seed ^ 0xabcdef12345ull);
      const double gap = backprop_discrepancy(obj, probe_rng, opts);
      if (gap > 1e-8) {
        use_naive = true;
        std::printf("gradcheck: %s fast path disagreed with the naive chain "
                    "rule by %.3e, using the naive path\n",
                    objective_name(obj), gap);
      }
    }

    opts.use_naive_backprop = use_naive;
    const GradCheckResult r = finite_diff_check(obj, rng, opts);
    all_ok = all_ok && r.ok;
    std::printf("gradcheck: %-6s max rel err %.3e  %s", objective_name(obj),
                r.max_rel_error, r.ok ? "PASS" : "FAIL");
    if (!r.ok)
      std::printf("  (worst coordinate %zu,%zu)", r.worst_row, r.worst_col);
    if (r.resamples > 0) std::printf("  [%zu kink re-samples]", r.resamples);
    std::printf("\n");
    results.push_back(json{{"objective", objective_name(obj)},
                           {"max_rel_error", r.max_rel_error},
                           {"worst_row", r.worst_row},
                           {"worst_col", r.worst_col},
                           {"resamples", r.resamples},
                           {"naive_path", use_naive},
                           {"pass", r.ok}});
  }
  if (!args.report_out.empty())
    write_json(json{{"report_version", 1},
                    {"command", "gradcheck"},
                    {"tolerance", opts.tolerance},
                    {"results", results}},
               args.report_out);
  return all_ok ? 0 : 4;
}

}  // namespace

int talr_main(int argc, const char* const* argv) {
  CLI::App app{"talr: tie-aware Hamming-ranking evaluation and hashing trainer"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a Gaussian-cluster fixture");
  std::string synth_out = "synth";
  SynthConfig synth_cfg;
  synth->add_option("--out", synth_out, "output path prefix")->required();
  synth->add_option("--classes", synth_cfg.classes);
  synth->add_option("--dim", synth_cfg.dim);
  synth->add_option("--train", synth_cfg.train);
  synth->add_option("--query", synth_cfg.query);
  synth->add_option("--database", synth_cfg.database);
  synth->add_option("--separation", synth_cfg.separation);
  synth->add_option("--sigma", synth_cfg.sigma);
  synth->add_option("--seed", synth_cfg.seed);

  // train
  auto* tr = app.add_subcommand("train", "train a linear hash model");
  TrainArgs train_args;
  tr->add_option("--features", train_args.features, "training features")->required();
  tr->add_option("--labels", train_args.labels, "training labels");
  tr->add_option("--config", train_args.config_path, "JSON config file");
  tr->add_option("--checkpoint", train_args.checkpoint_out, "checkpoint output");
  tr->add_option("--report", train_args.report_out, "JSON report output");
  std::optional<std::size_t> f_bits, f_batch, f_epochs;
  std::optional<double> f_lr, f_momentum, f_alpha, f_growth, f_cap, f_delta;
  std::optional<std::uint64_t> f_seed;
  std::optional<std::string> f_objective;
  tr->add_option("--bits", f_bits, "code length");
  tr->add_option("--objective", f_objective, "ap_s | dcg_s | ap_r | dcg_r");
  tr->add_option("--batch-size", f_batch);
  tr->add_option("--lr", f_lr);
  tr->add_option("--momentum", f_momentum);
  tr->add_option("--epochs", f_epochs);
  tr->add_option("--alpha", f_alpha);
  tr->add_option("--alpha-growth", f_growth);
  tr->add_option("--alpha-cap", f_cap);
  tr->add_option("--delta", f_delta);
  tr->add_option("--seed", f_seed);
  bool f_bias = false;
  tr->add_flag("--bias", f_bias, "learn a bias column");
  add_affinity_flags(tr, train_args.affinity);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate Hamming ranking with tie-aware metrics");
  EvalArgs eval_args;
  ev->add_option("--checkpoint", eval_args.checkpoint);
  ev->add_option("--query-codebook", eval_args.query_codebook);
  ev->add_option("--db-codebook", eval_args.db_codebook);
  ev->add_option("--queries", eval_args.queries, "query features");
  ev->add_option("--database", eval_args.database, "database features");
  ev->add_option("--query-labels", eval_args.query_labels);
  ev->add_option("--db-labels", eval_args.db_labels);
  ev->add_option("--train-features", eval_args.train_features,
                 "threshold mode: features used to fit the distance cuts");
  ev->add_option("--ap-cutoff", eval_args.ap_cutoff, "AP cutoff k (0 = full)");
  ev->add_option("--dcg-cutoff", eval_args.dcg_cutoff);
  ev->add_flag("--tiebreak", eval_args.tiebreak, "also report tie-break ranges");
  ev->add_option("--seed", eval_args.seed);
  ev->add_option("--report", eval_args.report_out, "JSON report output");
  add_affinity_flags(ev, eval_args.affinity);

  // tiebreak-audit
  auto* audit = app.add_subcommand("tiebreak-audit",
                                   "tie-breaking range audit across bit widths");
  AuditArgs audit_args;
  audit->add_option("--queries", audit_args.queries)->required();
  audit->add_option("--database", audit_args.database)->required();
  audit->add_option("--query-labels", audit_args.query_labels)->required();
  audit->add_option("--db-labels", audit_args.db_labels)->required();
  audit->add_option("--bits", audit_args.bits, "bit widths to audit");
  audit->add_option("--seed", audit_args.seed);
  audit->add_option("--out-prefix", audit_args.out_prefix);
  add_affinity_flags(audit, audit_args.affinity);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of the analytic gradients");
  GradcheckArgs gc_args;
  gc->add_option("--objective", gc_args.objective, "all | ap_s | dcg_s | ap_r | dcg_r");
  gc->add_option("--batch-size", gc_args.opts.batch_size);
  gc->add_option("--bits", gc_args.opts.num_bits);
  gc->add_option("--dim", gc_args.opts.input_dim);
  gc->add_option("--step", gc_args.opts.h, "finite-difference step");
  gc->add_option("--tolerance", gc_args.opts.tolerance);
  gc->add_option("--alpha", gc_args.opts.alpha);
  gc->add_option("--seed", gc_args.seed);
  gc->add_flag("--naive", gc_args.opts.use_naive_backprop, "use the naive backprop path");
  gc->add_option("--corrupt", gc_args.corrupt)->group("");  // hidden test hook
  gc->add_option("--report", gc_args.report_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_cfg);
    if (tr->parsed()) {
      apply_config_file(train_args);
      if (f_bits) train_args.bits = *f_bits;
      if (f_objective) train_args.cfg.objective = objective_from_name(*f_objective);
      if (f_batch) train_args.cfg.batch_size = *f_batch;
      if (f_epochs) train_args.cfg.epochs = *f_epochs;
      if (f_lr) train_args.cfg.learning_rate = *f_lr;
      if (f_momentum) train_args.cfg.momentum = *f_momentum;
      if (f_alpha) train_args.cfg.alpha0 = *f_alpha;
      if (f_growth) train_args.cfg.alpha_growth = *f_growth;
      if (f_cap) train_args.cfg.alpha_cap = *f_cap;
      if (f_delta) train_args.cfg.bin_slope = *f_delta;
      if (f_seed) train_args.cfg.seed = *f_seed;
      if (f_bias) train_args.bias = true;
      return cmd_train(train_args);
    }
    if (ev->parsed()) return cmd_eval(eval_args);
    if (audit->parsed()) return cmd_tiebreak_audit(audit_args);
    if (gc->parsed()) return cmd_gradcheck(gc_args);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  }
  return 2;
}

}  // namespace talr
