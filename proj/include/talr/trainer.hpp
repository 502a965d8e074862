// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "talr/dataset.hpp"
#include "talr/gradients.hpp"

namespace talr {

/// Linear hash model: b activations f(x) = W x (+ optional bias column).
struct HashModel {
  Matrix weights;  // b x (D + has_bias)
  std::size_t num_bits = 0;
  std::size_t input_dim = 0;
  bool has_bias = false;

  /// Activations for row-major features (rows x input_dim) -> rows x b.
  Matrix activations(const Matrix& features) const;
};

HashModel init_hash_model(std::size_t num_bits, std::size_t input_dim,
                          bool has_bias, Rng& rng);

/// Checkpoint format: magic "TALRMODL", u32 version=1, u32 b, u32 D,
/// u8 has_bias, f64 weights row-major, f64 current alpha.
void save_checkpoint(const HashModel& model, double alpha,
                     const std::string& path);
struct Checkpoint {
  HashModel model;
  double alpha = 1.0;
};
Checkpoint load_checkpoint(const std::string& path);

enum class AffinityMode { single_label, multilabel_shared_count, threshold_multilevel };

const char* affinity_mode_name(AffinityMode m);
AffinityMode affinity_mode_from_name(const std::string& name);

/// Pairwise affinity oracle. single_label: 1 iff labels agree. multilabel:
/// number of shared labels. threshold: largest level whose training-set
/// distance quantile contains the pair's Euclidean distance, 0 otherwise.
struct AffinityOracle {
  AffinityMode mode = AffinityMode::single_label;
  // threshold mode: quantiles strictly decreasing, level values strictly
  // increasing, cut distances derived from the training features.
  std::vector<double> quantiles = {0.05, 0.01, 0.002, 0.001};
  std::vector<int> level_values = {1, 2, 5, 10};
  std::vector<double> cut_distances;

  /// The level set V (ascending, including 0) for a dataset.
  std::vector<int> levels(const Dataset& data) const;

  int affinity(const Dataset& a, std::size_t i, const Dataset& b,
               std::size_t j) const;
};

/// Computes the threshold-mode distance cuts from training features.
void fit_threshold_cuts(AffinityOracle& oracle, const Matrix& train_features,
                        std::uint64_t seed = 0);

int derive_affinity(const AffinityOracle& oracle, const Dataset& a,
                    std::size_t i, const Dataset& b, std::size_t j);

struct TrainConfig {
  std::size_t batch_size = 256;  // M >= 2
  std::size_t epochs = 60;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double alpha0 = 5.0;
  double alpha_growth = 1.5;  // 1 = fixed alpha
  double alpha_cap = 100.0;
  Objective objective = Objective::ap_s;
  double bin_slope = 1.0;  // Delta
  std::uint64_t seed = 0;
  std::size_t plateau_epochs = 5;  // halve lr after this many flat epochs
  RelaxConfig relax;

  void validate() const;  // throws std::invalid_argument with the field name
};

/// alpha' = min(cap, alpha * growth); growth 1 keeps alpha fixed.
double alpha_schedule_step(double alpha, const TrainConfig& cfg);

/// One minibatch: pairwise level indices into `levels` (diagonal unused).
struct BatchData {
  Matrix features;               // M x D
  std::vector<int> pair_level;   // M x M level indices
  std::vector<int> levels;       // V
};

/// Builds a batch from a dataset subset under an oracle; AP objectives get
/// the binary reduction (any level > 0 maps to 1).
BatchData make_batch(const Dataset& data, const std::vector<std::uint32_t>& idx,
                     const AffinityOracle& oracle, bool binary_reduce);

struct MinibatchEval {
  double objective = 0.0;        // mean over defined queries
  std::size_t defined_queries = 0;
  bool degenerate = false;       // every query undefined
  Matrix weight_grad;            // same shape as model.weights (when requested)
  double mean_abs_code = 0.0;
  double exact_tie_metric = 0.0; // in-batch AP_T / NDCG_T on sgn codes
  bool has_exact = false;
};

/// Forward pass and (optionally) the full weight gradient for one minibatch:
/// linear -> tanh -> relaxed distances -> soft histograms -> objective, with
/// DCG objectives normalized per query by the hard-count ideal DCG. Queries
/// with no relevant item contribute neither value nor gradient.
MinibatchEval minibatch_objective(const HashModel& model, const BatchData& batch,
                                  double alpha, const TrainConfig& cfg,
                                  bool want_grad = true, bool want_exact = false,
                                  bool use_naive_backprop = false);

struct EpochStats {
  std::size_t epoch = 0;
  double objective = 0.0;        // mean over batches of minibatch objectives
  double exact_in_batch = 0.0;   // same protocol, sgn codes, tie-aware metric
  double mean_abs_code = 0.0;
  double alpha = 0.0;
  double learning_rate = 0.0;
  std::size_t skipped_queries = 0;
  std::size_t degenerate_batches = 0;
  std::optional<double> validation_metric;
};

struct TrainResult {
  HashModel model;
  double final_alpha = 0.0;
  std::vector<EpochStats> history;
};

/// Called at the end of each epoch with a snapshot of the model; the returned
/// value (if any) is stored in the history as validation_metric.
using EpochCallback = std::function<std::optional<double>(
    const HashModel& model, double alpha, std::size_t epoch)>;

/// Minibatch stochastic gradient ascent with momentum over shuffled epochs;
/// alpha follows its schedule at epoch boundaries. Throws numeric_error when
/// the objective becomes non-finite.
TrainResult train(HashModel model, const Dataset& train_data,
                  const AffinityOracle& oracle, const TrainConfig& cfg,
                  const EpochCallback& callback = nullptr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  std::size_t resamples = 0;
  bool ok = false;
};

/// Central-difference verification of the analytic minibatch weight gradient.
/// Batches whose soft-bin inputs sit within 10h of a kink (or, for the exact
/// relaxations, near their guard switches) are re-sampled, up to max_resamples
/// times. corrupt_* inject an error into the analytic gradient (test hook).
struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::size_t batch_size = 16;
  std::size_t num_bits = 8;
  std::size_t input_dim = 16;
  std::size_t max_resamples = 10;
  std::size_t min_coords = 200;
  double alpha = 1.0;
  std::optional<std::pair<std::size_t, std::size_t>> corrupt_coord;
  double corrupt_delta = 1e-2;
  bool use_naive_backprop = false;
};

GradCheckResult finite_diff_check(Objective objective, Rng& rng,
                                  const GradCheckOptions& opts,
                                  const RelaxConfig& relax = {});

/// Max absolute difference between the fast matrix backprop and the naive
/// chain-rule path on one random batch; the bin-decomposition probe that
/// gates the fast path.
double backprop_discrepancy(Objective objective, Rng& rng,
                            const GradCheckOptions& opts,
                            const RelaxConfig& relax = {});

/// True when the batch evaluation point is too close to a soft-bin kink or an
/// objective guard switch for finite differences at step h.
bool batch_near_kink(Objective objective, const HashModel& model,
                     const BatchData& batch, double alpha, double h,
                     const RelaxConfig& relax);

}  // namespace talr
