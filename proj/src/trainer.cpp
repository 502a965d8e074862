// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "talr/codebook.hpp"
#include "talr/tie_metrics.hpp"

namespace talr {

namespace {

constexpr char kModelMagic[8] = {'T', 'A', 'L', 'R', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ofstream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path,
                       const char* field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw data_error(path + ": truncated while reading " + field);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

double read_f64(std::ifstream& in, const std::string& path, const char* field) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw data_error(path + ": truncated while reading " + field);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

Matrix HashModel::activations(const Matrix& features) const {
  if (features.cols != input_dim)
    throw std::invalid_argument("HashModel: feature dimension mismatch");
  Matrix act(features.rows, num_bits);
  const std::size_t d = input_dim;
  for (std::size_t i = 0; i < features.rows; ++i) {
    const double* x = features.data.data() + i * d;
    for (std::size_t r = 0; r < num_bits; ++r) {
      const double* w = weights.data.data() + r * weights.cols;
      double a = has_bias ? w[d] : 0.0;
      for (std::size_t c = 0; c < d; ++c) a += w[c] * x[c];
      act(i, r) = a;
    }
  }
  return act;
}

HashModel init_hash_model(std::size_t num_bits, std::size_t input_dim,
                          bool has_bias, Rng& rng) {
  if (num_bits == 0 || input_dim == 0)
    throw std::invalid_argument("init_hash_model: bits and dim must be >= 1");
  HashModel m;
  m.num_bits = num_bits;
  m.input_dim = input_dim;
  m.has_bias = has_bias;
  m.weights = Matrix(num_bits, input_dim + (has_bias ? 1 : 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (std::size_t r = 0; r < num_bits; ++r) {
    for (std::size_t c = 0; c < input_dim; ++c)
      m.weights(r, c) = scale * rng.normal();
    if (has_bias) m.weights(r, input_dim) = 0.0;
  }
  return m;
}

void save_checkpoint(const HashModel& model, double alpha,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write(kModelMagic, 8);
  write_u32(out, kModelVersion);
  write_u32(out, static_cast<std::uint32_t>(model.num_bits));
  write_u32(out, static_cast<std::uint32_t>(model.input_dim));
  const unsigned char bias = model.has_bias ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&bias), 1);
  for (double w : model.weights.data) write_f64(out, w);
  write_f64(out, alpha);
  if (!out) throw data_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw data_error(path + ": bad magic, not a TALRMODL file");
  const std::uint32_t version = read_u32(in, path, "version");
  if (version != kModelVersion)
    throw data_error(path + ": unsupported checkpoint version");
  Checkpoint ck;
  ck.model.num_bits = read_u32(in, path, "num_bits");
  ck.model.input_dim = read_u32(in, path, "input_dim");
  char bias = 0;
  in.read(&bias, 1);
  if (!in) throw data_error(path + ": truncated while reading has_bias");
  ck.model.has_bias = bias != 0;
  ck.model.weights = Matrix(ck.model.num_bits,
                            ck.model.input_dim + (ck.model.has_bias ? 1 : 0));
  for (double& w : ck.model.weights.data) w = read_f64(in, path, "weights");
  ck.alpha = read_f64(in, path, "alpha");
  return ck;
}

const char* affinity_mode_name(AffinityMode m) {
  switch (m) {
    case AffinityMode::single_label: return "single_label";
    case AffinityMode::multilabel_shared_count: return "multilabel";
    case AffinityMode::threshold_multilevel: return "threshold";
  }
  return "?";
}

AffinityMode affinity_mode_from_name(const std::string& name) {
  if (name == "single_label" || name == "single-label")
    return AffinityMode::single_label;
  if (name == "multilabel" || name == "multilabel_shared_count")
    return AffinityMode::multilabel_shared_count;
  if (name == "threshold" || name == "threshold_multilevel")
    return AffinityMode::threshold_multilevel;
  throw std::invalid_argument("unknown affinity mode: " + name);
}

std::vector<int> AffinityOracle::levels(const Dataset& data) const {
  switch (mode) {
    case AffinityMode::single_label:
      return {0, 1};
    case AffinityMode::multilabel_shared_count: {
      std::size_t most = 0;
      for (const auto& set : data.label_sets) most = std::max(most, set.size());
      std::vector<int> out;
      for (std::size_t v = 0; v <= most; ++v) out.push_back(static_cast<int>(v));
      if (out.size() < 2) out = {0, 1};
      return out;
    }
    case AffinityMode::threshold_multilevel: {
      std::vector<int> out = {0};
      out.insert(out.end(), level_values.begin(), level_values.end());
      return out;
    }
  }
  return {0, 1};
}

int AffinityOracle::affinity(const Dataset& a, std::size_t i, const Dataset& b,
                             std::size_t j) const {
  switch (mode) {
    case AffinityMode::single_label:
      return a.single_label(i) == b.single_label(j) ? 1 : 0;
    case AffinityMode::multilabel_shared_count: {
      if (!a.has_labels() || !b.has_labels())
        throw data_error("multilabel affinity requires labels");
      const auto& sa = a.label_sets[i];
      const auto& sb = b.label_sets[j];
      int shared = 0;
      std::size_t p = 0, q = 0;
      while (p < sa.size() && q < sb.size()) {
        if (sa[p] < sb[q]) ++p;
        else if (sa[p] > sb[q]) ++q;
        else { ++shared; ++p; ++q; }
      }
      return shared;
    }
    case AffinityMode::threshold_multilevel: {
      if (cut_distances.size() != level_values.size())
        throw data_error("threshold affinity oracle has no fitted cuts");
      const double dist = euclidean_distance(a.features.row(i), b.features.row(j));
      // Innermost (largest-value) matching quantile wins.
      for (std::size_t k = cut_distances.size(); k-- > 0;)
        if (dist <= cut_distances[k]) return level_values[k];
      return 0;
    }
  }
  throw std::invalid_argument("unknown affinity mode");
}

int derive_affinity(const AffinityOracle& oracle, const Dataset& a,
                    std::size_t i, const Dataset& b, std::size_t j) {
  return oracle.affinity(a, i, b, j);
}

void fit_threshold_cuts(AffinityOracle& oracle, const Matrix& train_features,
                        std::uint64_t seed) {
  if (oracle.quantiles.size() != oracle.level_values.size() ||
      oracle.quantiles.empty())
    throw std::invalid_argument("threshold oracle: quantiles/values size mismatch");
  for (std::size_t k = 1; k < oracle.quantiles.size(); ++k) {
    if (!(oracle.quantiles[k] < oracle.quantiles[k - 1]))
      throw std::invalid_argument("threshold oracle: quantiles must be strictly decreasing");
    if (!(oracle.level_values[k] > oracle.level_values[k - 1]))
      throw std::invalid_argument("threshold oracle: level values must be strictly increasing");
  }

  // Subsample items when the full pairwise set would be excessive.
  std::vector<std::uint32_t> idx(train_features.rows);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  const std::size_t cap = 4000;
  if (idx.size() > cap) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    rng.shuffle(idx);
    idx.resize(cap);
  }
  const std::size_t n = idx.size();
  if (n < 2) throw data_error("threshold oracle: need at least 2 training items");
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q)
      dists.push_back(euclidean_distance(train_features.row(idx[p]),
                                         train_features.row(idx[q])));
  std::sort(dists.begin(), dists.end());
  oracle.cut_distances.resize(oracle.quantiles.size());
  for (std::size_t k = 0; k < oracle.quantiles.size(); ++k) {
    const auto pos = static_cast<std::size_t>(
        oracle.quantiles[k] * static_cast<double>(dists.size() - 1));
    oracle.cut_distances[k] = dists[pos];
  }
}

void TrainConfig::validate() const {
  if (batch_size < 2)
    throw std::invalid_argument("config batch_size: must be >= 2");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("config learning_rate: must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("config momentum: must be in [0, 1)");
  if (!(alpha0 > 0.0))
    throw std::invalid_argument("config alpha: must be positive");
  if (!(alpha_growth >= 1.0))
    throw std::invalid_argument("config alpha_growth: must be >= 1");
  if (!(alpha_cap >= alpha0))
    throw std::invalid_argument("config alpha_cap: must be >= alpha");
  if (!(bin_slope > 0.0))
    throw std::invalid_argument("config delta: must be positive");
}

double alpha_schedule_step(double alpha, const TrainConfig& cfg) {
  return std::min(cfg.alpha_cap, alpha * cfg.alpha_growth);
}

BatchData make_batch(const Dataset& data, const std::vector<std::uint32_t>& idx,
                     const AffinityOracle& oracle, bool binary_reduce) {
  BatchData batch;
  const std::size_t m = idx.size();
  batch.features = Matrix(m, data.dim());
  for (std::size_t k = 0; k < m; ++k) {
    const auto row = data.features.row(idx[k]);
    std::copy(row.begin(), row.end(), batch.features.row(k).begin());
  }
  batch.levels = binary_reduce ? std::vector<int>{0, 1} : oracle.levels(data);
  batch.pair_level.assign(m * m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      int value = oracle.affinity(data, idx[i], data, idx[j]);
      if (binary_reduce) value = value > 0 ? 1 : 0;
      const auto it =
          std::lower_bound(batch.levels.begin(), batch.levels.end(), value);
      if (it == batch.levels.end() || *it != value)
        throw data_error("affinity value " + std::to_string(value) +
                         " outside the level set");
      const int vi = static_cast<int>(it - batch.levels.begin());
      batch.pair_level[i * m + j] = vi;
      batch.pair_level[j * m + i] = vi;
    }
  }
  return batch;
}

namespace {

struct QueryState {
  SoftHistogramSet hist;
  double value = 0.0;   // normalized per-query objective
  double weight = 0.0;  // d(normalized)/d(raw), 0 when undefined
  bool defined = false;
  double hard_pos = 0.0;
};

double in_batch_exact_metric(const Matrix& activations,
                             const std::vector<int>& pair_level,
                             const std::vector<int>& levels, Objective obj) {
  const std::size_t m = activations.rows;
  const BinaryCodebook cb = binarize_and_pack(activations);
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<int> per_item(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j)
      per_item[j] = levels[static_cast<std::size_t>(pair_level[i * m + j])];
    per_item[i] = 0;  // excluded from the ranking anyway
    const auto ranking = counting_sort_rank(cb.row(i), cb.num_bits, cb, i);
    const auto aff = AffinityLevels::with_levels(levels, per_item);
    const auto hist = build_tie_histogram(ranking, aff);
    std::optional<double> metric;
    if (objective_is_binary(obj)) {
      metric = ap_tie_aware(hist);
    } else {
      // The item set for the normalizer excludes the query itself.
      std::vector<int> db_values;
      db_values.reserve(m - 1);
      for (std::size_t j = 0; j < m; ++j)
        if (j != i) db_values.push_back(per_item[j]);
      metric = ndcg_tie_aware(hist, AffinityLevels::with_levels(levels, db_values));
    }
    if (metric) {
      sum += *metric;
      ++defined;
    }
  }
  return defined > 0 ? sum / static_cast<double>(defined) : 0.0;
}

}  // namespace

MinibatchEval minibatch_objective(const HashModel& model, const BatchData& batch,
                                  double alpha, const TrainConfig& cfg,
                                  bool want_grad, bool want_exact,
                                  bool use_naive_backprop) {
  const std::size_t m = batch.features.rows;
  if (m < 2) throw std::invalid_argument("minibatch_objective: batch must have >= 2 items");
  const std::size_t num_bins = model.num_bits + 1;
  const std::size_t nl = batch.levels.size();
  const Objective obj = cfg.objective;

  const Matrix activations = model.activations(batch.features);
  const RelaxedCodes codes = relax_codes(activations, alpha);

  // Pairwise relaxed distances.
  Matrix dist(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double z = relaxed_distance(codes.values.row(i), codes.values.row(j));
      dist(i, j) = z;
      dist(j, i) = z;
    }

  MinibatchEval out;
  double abs_sum = 0.0;
  for (double v : codes.values.data) abs_sum += std::abs(v);
  out.mean_abs_code = codes.values.data.empty()
                          ? 0.0
                          : abs_sum / static_cast<double>(codes.values.data.size());

  std::vector<QueryState> queries(m);
  std::vector<int> level_row(m, 0);
  double value_sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < m; ++i) {
    QueryState& st = queries[i];
    for (std::size_t j = 0; j < m; ++j)
      level_row[j] = batch.pair_level[i * m + j];
    st.hist = build_soft_histograms_from_distances(
        dist.row(i), level_row, batch.levels, num_bins, cfg.bin_slope, i);

    if (objective_is_binary(obj)) {
      std::int64_t pos = 0;
      for (std::size_t j = 0; j < m; ++j)
        if (j != i && batch.levels[static_cast<std::size_t>(level_row[j])] > 0) ++pos;
      if (pos == 0) continue;
      st.hard_pos = static_cast<double>(pos);
      const double raw = obj == Objective::ap_s
                             ? ap_simplified(st.hist, st.hard_pos)
                             : ap_relaxed(st.hist, st.hard_pos, cfg.relax);
      st.value = raw;
      st.weight = 1.0;
    } else {
      // Normalize per query by the hard-count ideal DCG (a constant).
      std::vector<int> db_values;
      db_values.reserve(m - 1);
      for (std::size_t j = 0; j < m; ++j)
        if (j != i)
          db_values.push_back(batch.levels[static_cast<std::size_t>(level_row[j])]);
      const auto aff = AffinityLevels::with_levels(batch.levels, db_values);
      double ideal = 0.0;
      {
        const auto gains = sort_gains_desc(aff);
        for (std::size_t t = 1; t <= gains.size(); ++t)
          ideal += gains[t - 1] / std::log2(static_cast<double>(t) + 1.0);
      }
      if (ideal <= 0.0) continue;
      const double raw = obj == Objective::dcg_s
                             ? dcg_simplified(st.hist)
                             : dcg_relaxed(st.hist, cfg.relax);
      st.value = raw / ideal;
      st.weight = 1.0 / ideal;
    }
    st.defined = true;
    value_sum += st.value;
    ++defined;
  }

  out.defined_queries = defined;
  if (defined == 0) {
    out.degenerate = true;
    return out;
  }
  out.objective = value_sum / static_cast<double>(defined);

  if (want_exact) {
    out.exact_tie_metric =
        in_batch_exact_metric(activations, batch.pair_level, batch.levels, obj);
    out.has_exact = true;
  }

  if (want_grad) {
    HistogramGradients grads(num_bins, nl, m);
    const double mean_scale =
        static_cast<double>(m) / static_cast<double>(defined);
    for (std::size_t i = 0; i < m; ++i) {
      const QueryState& st = queries[i];
      if (!st.defined) continue;
      const BinGradients g =
          objective_bin_grads(obj, st.hist, st.hard_pos, cfg.relax);
      grads.set_column(i, g, mean_scale * st.weight);
    }
    BatchJacobian jac;
    if (use_naive_backprop) {
      jac = naive_minibatch_backprop(codes.values, grads, dist,
                                     batch.pair_level, cfg.bin_slope);
    } else {
      const BetaMatrices betas =
          beta_matrices(dist, batch.pair_level, num_bins, nl, cfg.bin_slope);
      jac = minibatch_backprop(codes.values, grads, betas);
    }
    Matrix grad_w = model_backprop(jac, codes.values, batch.features, alpha);
    if (model.has_bias) {
      // Bias column sees a constant 1 input.
      Matrix full(model.num_bits, model.input_dim + 1);
      for (std::size_t r = 0; r < model.num_bits; ++r) {
        for (std::size_t c = 0; c < model.input_dim; ++c)
          full(r, c) = grad_w(r, c);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double phi = codes.values(i, r);
          s += jac.d_codes(i, r) * alpha * (1.0 - phi * phi);
        }
        full(r, model.input_dim) = s;
      }
      grad_w = std::move(full);
    }
    out.weight_grad = std::move(grad_w);
  }
  return out;
}

TrainResult train(HashModel model, const Dataset& train_data,
                  const AffinityOracle& oracle, const TrainConfig& cfg,
                  const EpochCallback& callback) {
  cfg.validate();
  if (train_data.size() < 2)
    throw std::invalid_argument("train: dataset must have >= 2 items");

  Rng rng(cfg.seed);
  const bool binary = objective_is_binary(cfg.objective);
  double alpha = cfg.alpha0;
  double lr = cfg.learning_rate;
  Matrix velocity(model.weights.rows, model.weights.cols);

  TrainResult result;
  double best_objective = -1e300;
  std::size_t flat_epochs = 0;

  std::vector<std::uint32_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<std::uint32_t>(i);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    stats.alpha = alpha;
    stats.learning_rate = lr;
    double obj_sum = 0.0, exact_sum = 0.0, code_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) continue;  // a lone leftover item cannot be ranked
      const std::vector<std::uint32_t> idx(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(end));
      const BatchData batch = make_batch(train_data, idx, oracle, binary);
      const MinibatchEval eval =
          minibatch_objective(model, batch, alpha, cfg, true, true, false);
      stats.skipped_queries += idx.size() - eval.defined_queries;
      if (eval.degenerate) {
        ++stats.degenerate_batches;
        continue;
      }
      if (!std::isfinite(eval.objective))
        throw numeric_error("train: objective diverged at epoch " +
                            std::to_string(epoch));
      obj_sum += eval.objective;
      exact_sum += eval.exact_tie_metric;
      code_sum += eval.mean_abs_code;
      ++batches;

      // Gradient ascent with momentum.
      for (std::size_t k = 0; k < velocity.data.size(); ++k) {
        velocity.data[k] =
            cfg.momentum * velocity.data[k] + eval.weight_grad.data[k];
        model.weights.data[k] += lr * velocity.data[k];
      }
    }

    if (batches > 0) {
      stats.objective = obj_sum / static_cast<double>(batches);
      stats.exact_in_batch = exact_sum / static_cast<double>(batches);
      stats.mean_abs_code = code_sum / static_cast<double>(batches);
    }
    if (callback) stats.validation_metric = callback(model, alpha, epoch);
    result.history.push_back(stats);

    if (stats.objective > best_objective + 1e-6) {
      best_objective = stats.objective;
      flat_epochs = 0;
    } else if (++flat_epochs >= cfg.plateau_epochs) {
      lr *= 0.5;
      flat_epochs = 0;
    }
    alpha = alpha_schedule_step(alpha, cfg);
  }

  result.model = std::move(model);
  result.final_alpha = alpha;
  return result;
}

bool batch_near_kink(Objective objective, const HashModel& model,
                     const BatchData& batch, double alpha, double h,
                     const RelaxConfig& relax) {
  const Matrix activations = model.activations(batch.features);
  const RelaxedCodes codes = relax_codes(activations, alpha);
  const std::size_t m = batch.features.rows;
  const std::size_t num_bins = model.num_bits + 1;
  const double slope = 1.0;  // gradcheck batches use the default bin slope
  const double margin = 10.0 * h;

  Matrix dist(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double z = relaxed_distance(codes.values.row(i), codes.values.row(j));
      dist(i, j) = z;
      dist(j, i) = z;
      const double frac = z - std::floor(z);
      // Kinks of the triangular kernel sit at integer distances (slope 1).
      if (frac < margin || 1.0 - frac < margin) return true;
      (void)slope;
    }

  if (objective == Objective::ap_r || objective == Objective::dcg_r) {
    std::vector<int> level_row(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j)
        level_row[j] = batch.pair_level[i * m + j];
      const auto s = build_soft_histograms_from_distances(
          dist.row(i), level_row, batch.levels, num_bins, 1.0, i);
      for (std::size_t d = 0; d < num_bins; ++d) {
        const double c = s.bin_total[d];
        // Guard switches at c = 1 + eps and steep curvature near-empty bins.
        if (objective == Objective::ap_r && std::abs(c - 1.0) < 0.05) return true;
        if (c > 1e-12 && c < 0.05) return true;
      }
    }
  }
  (void)relax;
  return false;
}

namespace {

BatchData random_gradcheck_batch(Objective objective, std::size_t m,
                                 std::size_t dim, Rng& rng) {
  BatchData batch;
  batch.features = Matrix(m, dim);
  for (double& x : batch.features.data) x = rng.normal();
  const bool binary = objective_is_binary(objective);
  batch.levels = binary ? std::vector<int>{0, 1} : std::vector<int>{0, 1, 2, 5};
  batch.pair_level.assign(m * m, 0);
  // Random class labels; pairs of equal class get a random positive level.
  std::vector<int> cls(m);
  for (auto& c : cls) c = static_cast<int>(rng.below(3));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      int vi = 0;
      if (cls[i] == cls[j])
        vi = binary ? 1 : 1 + static_cast<int>(rng.below(batch.levels.size() - 1));
      batch.pair_level[i * m + j] = vi;
      batch.pair_level[j * m + i] = vi;
    }
  // Every query needs a relevant item for the metric to be defined.
  for (std::size_t i = 0; i < m; ++i) {
    bool has_pos = false;
    for (std::size_t j = 0; j < m && !has_pos; ++j)
      has_pos = j != i && batch.pair_level[i * m + j] > 0;
    if (!has_pos) {
      const std::size_t j = (i + 1) % m;
      const int vi =
          binary ? 1 : 1 + static_cast<int>(rng.below(batch.levels.size() - 1));
      batch.pair_level[i * m + j] = vi;
      batch.pair_level[j * m + i] = vi;
    }
  }
  return batch;
}

}  // namespace

double backprop_discrepancy(Objective objective, Rng& rng,
                            const GradCheckOptions& opts,
                            const RelaxConfig& relax) {
  TrainConfig cfg;
  cfg.objective = objective;
  cfg.relax = relax;
  Rng model_rng(rng.next_u64());
  const HashModel model =
      init_hash_model(opts.num_bits, opts.input_dim, false, model_rng);
  const BatchData batch =
      random_gradcheck_batch(objective, opts.batch_size, opts.input_dim, rng);
  const MinibatchEval fast =
      minibatch_objective(model, batch, opts.alpha, cfg, true, false, false);
  const MinibatchEval naive =
      minibatch_objective(model, batch, opts.alpha, cfg, true, false, true);
  if (fast.degenerate || naive.degenerate) return 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < fast.weight_grad.data.size(); ++k)
    worst = std::max(worst, std::abs(fast.weight_grad.data[k] -
                                     naive.weight_grad.data[k]));
  return worst;
}

GradCheckResult finite_diff_check(Objective objective, Rng& rng,
                                  const GradCheckOptions& opts,
                                  const RelaxConfig& relax) {
  TrainConfig cfg;
  cfg.objective = objective;
  cfg.relax = relax;
  cfg.bin_slope = 1.0;

  GradCheckResult result;
  for (std::size_t attempt = 0; attempt <= opts.max_resamples; ++attempt) {
    Rng model_rng(rng.next_u64());
    const HashModel model =
        init_hash_model(opts.num_bits, opts.input_dim, false, model_rng);
    const BatchData batch =
        random_gradcheck_batch(objective, opts.batch_size, opts.input_dim, rng);
    if (batch_near_kink(objective, model, batch, opts.alpha, opts.h, relax)) {
      ++result.resamples;
      continue;
    }

    MinibatchEval eval =
        minibatch_objective(model, batch, opts.alpha, cfg, true, false,
                            opts.use_naive_backprop);
    if (eval.degenerate) {
      ++result.resamples;
      continue;
    }
    if (opts.corrupt_coord) {
      eval.weight_grad(opts.corrupt_coord->first, opts.corrupt_coord->second) +=
          opts.corrupt_delta;
    }
    const auto value = [&](const Matrix& w) {
      HashModel probe = model;
      probe.weights = w;
      return minibatch_objective(probe, batch, opts.alpha, cfg, false, false)
          .objective;
    };
    Rng coord_rng(rng.next_u64());
    const FdReport fd =
        finite_diff_compare(value, eval.weight_grad, model.weights, opts.h,
                            opts.min_coords, &coord_rng);
    result.max_rel_error = fd.max_rel_error;
    result.worst_row = fd.worst_row;
    result.worst_col = fd.worst_col;
    result.ok = fd.max_rel_error <= opts.tolerance;
    return result;
  }
  throw numeric_error(
      "finite_diff_check: could not sample a batch away from kinks");
}

}  // namespace talr
