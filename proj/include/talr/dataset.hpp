// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "talr/common.hpp"

namespace talr {

/// In-memory dataset: a feature matrix plus optional per-item label sets.
/// Single-label data is represented as one-element sets.
struct Dataset {
  Matrix features;                          // rows x dim
  std::vector<std::vector<int>> label_sets; // empty when unlabeled

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
  bool has_labels() const { return !label_sets.empty(); }
  int single_label(std::size_t i) const;
};

/// Feature file io. Binary format: magic "TALRFEAT", u32 version=1, u32 rows,
/// u32 dim, f32 little-endian row-major. Plain CSV (comma-separated floats,
/// one row per line) is accepted as well; the magic decides.
Matrix load_features(const std::string& path);
void save_features(const Matrix& features, const std::string& path);

/// Label file io. Binary format: magic "TALRLABL", u32 rows, u32 max_labels,
/// then per row u32 count followed by count u32 label ids. CSV alternative:
/// one line per item, label ids separated by ';' or whitespace.
std::vector<std::vector<int>> load_labels(const std::string& path);
void save_labels(const std::vector<std::vector<int>>& labels,
                 const std::string& path);

/// Per-dimension mean/scale of a training matrix, applied at ingestion so
/// activations start in tanh's linear regime.
struct Standardizer {
  std::vector<double> mean, inv_std;

  static Standardizer fit(const Matrix& features);
  void apply(Matrix& features) const;
};

/// Synthetic Gaussian cluster fixture. Cluster means are separation * sigma
/// scaled orthonormal random directions, centered (a regular simplex with
/// pairwise mean distance sqrt(2) * separation * sigma); points are
/// mean + sigma * N(0, I).
struct SynthConfig {
  std::size_t classes = 4;
  std::size_t dim = 32;
  std::size_t train = 2000;
  std::size_t query = 400;
  std::size_t database = 1600;
  double separation = 4.0;
  double sigma = 1.0;
  // Correlated noise: points get an extra noise_factor * sigma contribution
  // along noise_rank shared random directions, giving the within-cluster
  // geometry a low effective dimension (0 = isotropic).
  std::size_t noise_rank = 0;
  double noise_factor = 3.0;
  std::uint64_t seed = 1;
};

struct SynthData {
  Dataset train, query, database;
};

SynthData make_synthetic_clusters(const SynthConfig& cfg);

/// Index-list split of a single dataset; query and database must be disjoint
/// and all indices in range.
struct SplitSpec {
  std::vector<std::uint32_t> train, query, database;
};

SplitSpec load_split(const std::string& path);
void validate_split(const SplitSpec& split, std::size_t num_items);
Dataset take_subset(const Dataset& full, const std::vector<std::uint32_t>& idx);

}  // namespace talr
