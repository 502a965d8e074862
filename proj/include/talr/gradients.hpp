// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "talr/relaxed.hpp"

namespace talr {

enum class Objective { ap_s, dcg_s, ap_r, dcg_r };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);
bool objective_is_binary(Objective o);  // AP objectives need binary affinities

/// Partials of one query's objective w.r.t. its soft histogram bins,
/// assembled as alpha = zeta + U theta: zeta holds the diagonal terms
/// dO_d/dc_{d,v}, theta_d holds dO_d/dc_{l,v} for any l < d (independent of
/// l), and U is the strictly upper-triangular all-ones matrix, applied as a
/// reversed cumulative sum.
struct BinGradients {
  std::size_t num_bins = 0;
  std::size_t num_levels = 0;
  std::vector<double> zeta, theta, alpha;  // num_bins x |V|

  double a(std::size_t d, std::size_t vi) const {
    return alpha[d * num_levels + vi];
  }
};

BinGradients objective_bin_grads(Objective objective, const SoftHistogramSet& s,
                                 double n_plus, const RelaxConfig& cfg = {});

/// Per-level alpha matrices for a whole minibatch; column i of the level-v
/// matrix is query i's alpha vector (possibly pre-scaled by a per-query
/// weight such as 1/idealDCG or 0 for undefined queries).
struct HistogramGradients {
  std::size_t num_bins = 0;
  std::size_t num_levels = 0;
  std::size_t batch = 0;
  std::vector<double> alpha;  // [(v * num_bins + d) * batch + i]

  HistogramGradients() = default;
  HistogramGradients(std::size_t bins, std::size_t levels, std::size_t m)
      : num_bins(bins), num_levels(levels), batch(m),
        alpha(bins * levels * m, 0.0) {}

  double at(std::size_t vi, std::size_t d, std::size_t i) const {
    return alpha[(vi * num_bins + d) * batch + i];
  }
  void set_column(std::size_t i, const BinGradients& g, double scale);
};

/// The symmetric soft-bin derivative matrices B_{d,v}:
/// B_{d,v}(i,j) = 1[A_i(j) = v] * delta_d'(dist(i,j)), with zero diagonal.
struct BetaMatrices {
  std::size_t batch = 0;
  std::size_t num_bins = 0;
  std::size_t num_levels = 0;
  std::vector<double> values;   // per (d,v) an M x M block
  std::vector<char> has_entries;  // per (d,v): any nonzero

  double at(std::size_t d, std::size_t vi, std::size_t i, std::size_t j) const {
    return values[((d * num_levels + vi) * batch + i) * batch + j];
  }
};

/// dist is the M x M relaxed distance matrix, pair_level_index the M x M
/// matrix of affinity-level indices (diagonal ignored).
BetaMatrices beta_matrices(const Matrix& dist,
                           const std::vector<int>& pair_level_index,
                           std::size_t num_bins, std::size_t num_levels,
                           double slope);

/// Jacobian of the minibatch objective w.r.t. the relaxed codes; row i is
/// dO/dPhi(x_i) for the M x b code matrix convention used throughout.
struct BatchJacobian {
  Matrix d_codes;  // M x b
};

/// Fast matrix form: -(1/2M) * [sum_{d,v} (A B + B A)] applied to the codes,
/// with the diagonal A products realized as row/column scalings; O(b|V|M^2).
BatchJacobian minibatch_backprop(const Matrix& codes,
                                 const HistogramGradients& grads,
                                 const BetaMatrices& betas);

/// Reference path: per-query chain-rule double loop over pairs and bins.
BatchJacobian naive_minibatch_backprop(const Matrix& codes,
                                       const HistogramGradients& grads,
                                       const Matrix& dist,
                                       const std::vector<int>& pair_level_index,
                                       double slope);

/// Chain through tanh and the linear model: dO/dW = (d_codes .* alpha(1 -
/// codes^2))^T * features, with features row-major M x D.
Matrix model_backprop(const BatchJacobian& jac, const Matrix& codes,
                      const Matrix& features, double alpha);

/// Central finite differences of a scalar function against an analytic
/// gradient. Checks every coordinate, or a random subset of at least
/// min_coords when the matrix is larger. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
};

FdReport finite_diff_compare(const std::function<double(const Matrix&)>& value,
                             const Matrix& analytic, const Matrix& point,
                             double h, std::size_t min_coords = 200,
                             Rng* rng = nullptr);

}  // namespace talr
