// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "talr/affinity.hpp"
#include "talr/common.hpp"

namespace talr {

/// tanh-relaxed codes, one row per item, every entry strictly inside (-1, 1).
struct RelaxedCodes {
  Matrix values;  // num_items x b
  double alpha = 1.0;

  std::size_t num_items() const { return values.rows; }
  std::size_t num_bits() const { return values.cols; }
};

/// Elementwise tanh(alpha * activation). alpha must be positive and the
/// activations finite.
RelaxedCodes relax_codes(const Matrix& activations, double alpha);

/// Real-valued distance (b - <q, x>) / 2 between two relaxed rows.
double relaxed_distance(std::span<const double> q, std::span<const double> x);

/// Triangular interpolation of z into integer bin d: max(0, 1 - |z-d|/slope).
double soft_bin(double z, std::size_t d, double slope);

/// d/dz of soft_bin: -sign(z-d)/slope strictly inside the support, 0 outside
/// and 0 at the kinks |z-d| in {0, slope}.
double soft_bin_deriv(double z, std::size_t d, double slope);

/// Real-valued distance histograms c_{d,v} per affinity level with cumulative
/// sums, built by soft-binning relaxed distances.
struct SoftHistogramSet {
  std::vector<int> levels;
  std::size_t num_bins = 0;  // b + 1
  double bin_slope = 1.0;
  std::vector<double> soft;       // num_bins x |V|, c_{d,v}
  std::vector<double> cum;        // C_{d,v}
  std::vector<double> bin_total;  // c_d
  std::vector<double> cum_total;  // C_d
  std::vector<double> bin_pos;    // c_d^+ (levels > 0)
  std::vector<double> cum_pos;    // C_d^+

  double c(std::size_t d, std::size_t vi) const {
    return soft[d * levels.size() + vi];
  }
  /// C_{d-1,total}; 0 at d = 0.
  double cum_total_before(std::size_t d) const {
    return d == 0 ? 0.0 : cum_total[d - 1];
  }
  double cum_pos_before(std::size_t d) const {
    return d == 0 ? 0.0 : cum_pos[d - 1];
  }
};

/// Soft histograms for one query of a relaxed code batch; the query itself is
/// excluded from the database. per-item levels come from affinities.
SoftHistogramSet build_soft_histograms(std::size_t query_index,
                                       const RelaxedCodes& codes,
                                       const AffinityLevels& affinities,
                                       double slope);

/// Same, from precomputed relaxed distances of one query against the items.
/// level_index[i] indexes into levels; skip_index excluded when valid.
SoftHistogramSet build_soft_histograms_from_distances(
    std::span<const double> distances, std::span<const int> level_index,
    const std::vector<int>& levels, std::size_t num_bins, double slope,
    std::size_t skip_index = kNoSkip);

/// Numerical guards of the relaxed objectives. The defaults keep every
/// formula finite on arbitrary non-negative soft counts; paper_exact restores
/// the unshifted integral limits for ablation (with the cumulative count
/// clamped away from the log singularity).
struct RelaxConfig {
  bool paper_exact = false;
  double guard_eps = 1e-6;   // ratio/singleton switch at c_d < 1 + guard_eps
  double li_shift = 0.5;     // shift of the log-integral limits
  double li_tol = 1e-10;     // adaptive quadrature absolute tolerance
  int li_max_depth = 40;
};

/// Continuous relaxation of tie-aware AP. n_plus is the (hard) number of
/// relevant items, a per-query constant. Requires n_plus > 0.
double ap_relaxed(const SoftHistogramSet& s, double n_plus,
                  const RelaxConfig& cfg = {});

/// Continuous relaxation of tie-aware DCG via the logarithmic integral,
/// evaluated by adaptive quadrature on each bin segment.
double dcg_relaxed(const SoftHistogramSet& s, const RelaxConfig& cfg = {});

/// Midpoint-rule simplification of relaxed AP; finite for all non-negative
/// soft counts. Requires n_plus > 0.
double ap_simplified(const SoftHistogramSet& s, double n_plus);

/// Jensen lower bound of tie-aware DCG; on hard counts it never exceeds
/// dcg_tie_aware.
double dcg_simplified(const SoftHistogramSet& s);

/// Integral of dt/ln t over [a, b] with 1 < a <= b, adaptive Simpson.
/// Throws numeric_error when the tolerance cannot be met within max_depth.
double log_integral_segment(double a, double b, double tol = 1e-10,
                            int max_depth = 40);

}  // namespace talr
