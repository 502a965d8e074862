// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "talr/affinity.hpp"
#include "talr/codebook.hpp"

namespace talr {

/// Integer distance histograms conditioned on affinity level: counts n_{d,v}
/// with cumulative sums N_{d,v}, plus the totals n_d, N_d and the positive
/// (level > 0) slices used by the binary-affinity metrics.
struct TieHistogram {
  std::vector<int> levels;
  std::size_t num_bins = 0;                // b + 1
  std::vector<std::int64_t> counts;        // num_bins x |V|, n_{d,v}
  std::vector<std::int64_t> cum;           // N_{d,v}
  std::vector<std::int64_t> bin_total;     // n_d
  std::vector<std::int64_t> cum_total;     // N_d
  std::vector<std::int64_t> bin_pos;       // n_d^+
  std::vector<std::int64_t> cum_pos;       // N_d^+
  std::int64_t total_items = 0;            // |S|
  std::int64_t total_pos = 0;              // N^+

  std::int64_t n(std::size_t d, std::size_t vi) const {
    return counts[d * levels.size() + vi];
  }
  std::int64_t N(std::size_t d, std::size_t vi) const {
    return cum[d * levels.size() + vi];
  }
};

TieHistogram build_tie_histogram(const TieGroupedRanking& ranking,
                                 const AffinityLevels& affinities);

/// Tie-aware AP over binary affinities. Empty result when the query has no
/// relevant item (metric undefined; callers count such queries separately).
std::optional<double> ap_tie_aware(const TieHistogram& h);

/// Tie-aware AP at cutoff k (1 <= k <= |S|). The normalizer stays the total
/// relevant count, so at k = |S| this equals ap_tie_aware.
std::optional<double> ap_tie_aware_at_k(const TieHistogram& h, std::size_t k);

/// Tie-aware DCG with gains G(v) = 2^v - 1 and discount 1/log2(rank + 1);
/// the discount sum of a tie straddling the cutoff is truncated at k while
/// the gain average stays over the whole tie.
double dcg_tie_aware(const TieHistogram& h,
                     std::optional<std::size_t> cutoff = std::nullopt);

/// dcg_tie_aware divided by the ideal DCG at the same cutoff. Empty when all
/// gains are zero.
std::optional<double> ndcg_tie_aware(const TieHistogram& h,
                                     const AffinityLevels& affinities,
                                     std::optional<std::size_t> cutoff = std::nullopt);

enum class RankMetric { ap, dcg, ndcg };

enum class TieBreak { optimistic, pessimistic, random, by_index };

/// Flattens the tie groups with the given strategy and evaluates the
/// classical (tie-unaware) metric on the resulting linear ranking. For AP,
/// any level > 0 counts as relevant.
std::optional<double> metric_with_tiebreak(
    const TieGroupedRanking& ranking, const AffinityLevels& affinities,
    RankMetric metric, TieBreak strategy, std::uint64_t seed = 0,
    std::optional<std::size_t> cutoff = std::nullopt);

struct TiebreakRange {
  double min = 0.0;
  double max = 0.0;
  double tie_aware = 0.0;
};

/// Extremes of the metric over all within-tie orderings (attained by the
/// pessimistic/optimistic strategies) together with the tie-aware value.
std::optional<TiebreakRange> tiebreak_range(
    const TieGroupedRanking& ranking, const AffinityLevels& affinities,
    RankMetric metric, std::optional<std::size_t> cutoff = std::nullopt);

/// Exact mean of the classical metric over the Cartesian product of
/// within-tie permutations. Guarded: throws std::invalid_argument when
/// prod_d n_d! exceeds 1e6.
std::optional<double> permutation_average_oracle(
    const TieGroupedRanking& ranking, const AffinityLevels& affinities,
    RankMetric metric, std::optional<std::size_t> cutoff = std::nullopt);

/// Classical metrics on an explicit linear ranking (helper for the strategies
/// and the oracle; order holds database indices, best rank first).
std::optional<double> classical_metric(const std::vector<std::uint32_t>& order,
                                       const AffinityLevels& affinities,
                                       RankMetric metric,
                                       std::optional<std::size_t> cutoff = std::nullopt);

}  // namespace talr
