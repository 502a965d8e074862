// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/tie_metrics.hpp"

#include <algorithm>
#include <cmath>

namespace talr {

namespace {

double discount(std::int64_t rank) {
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

/// sum_{t=a+1}^{b} 1/t.
double harmonic_partial(std::int64_t a, std::int64_t b) {
  double s = 0.0;
  for (std::int64_t t = a + 1; t <= b; ++t) s += 1.0 / static_cast<double>(t);
  return s;
}

/// sum_{t=a+1}^{b} 1/log2(t+1).
double discount_partial(std::int64_t a, std::int64_t b) {
  double s = 0.0;
  for (std::int64_t t = a + 1; t <= b; ++t) s += discount(t);
  return s;
}

double ideal_dcg(const AffinityLevels& affinities,
                 std::optional<std::size_t> cutoff) {
  const std::vector<double> gains = sort_gains_desc(affinities);
  std::size_t top = gains.size();
  if (cutoff) top = std::min(top, *cutoff);
  double s = 0.0;
  for (std::size_t t = 1; t <= top; ++t)
    s += gains[t - 1] * discount(static_cast<std::int64_t>(t));
  return s;
}

}  // namespace

TieHistogram build_tie_histogram(const TieGroupedRanking& ranking,
                                 const AffinityLevels& affinities) {
  TieHistogram h;
  h.levels = affinities.levels;
  h.num_bins = ranking.num_bins();
  const std::size_t nl = h.levels.size();
  h.counts.assign(h.num_bins * nl, 0);
  h.cum.assign(h.num_bins * nl, 0);
  h.bin_total.assign(h.num_bins, 0);
  h.cum_total.assign(h.num_bins, 0);
  h.bin_pos.assign(h.num_bins, 0);
  h.cum_pos.assign(h.num_bins, 0);

  for (std::size_t d = 0; d < h.num_bins; ++d) {
    for (std::uint32_t idx : ranking.groups[d]) {
      if (idx >= affinities.per_item.size())
        throw std::invalid_argument(
            "build_tie_histogram: ranking index out of range of affinities");
      const int value = affinities.per_item[idx];
      const std::size_t vi = affinities.level_index(value);
      ++h.counts[d * nl + vi];
      ++h.bin_total[d];
      if (value > 0) ++h.bin_pos[d];
    }
  }
  instrument::touch(ranking.total);

  std::vector<std::int64_t> run(nl, 0);
  std::int64_t run_total = 0, run_pos = 0;
  for (std::size_t d = 0; d < h.num_bins; ++d) {
    for (std::size_t vi = 0; vi < nl; ++vi) {
      run[vi] += h.counts[d * nl + vi];
      h.cum[d * nl + vi] = run[vi];
    }
    run_total += h.bin_total[d];
    run_pos += h.bin_pos[d];
    h.cum_total[d] = run_total;
    h.cum_pos[d] = run_pos;
  }
  h.total_items = run_total;
  h.total_pos = run_pos;
  return h;
}

std::optional<double> ap_tie_aware(const TieHistogram& h) {
  return ap_tie_aware_at_k(h, static_cast<std::size_t>(h.total_items));
}

std::optional<double> ap_tie_aware_at_k(const TieHistogram& h, std::size_t k) {
  if (h.total_pos == 0) return std::nullopt;
  if (k < 1 || static_cast<std::int64_t>(k) > h.total_items)
    throw std::invalid_argument("ap_tie_aware_at_k: cutoff out of range");
  const double n_plus = static_cast<double>(h.total_pos);
  const auto cut = static_cast<std::int64_t>(k);

  double ap = 0.0;
  std::int64_t before = 0, before_pos = 0;
  for (std::size_t d = 0; d < h.num_bins; ++d) {
    const std::int64_t n = h.bin_total[d];
    const std::int64_t np = h.bin_pos[d];
    if (n == 0) continue;
    const std::int64_t hi = std::min(before + n, cut);
    if (hi <= before) break;
    if (np > 0) {
      // Summand is A + B/t with A, B constant over the tie's ranks; the 0/0
      // ratio at n = 1 is taken as 0 (its coefficient vanishes there).
      const double ratio =
          n > 1 ? static_cast<double>(np - 1) / static_cast<double>(n - 1) : 0.0;
      const double b_const = static_cast<double>(before_pos) + 1.0 -
                             ratio * (static_cast<double>(before) + 1.0);
      const double span = static_cast<double>(hi - before);
      const double harm = harmonic_partial(before, hi);
      ap += static_cast<double>(np) / (static_cast<double>(n) * n_plus) *
            (ratio * span + b_const * harm);
    }
    before += n;
    before_pos += np;
  }
  instrument::touch(h.num_bins);
  return ap;
}

double dcg_tie_aware(const TieHistogram& h, std::optional<std::size_t> cutoff) {
  const std::int64_t cut =
      cutoff ? static_cast<std::int64_t>(*cutoff) : h.total_items;
  const std::size_t nl = h.levels.size();
  double dcg = 0.0;
  std::int64_t before = 0;
  for (std::size_t d = 0; d < h.num_bins; ++d) {
    const std::int64_t n = h.bin_total[d];
    if (n == 0) continue;
    const std::int64_t hi = std::min(before + n, cut);
    if (hi <= before) break;
    double gain_mass = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi)
      gain_mass += gain_of_level(h.levels[vi]) *
                   static_cast<double>(h.counts[d * nl + vi]);
    dcg += gain_mass / static_cast<double>(n) * discount_partial(before, hi);
    before += n;
  }
  instrument::touch(h.num_bins);
  return dcg;
}

std::optional<double> ndcg_tie_aware(const TieHistogram& h,
                                     const AffinityLevels& affinities,
                                     std::optional<std::size_t> cutoff) {
  const double ideal = ideal_dcg(affinities, cutoff);
  if (ideal <= 0.0) return std::nullopt;
  return dcg_tie_aware(h, cutoff) / ideal;
}

std::optional<double> classical_metric(const std::vector<std::uint32_t>& order,
                                       const AffinityLevels& affinities,
                                       RankMetric metric,
                                       std::optional<std::size_t> cutoff) {
  const std::size_t top =
      cutoff ? std::min(*cutoff, order.size()) : order.size();
  switch (metric) {
    case RankMetric::ap: {
      std::int64_t n_plus = 0;
      for (int v : affinities.per_item)
        if (v > 0) ++n_plus;
      if (n_plus == 0) return std::nullopt;
      double sum = 0.0;
      std::int64_t seen = 0;
      for (std::size_t t = 1; t <= top; ++t) {
        if (affinities.per_item[order[t - 1]] > 0) {
          ++seen;
          sum += static_cast<double>(seen) / static_cast<double>(t);
        }
      }
      return sum / static_cast<double>(n_plus);
    }
    case RankMetric::dcg: {
      double dcg = 0.0;
      for (std::size_t t = 1; t <= top; ++t)
        dcg += gain_of_level(affinities.per_item[order[t - 1]]) *
               discount(static_cast<std::int64_t>(t));
      return dcg;
    }
    case RankMetric::ndcg: {
      const double ideal = ideal_dcg(affinities, cutoff);
      if (ideal <= 0.0) return std::nullopt;
      const auto dcg = classical_metric(order, affinities, RankMetric::dcg, cutoff);
      return *dcg / ideal;
    }
  }
  return std::nullopt;
}

namespace {

std::vector<std::uint32_t> flatten_with_strategy(const TieGroupedRanking& ranking,
                                                 const AffinityLevels& affinities,
                                                 TieBreak strategy,
                                                 std::uint64_t seed) {
  std::vector<std::uint32_t> order;
  order.reserve(ranking.total);
  Rng rng(seed);
  for (const auto& group : ranking.groups) {
    std::vector<std::uint32_t> g = group;
    switch (strategy) {
      case TieBreak::by_index:
        break;
      case TieBreak::optimistic:
        std::stable_sort(g.begin(), g.end(), [&](std::uint32_t a, std::uint32_t b) {
          return affinities.per_item[a] > affinities.per_item[b];
        });
        break;
      case TieBreak::pessimistic:
        std::stable_sort(g.begin(), g.end(), [&](std::uint32_t a, std::uint32_t b) {
          return affinities.per_item[a] < affinities.per_item[b];
        });
        break;
      case TieBreak::random:
        rng.shuffle(g);
        break;
    }
    order.insert(order.end(), g.begin(), g.end());
  }
  return order;
}

}  // namespace

std::optional<double> metric_with_tiebreak(const TieGroupedRanking& ranking,
                                           const AffinityLevels& affinities,
                                           RankMetric metric, TieBreak strategy,
                                           std::uint64_t seed,
                                           std::optional<std::size_t> cutoff) {
  const auto order = flatten_with_strategy(ranking, affinities, strategy, seed);
  return classical_metric(order, affinities, metric, cutoff);
}

std::optional<TiebreakRange> tiebreak_range(const TieGroupedRanking& ranking,
                                            const AffinityLevels& affinities,
                                            RankMetric metric,
                                            std::optional<std::size_t> cutoff) {
  const auto lo =
      metric_with_tiebreak(ranking, affinities, metric, TieBreak::pessimistic, 0, cutoff);
  const auto hi =
      metric_with_tiebreak(ranking, affinities, metric, TieBreak::optimistic, 0, cutoff);
  if (!lo || !hi) return std::nullopt;

  const TieHistogram h = build_tie_histogram(ranking, affinities);
  std::optional<double> ta;
  switch (metric) {
    case RankMetric::ap:
      ta = cutoff ? ap_tie_aware_at_k(h, *cutoff) : ap_tie_aware(h);
      break;
    case RankMetric::dcg:
      ta = dcg_tie_aware(h, cutoff);
      break;
    case RankMetric::ndcg:
      ta = ndcg_tie_aware(h, affinities, cutoff);
      break;
  }
  if (!ta) return std::nullopt;
  return TiebreakRange{*lo, *hi, *ta};
}

std::optional<double> permutation_average_oracle(const TieGroupedRanking& ranking,
                                                 const AffinityLevels& affinities,
                                                 RankMetric metric,
                                                 std::optional<std::size_t> cutoff) {
  double combinations = 1.0;
  for (const auto& group : ranking.groups) {
    for (std::size_t k = 2; k <= group.size(); ++k)
      combinations *= static_cast<double>(k);
    if (combinations > 1e6)
      throw std::invalid_argument(
          "permutation_average_oracle: permutation count exceeds 1e6");
  }

  std::vector<std::vector<std::uint32_t>> groups;
  groups.reserve(ranking.groups.size());
  for (const auto& g : ranking.groups) {
    groups.push_back(g);
    std::sort(groups.back().begin(), groups.back().end());
  }

  double sum = 0.0;
  std::size_t count = 0;
  std::vector<std::uint32_t> order;
  order.reserve(ranking.total);
  while (true) {
    order.clear();
    for (const auto& g : groups) order.insert(order.end(), g.begin(), g.end());
    const auto value = classical_metric(order, affinities, metric, cutoff);
    if (!value) return std::nullopt;  // undefined for every permutation alike
    sum += *value;
    ++count;

    // Odometer over the per-group permutations.
    std::size_t gi = groups.size();
    while (gi-- > 0) {
      if (std::next_permutation(groups[gi].begin(), groups[gi].end())) break;
      if (gi == 0) return sum / static_cast<double>(count);
    }
  }
}

}  // namespace talr
