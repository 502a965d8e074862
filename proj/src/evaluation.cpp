// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/evaluation.hpp"

#include <chrono>
#include <cmath>

namespace talr {

EvalSummary evaluate_hamming_ranking(const BinaryCodebook& query_codes,
                                     const BinaryCodebook& db_codes,
                                     const AffinityFn& affinity,
                                     const std::vector<int>& levels,
                                     const EvalConfig& cfg) {
  if (query_codes.num_bits != db_codes.num_bits)
    throw std::invalid_argument("evaluate: query/database bit width mismatch");
  const auto t0 = std::chrono::steady_clock::now();

  EvalSummary summary;
  summary.levels = levels;
  summary.ap_cutoff = cfg.ap_cutoff;
  summary.per_query.resize(query_codes.num_items);

  parallel_for(query_codes.num_items, [&](std::size_t begin, std::size_t end) {
    std::vector<int> per_item(db_codes.num_items, 0);
    for (std::size_t q = begin; q < end; ++q) {
      for (std::size_t i = 0; i < db_codes.num_items; ++i)
        per_item[i] = affinity(q, i);
      const auto aff = AffinityLevels::with_levels(levels, per_item);
      const auto ranking =
          counting_sort_rank(query_codes.row(q), query_codes.num_bits, db_codes);
      const auto hist = build_tie_histogram(ranking, aff);

      QueryEval& out = summary.per_query[q];
      if (const auto ap = ap_tie_aware(hist)) {
        out.ap_defined = true;
        out.ap = *ap;
        std::size_t k = db_codes.num_items;
        if (cfg.ap_cutoff) k = std::min(k, *cfg.ap_cutoff);
        out.ap_at_k = *ap_tie_aware_at_k(hist, k);
      }
      out.dcg = dcg_tie_aware(hist, cfg.dcg_cutoff);
      if (const auto ndcg = ndcg_tie_aware(hist, aff, cfg.dcg_cutoff)) {
        out.ndcg_defined = true;
        out.ndcg = *ndcg;
      }
      if (cfg.with_tiebreak && out.ap_defined) {
        const auto range = tiebreak_range(ranking, aff, RankMetric::ap);
        out.ap_min = range->min;
        out.ap_max = range->max;
        out.ap_random = *metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                              TieBreak::random,
                                              cfg.tiebreak_seed + q);
      }
    }
  });

  double ap = 0, apk = 0, dcg = 0, ndcg = 0, ap_min = 0, ap_max = 0;
  std::size_t nap = 0, nndcg = 0;
  for (const QueryEval& q : summary.per_query) {
    dcg += q.dcg;
    if (q.ap_defined) {
      ap += q.ap;
      apk += q.ap_at_k;
      ap_min += q.ap_min;
      ap_max += q.ap_max;
      ++nap;
    }
    if (q.ndcg_defined) {
      ndcg += q.ndcg;
      ++nndcg;
    }
  }
  summary.undefined_ap = summary.per_query.size() - nap;
  summary.undefined_ndcg = summary.per_query.size() - nndcg;
  if (nap > 0) {
    summary.mean_ap = ap / static_cast<double>(nap);
    summary.mean_ap_at_k = apk / static_cast<double>(nap);
    summary.mean_ap_min = ap_min / static_cast<double>(nap);
    summary.mean_ap_max = ap_max / static_cast<double>(nap);
  }
  if (!summary.per_query.empty())
    summary.mean_dcg = dcg / static_cast<double>(summary.per_query.size());
  if (nndcg > 0) summary.mean_ndcg = ndcg / static_cast<double>(nndcg);

  summary.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  return summary;
}

}  // namespace talr
