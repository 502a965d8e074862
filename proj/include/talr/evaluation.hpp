// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "talr/tie_metrics.hpp"

namespace talr {

/// Affinity of (query q, database item i) as a level value.
using AffinityFn = std::function<int(std::size_t q, std::size_t i)>;

struct EvalConfig {
  std::optional<std::size_t> ap_cutoff;  // e.g. 5000
  std::optional<std::size_t> dcg_cutoff;
  bool with_tiebreak = false;            // also evaluate strategy range
  std::uint64_t tiebreak_seed = 0;
};

struct QueryEval {
  bool ap_defined = false;
  bool ndcg_defined = false;
  double ap = 0.0;
  double ap_at_k = 0.0;
  double dcg = 0.0;
  double ndcg = 0.0;
  // Tie-breaking audit values (AP), when requested.
  double ap_min = 0.0, ap_max = 0.0, ap_random = 0.0;
};

struct EvalSummary {
  std::vector<QueryEval> per_query;
  std::vector<int> levels;
  std::optional<std::size_t> ap_cutoff;
  double mean_ap = 0.0;
  double mean_ap_at_k = 0.0;
  double mean_dcg = 0.0;
  double mean_ndcg = 0.0;
  double mean_ap_min = 0.0, mean_ap_max = 0.0;
  std::size_t undefined_ap = 0;
  std::size_t undefined_ndcg = 0;
  double elapsed_ms = 0.0;
};

/// Hamming-ranking evaluation of every query against the database with
/// tie-aware metrics; parallel over queries (TALR_THREADS caps workers).
EvalSummary evaluate_hamming_ranking(const BinaryCodebook& query_codes,
                                     const BinaryCodebook& db_codes,
                                     const AffinityFn& affinity,
                                     const std::vector<int>& levels,
                                     const EvalConfig& cfg);

}  // namespace talr
