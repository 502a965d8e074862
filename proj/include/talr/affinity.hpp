// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <span>
#include <vector>

#include "talr/common.hpp"

namespace talr {

/// Gain of an affinity level: G(v) = 2^v - 1.
double gain_of_level(int v);

/// Per-item affinity values under a fixed query, together with the finite
/// level set V they are drawn from. V is kept sorted ascending and always
/// contains every per-item value.
struct AffinityLevels {
  std::vector<int> levels;    // V, sorted ascending, non-negative
  std::vector<int> per_item;  // affinity value of each database item

  std::size_t num_items() const { return per_item.size(); }
  std::size_t num_levels() const { return levels.size(); }

  /// Index of a value inside V; throws data_error for unknown levels.
  std::size_t level_index(int value) const;

  bool is_binary() const {
    return levels.size() <= 2 && (levels.empty() || levels.back() <= 1);
  }

  /// Builds the level set from the values themselves.
  static AffinityLevels from_values(std::vector<int> per_item);
  /// Uses an explicit level set; every value must be a member.
  static AffinityLevels with_levels(std::vector<int> levels,
                                    std::vector<int> per_item);
};

/// Gains G(v) of all items sorted descending via per-level counting,
/// O(|V| N). This is the NDCG normalizer order.
std::vector<double> sort_gains_desc(const AffinityLevels& affinities);

}  // namespace talr
