// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/affinity.hpp"

#include <algorithm>
#include <cmath>

namespace talr {

double gain_of_level(int v) {
  if (v < 0) throw std::invalid_argument("gain_of_level: level must be non-negative");
  return std::ldexp(1.0, v) - 1.0;
}

std::size_t AffinityLevels::level_index(int value) const {
  const auto it = std::lower_bound(levels.begin(), levels.end(), value);
  if (it == levels.end() || *it != value)
    throw data_error("affinity value " + std::to_string(value) +
                     " not in the level set");
  return static_cast<std::size_t>(it - levels.begin());
}

AffinityLevels AffinityLevels::from_values(std::vector<int> per_item) {
  AffinityLevels a;
  a.levels = per_item;
  std::sort(a.levels.begin(), a.levels.end());
  a.levels.erase(std::unique(a.levels.begin(), a.levels.end()), a.levels.end());
  if (!a.levels.empty() && a.levels.front() < 0)
    throw data_error("affinity values must be non-negative");
  a.per_item = std::move(per_item);
  return a;
}

AffinityLevels AffinityLevels::with_levels(std::vector<int> levels,
                                           std::vector<int> per_item) {
  AffinityLevels a;
  a.levels = std::move(levels);
  std::sort(a.levels.begin(), a.levels.end());
  a.levels.erase(std::unique(a.levels.begin(), a.levels.end()), a.levels.end());
  if (!a.levels.empty() && a.levels.front() < 0)
    throw data_error("affinity levels must be non-negative");
  a.per_item = std::move(per_item);
  for (int v : a.per_item) a.level_index(v);  // rejects unknown levels
  return a;
}

std::vector<double> sort_gains_desc(const AffinityLevels& affinities) {
  std::vector<std::int64_t> per_level(affinities.levels.size(), 0);
  for (int v : affinities.per_item) ++per_level[affinities.level_index(v)];
  instrument::touch(affinities.per_item.size() + affinities.levels.size());

  std::vector<double> gains;
  gains.reserve(affinities.per_item.size());
  for (std::size_t vi = affinities.levels.size(); vi-- > 0;) {
    const double g = gain_of_level(affinities.levels[vi]);
    for (std::int64_t k = 0; k < per_level[vi]; ++k) gains.push_back(g);
  }
  return gains;
}

}  // namespace talr
