// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "talr/tie_metrics.hpp"

using namespace talr;

namespace {

TieGroupedRanking make_ranking(const std::vector<int>& distances, std::size_t b) {
  TieGroupedRanking r;
  r.groups.resize(b + 1);
  for (std::size_t i = 0; i < distances.size(); ++i)
    r.groups[static_cast<std::size_t>(distances[i])].push_back(
        static_cast<std::uint32_t>(i));
  r.total = distances.size();
  return r;
}

struct RandomInstance {
  TieGroupedRanking ranking;
  AffinityLevels affinities;
};

RandomInstance random_instance(Rng& rng, std::size_t max_items,
                               std::size_t max_levels) {
  const std::size_t n = 1 + rng.below(max_items);
  const std::size_t b = 1 + rng.below(5);
  std::vector<int> distances(n);
  for (auto& d : distances) d = static_cast<int>(rng.below(b + 1));
  std::vector<int> levels = max_levels <= 2 ? std::vector<int>{0, 1}
                                            : std::vector<int>{0, 1, 2};
  std::vector<int> values(n);
  for (auto& v : values) v = levels[rng.below(levels.size())];
  values[rng.below(n)] = levels.back();  // at least one positive item
  return {make_ranking(distances, b),
          AffinityLevels::with_levels(levels, values)};
}

AffinityLevels binary_reduce(const AffinityLevels& aff) {
  std::vector<int> binary(aff.per_item.size());
  for (std::size_t i = 0; i < binary.size(); ++i)
    binary[i] = aff.per_item[i] > 0 ? 1 : 0;
  return AffinityLevels::with_levels({0, 1}, binary);
}

/// Exhaustive min/max of the classical metric over within-tie orderings.
std::pair<double, double> brute_force_extremes(const TieGroupedRanking& ranking,
                                               const AffinityLevels& aff,
                                               RankMetric metric) {
  std::vector<std::vector<std::uint32_t>> groups;
  for (const auto& g : ranking.groups) {
    groups.push_back(g);
    std::sort(groups.back().begin(), groups.back().end());
  }
  double lo = 1e300, hi = -1e300;
  std::vector<std::uint32_t> order;
  while (true) {
    order.clear();
    for (const auto& g : groups) order.insert(order.end(), g.begin(), g.end());
    const double v = *classical_metric(order, aff, metric);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    std::size_t gi = groups.size();
    bool advanced = false;
    while (gi-- > 0) {
      if (std::next_permutation(groups[gi].begin(), groups[gi].end())) {
        advanced = true;
        break;
      }
      if (gi == 0) break;
    }
    if (!advanced) return {lo, hi};
  }
}

}  // namespace

TEST_CASE("tie histogram counts per level with cumulative sums") {
  const auto ranking = make_ranking({2, 0, 1, 1}, 2);
  const auto aff = AffinityLevels::with_levels({0, 1}, {1, 1, 0, 1});
  const TieHistogram h = build_tie_histogram(ranking, aff);
  CHECK(h.bin_pos == std::vector<std::int64_t>{1, 1, 1});
  CHECK(h.bin_total == std::vector<std::int64_t>{1, 2, 1});
  CHECK(h.cum_pos == std::vector<std::int64_t>{1, 2, 3});
  CHECK(h.total_items == 4);
  CHECK(h.total_pos == 3);
}

TEST_CASE("empty ranking gives an all-zero histogram") {
  TieGroupedRanking r;
  r.groups.resize(9);
  const auto aff = AffinityLevels::with_levels({0, 1}, {});
  const TieHistogram h = build_tie_histogram(r, aff);
  for (std::size_t d = 0; d < h.num_bins; ++d) {
    CHECK(h.bin_total[d] == 0);
    CHECK(h.bin_pos[d] == 0);
  }
  CHECK(h.total_items == 0);
}

TEST_CASE("histogram level sums match a direct tally") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instance(rng, 40, 3);
    const TieHistogram h = build_tie_histogram(inst.ranking, inst.affinities);
    for (std::size_t vi = 0; vi < inst.affinities.levels.size(); ++vi) {
      std::int64_t expected = 0;
      for (int v : inst.affinities.per_item)
        if (v == inst.affinities.levels[vi]) ++expected;
      std::int64_t got = 0;
      for (std::size_t d = 0; d < h.num_bins; ++d) got += h.n(d, vi);
      CHECK(got == expected);
    }
  }
}

TEST_CASE("histogram rejects rankings that overrun the affinity list") {
  const auto ranking = make_ranking({0, 1}, 1);
  const auto aff = AffinityLevels::with_levels({0, 1}, {1});
  CHECK_THROWS_AS(build_tie_histogram(ranking, aff), std::invalid_argument);
}

TEST_CASE("tie-aware AP on hand-checked instances") {
  SUBCASE("single relevant item alone at distance 0") {
    const auto ranking = make_ranking({0, 3, 3, 3}, 3);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0, 0, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(*ap_tie_aware(h) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two items in one tie, one relevant") {
    const auto ranking = make_ranking({1, 1}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(*ap_tie_aware(h) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("three items in one tie, two relevant") {
    const auto ranking = make_ranking({0, 0, 0}, 1);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(*ap_tie_aware(h) == doctest::Approx(29.0 / 36.0).epsilon(1e-12));
  }
  SUBCASE("no relevant items is undefined") {
    const auto ranking = make_ranking({0, 1}, 1);
    const auto aff = AffinityLevels::with_levels({0, 1}, {0, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(!ap_tie_aware(h).has_value());
  }
}

TEST_CASE("AP at cutoff") {
  const auto ranking = make_ranking({1, 1}, 2);
  const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0});
  const auto h = build_tie_histogram(ranking, aff);
  SUBCASE("k = |S| reduces to the full metric") {
    CHECK(*ap_tie_aware_at_k(h, 2) ==
          doctest::Approx(*ap_tie_aware(h)).epsilon(1e-15));
  }
  SUBCASE("two-item tie at k = 1 averages to one half") {
    CHECK(*ap_tie_aware_at_k(h, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("cutoff out of range") {
    CHECK_THROWS_AS(ap_tie_aware_at_k(h, 0), std::invalid_argument);
    CHECK_THROWS_AS(ap_tie_aware_at_k(h, 3), std::invalid_argument);
  }
}

TEST_CASE("tie-aware DCG on hand-checked instances") {
  SUBCASE("one item of affinity v at distance 0") {
    for (int v : {0, 1, 2, 5}) {
      const auto ranking = make_ranking({0}, 2);
      const auto aff = AffinityLevels::with_levels({0, 1, 2, 5}, {v});
      const auto h = build_tie_histogram(ranking, aff);
      CHECK(dcg_tie_aware(h) ==
            doctest::Approx(std::pow(2.0, v) - 1.0).epsilon(1e-12));
    }
  }
  SUBCASE("two tied items with affinities {1, 0}") {
    const auto ranking = make_ranking({1, 1}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    const double expected = 0.5 * (1.0 + 1.0 / std::log2(3.0));
    CHECK(dcg_tie_aware(h) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.81546).epsilon(1e-4));
  }
}

TEST_CASE("tie-aware NDCG") {
  SUBCASE("perfect ranking without ties") {
    const auto ranking = make_ranking({0, 1, 2}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1, 2}, {2, 1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(*ndcg_tie_aware(h, aff) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two tied items normalize against the ideal") {
    const auto ranking = make_ranking({1, 1}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(*ndcg_tie_aware(h, aff) ==
          doctest::Approx(0.5 * (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
  }
  SUBCASE("all-zero gains are undefined") {
    const auto ranking = make_ranking({0, 1}, 1);
    const auto aff = AffinityLevels::with_levels({0, 1}, {0, 0});
    const auto h = build_tie_histogram(ranking, aff);
    CHECK(!ndcg_tie_aware(h, aff).has_value());
  }
}

TEST_CASE("permutation oracle agrees with closed forms to 1e-12") {
  Rng rng(23);
  for (int trial = 0; trial < 400; ++trial) {
    const auto inst = random_instance(rng, 8, 3);
    const auto h = build_tie_histogram(inst.ranking, inst.affinities);

    const auto dcg_oracle =
        permutation_average_oracle(inst.ranking, inst.affinities, RankMetric::dcg);
    CHECK(dcg_tie_aware(h) == doctest::Approx(*dcg_oracle).epsilon(1e-12));

    const auto ndcg_oracle =
        permutation_average_oracle(inst.ranking, inst.affinities, RankMetric::ndcg);
    CHECK(*ndcg_tie_aware(h, inst.affinities) ==
          doctest::Approx(*ndcg_oracle).epsilon(1e-12));

    const auto baff = binary_reduce(inst.affinities);
    const auto bh = build_tie_histogram(inst.ranking, baff);
    const auto ap_oracle =
        permutation_average_oracle(inst.ranking, baff, RankMetric::ap);
    CHECK(*ap_tie_aware(bh) == doctest::Approx(*ap_oracle).epsilon(1e-12));

    for (std::size_t k = 1; k <= inst.ranking.total; ++k) {
      const auto apk_oracle =
          permutation_average_oracle(inst.ranking, baff, RankMetric::ap, k);
      CHECK(*ap_tie_aware_at_k(bh, k) ==
            doctest::Approx(*apk_oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("oracle basics and the combinatorial guard") {
  SUBCASE("single permutation returns the classical value") {
    const auto ranking = make_ranking({0, 1, 2}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1}, {0, 1, 0});
    const auto v = permutation_average_oracle(ranking, aff, RankMetric::ap);
    CHECK(*v == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("two-item tie with one relevant averages to 0.75") {
    const auto ranking = make_ranking({1, 1}, 1);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0});
    CHECK(*permutation_average_oracle(ranking, aff, RankMetric::ap) ==
          doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("guard rejects factorial blowups") {
    const auto ranking = make_ranking(std::vector<int>(12, 0), 1);
    const auto aff =
        AffinityLevels::with_levels({0, 1}, std::vector<int>(12, 1));
    CHECK_THROWS_AS(permutation_average_oracle(ranking, aff, RankMetric::ap),
                    std::invalid_argument);
  }
}

TEST_CASE("tie-breaking strategies") {
  SUBCASE("without ties every strategy matches the tie-aware value") {
    const auto ranking = make_ranking({0, 1, 2, 3}, 3);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0, 1, 0});
    const auto h = build_tie_histogram(ranking, aff);
    const double expected = *ap_tie_aware(h);
    for (TieBreak s : {TieBreak::optimistic, TieBreak::pessimistic,
                       TieBreak::random, TieBreak::by_index}) {
      CHECK(*metric_with_tiebreak(ranking, aff, RankMetric::ap, s, 99) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("two-item tie extremes") {
    const auto ranking = make_ranking({1, 1}, 1);
    const auto aff = AffinityLevels::with_levels({0, 1}, {0, 1});
    CHECK(*metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                TieBreak::optimistic) == doctest::Approx(1.0));
    CHECK(*metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                TieBreak::pessimistic) == doctest::Approx(0.5));
  }
  SUBCASE("random strategy is reproducible per seed") {
    const auto ranking = make_ranking({0, 0, 0, 0, 0, 1, 1, 1}, 1);
    const auto aff =
        AffinityLevels::with_levels({0, 1}, {1, 0, 1, 0, 1, 0, 1, 0});
    const auto a = metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                        TieBreak::random, 123);
    const auto b = metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                        TieBreak::random, 123);
    CHECK(*a == *b);
  }
}

TEST_CASE("optimistic >= tie-aware >= pessimistic on random instances") {
  Rng rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng, 12, 3);
    for (RankMetric metric : {RankMetric::ap, RankMetric::ndcg}) {
      const auto aff = metric == RankMetric::ap ? binary_reduce(inst.affinities)
                                                : inst.affinities;
      const auto range = tiebreak_range(inst.ranking, aff, metric);
      REQUIRE(range.has_value());
      CHECK(range->tie_aware >= range->min - 1e-12);
      CHECK(range->tie_aware <= range->max + 1e-12);
      CHECK(range->tie_aware > 0.0);
      CHECK(range->tie_aware <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("tiebreak range equals brute-force extremes on small instances") {
  Rng rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    const auto inst = random_instance(rng, 7, 3);
    for (RankMetric metric : {RankMetric::ap, RankMetric::ndcg}) {
      const auto aff = metric == RankMetric::ap ? binary_reduce(inst.affinities)
                                                : inst.affinities;
      const auto range = tiebreak_range(inst.ranking, aff, metric);
      const auto [lo, hi] = brute_force_extremes(inst.ranking, aff, metric);
      CHECK(range->min == doctest::Approx(lo).epsilon(1e-12));
      CHECK(range->max == doctest::Approx(hi).epsilon(1e-12));
    }
  }
  SUBCASE("no ties collapses the range") {
    const auto ranking = make_ranking({0, 1, 2}, 2);
    const auto aff = AffinityLevels::with_levels({0, 1}, {1, 0, 1});
    const auto range = tiebreak_range(ranking, aff, RankMetric::ap);
    CHECK(range->min == range->max);
    CHECK(range->min == doctest::Approx(range->tie_aware).epsilon(1e-12));
  }
}

TEST_CASE("reduction: singleton ties equal the classical metric under any strategy") {
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<int> distances(n);
    for (std::size_t i = 0; i < n; ++i) distances[i] = static_cast<int>(i);
    std::vector<int> values(n);
    for (auto& v : values) v = static_cast<int>(rng.below(2));
    values[rng.below(n)] = 1;
    const auto ranking = make_ranking(distances, n);
    const auto aff = AffinityLevels::with_levels({0, 1}, values);
    const auto h = build_tie_histogram(ranking, aff);
    const auto classical = metric_with_tiebreak(ranking, aff, RankMetric::ap,
                                                TieBreak::random, trial);
    CHECK(*ap_tie_aware(h) == doctest::Approx(*classical).epsilon(1e-12));
  }
}

TEST_CASE("counting evaluation touches each item O(1) times per level") {
  Rng rng(41);
  auto touches_for = [&](std::size_t n) {
    Matrix feats(n, 16);
    for (double& x : feats.data) x = rng.normal();
    const BinaryCodebook db = binarize_and_pack(feats);
    std::vector<int> values(n);
    for (auto& v : values) v = static_cast<int>(rng.below(2));
    const auto aff = AffinityLevels::with_levels({0, 1}, values);
    instrument::reset_touches();
    const auto ranking = counting_sort_rank(db.row(0), 16, db);
    const auto h = build_tie_histogram(ranking, aff);
    (void)ap_tie_aware(h);
    (void)dcg_tie_aware(h);
    (void)ndcg_tie_aware(h, aff);
    return instrument::reset_touches();
  };
  const auto t1 = touches_for(2000);
  const auto t2 = touches_for(4000);
  CHECK(static_cast<double>(t2) <= 2.2 * static_cast<double>(t1));
  CHECK(static_cast<double>(t1) <= 16.0 * 2000.0);
}
