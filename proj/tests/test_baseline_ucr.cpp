#include <gtest/gtest.h>

#include <vector>

#include "dtwmatch/baseline_ucr.hpp"
#include "dtwmatch/random.hpp"
#include "oracles.hpp"

using namespace dtwmatch;

TEST(BruteForce, MatchesFullMatrixOracle) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto series = gen_random_walk(400, seed);
    const auto query = gen_random_walk(20, seed, streams::query);
    for (std::size_t r : {0u, 2u, 20u}) {
      const auto expected = oracle::best_match(series, query, r);
      const auto got = brute_force_search(series, query, BandRadius{r});
      EXPECT_EQ(got.index, expected.index);
      EXPECT_TRUE(oracle::close(got.distance, expected.distance, 1e-9));
    }
  }
}

TEST(BruteForce, Errors) {
  const std::vector<double> series{1, 2, 3};
  const std::vector<double> query{1, 2, 3, 4};
  EXPECT_THROW((void)brute_force_search(series, query, BandRadius{1}), config_error);
  EXPECT_THROW((void)ucr_dtw_search(series, query, BandRadius{1}), config_error);
  EXPECT_THROW((void)ucr_dtw_search(series, std::vector<double>{}, BandRadius{1}), config_error);
}

TEST(Ucr, AgreesWithBruteForceBitwise) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const auto series = gen_random_walk(3000, seed);
    const auto query = gen_random_walk(64, seed, streams::query);
    for (std::size_t r : {0u, 7u, 32u, 64u}) {
      const auto ucr = ucr_dtw_search(series, query, BandRadius{r});
      EXPECT_EQ(ucr.best, brute_force_search(series, query, BandRadius{r})) << "seed=" << seed << " r=" << r;
    }
  }
}

TEST(Ucr, StatsAreConsistent) {
  const auto series = gen_random_walk(20'000, 21);
  const auto query = gen_random_walk(128, 21, streams::query);
  const auto out = ucr_dtw_search(series, query, BandRadius{12});
  const auto& s = out.stats;
  EXPECT_EQ(s.candidates, 20'000u - 127);
  EXPECT_EQ(s.computed[0], s.candidates);
  EXPECT_EQ(s.computed[1], s.computed[0] - s.rejected[0]);
  EXPECT_EQ(s.computed[2], s.computed[1] - s.rejected[1]);
  EXPECT_EQ(s.dtw_evals, s.computed[2] - s.rejected[2]);
  EXPECT_LE(s.dtw_abandoned, s.dtw_evals);
  EXPECT_LT(s.dtw_evals, s.candidates);
  EXPECT_GT(s.pruning_ratio(), 0.0);
}

TEST(Ucr, OptionsDoNotChangeResult) {
  const auto series = gen_random_walk(2000, 22);
  const auto query = gen_random_walk(50, 22, streams::query);
  const auto reference = ucr_dtw_search(series, query, BandRadius{10}).best;
  UcrOptions opts;
  opts.early_abandon = false;
  EXPECT_EQ(ucr_dtw_search(series, query, BandRadius{10}, opts).best, reference);
  opts.cascade = {LowerBound::keogh_eq, LowerBound::keogh_ec, LowerBound::kim_fl};
  EXPECT_EQ(ucr_dtw_search(series, query, BandRadius{10}, opts).best, reference);
}

TEST(Ucr, TiesPreferSmallestIndex) {
  std::vector<double> series(400);
  for (std::size_t i = 0; i < series.size(); ++i) { series[i] = static_cast<double>((i * 5) % 17); }
  const std::vector<double> query(series.begin() + 170, series.begin() + 200);
  const auto out = ucr_dtw_search(series, query, BandRadius{4});
  EXPECT_EQ(out.best.distance, 0.0);
  EXPECT_EQ(out.best.index, 1u);
  EXPECT_EQ(brute_force_search(series, query, BandRadius{4}).index, 1u);
}
