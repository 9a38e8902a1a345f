#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dualcf/data.hpp"
#include "dualcf/snr.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

namespace {

using namespace dualcf;

Dataset split_dataset(std::size_t n_users, std::size_t n_items,
                      std::vector<std::pair<user_t, item_t>> train,
                      std::vector<std::pair<user_t, item_t>> test) {
  Dataset ds;
  ds.train = testutil::from_pairs(n_users, n_items, train);
  ds.test = testutil::from_pairs(n_users, n_items, test);
  return ds;
}

RowScorer constant_scorer(std::size_t n_items, double value) {
  return [n_items, value](user_t) { return ScoreVector(n_items, value); };
}

// ---------------------------------------------------------------------------
// accumulators
// ---------------------------------------------------------------------------

TEST(RunningMoments, HandValues) {
  RunningMoments m;
  for (double x : {1.0, 2.0, 3.0, 4.0}) m.add(x);
  EXPECT_EQ(m.n, 4u);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.variance(), oracle::variance({1.0, 2.0, 3.0, 4.0}), 1e-12);
}

TEST(RunningMoments, MergeMatchesSinglePass) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(5.0, 2.0);
  std::vector<double> all(1000);
  for (auto& x : all) x = g(rng);
  RunningMoments whole;
  for (double x : all) whole.add(x);
  RunningMoments parts[3];
  for (std::size_t i = 0; i < all.size(); ++i) parts[i % 3].add(all[i]);
  RunningMoments merged;
  for (auto& p : parts) merged.merge(p);
  EXPECT_EQ(merged.n, whole.n);
  EXPECT_NEAR(merged.mean, whole.mean, 1e-10);
  EXPECT_NEAR(merged.variance(), whole.variance(), 1e-9);
  EXPECT_NEAR(whole.variance(), oracle::variance(all), 1e-9);
}

TEST(RunningMoments, ConstantInputHasExactlyZeroVariance) {
  RunningMoments m;
  for (int i = 0; i < 50; ++i) m.add(1e9);
  EXPECT_EQ(m.variance(), 0.0);
}

TEST(PairedMoments, MergeMatchesDirectCorrelation) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(500), b(500);
  for (std::size_t i = 0; i < 500; ++i) {
    a[i] = g(rng);
    b[i] = 0.4 * a[i] + g(rng);
  }
  PairedMoments parts[4];
  for (std::size_t i = 0; i < 500; ++i) parts[i % 4].add(a[i], b[i]);
  PairedMoments merged;
  for (auto& p : parts) merged.merge(p);
  const double rho = merged.cxy / std::sqrt(merged.m2x * merged.m2y);
  EXPECT_NEAR(rho, oracle::pearson(a, b), 1e-10);
}

// ---------------------------------------------------------------------------
// margin_correlation
// ---------------------------------------------------------------------------

TEST(MarginCorrelation, IdenticalSeriesGiveOne) {
  std::vector<double> m = {0.3, -1.2, 4.0, 0.7};
  EXPECT_NEAR(margin_correlation(m, m), 1.0, 1e-12);
}

TEST(MarginCorrelation, RequiresThreeSamples) {
  EXPECT_THROW(margin_correlation({1.0, 2.0}, {3.0, 4.0}), PreconditionError);
}

TEST(MarginCorrelation, MismatchedLengthsThrow) {
  EXPECT_THROW(margin_correlation({1.0, 2.0, 3.0}, {1.0, 2.0}), ShapeError);
}

TEST(MarginCorrelation, ConstantSeriesUndefined) {
  std::vector<double> flat(10, 2.0), varied = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_THROW(margin_correlation(flat, varied), CorrelationUndefined);
  EXPECT_THROW(margin_correlation(varied, flat), CorrelationUndefined);
}

TEST(MarginCorrelation, MatchesOracleOnRandomSeries) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(100), b(100);
  for (std::size_t i = 0; i < 100; ++i) {
    a[i] = g(rng);
    b[i] = -0.7 * a[i] + 0.5 * g(rng);
  }
  EXPECT_NEAR(margin_correlation(a, b), oracle::pearson(a, b), 1e-12);
}

TEST(MarginCorrelation, IndependentSeriesNearZero) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(10000), b(10000);
  for (std::size_t i = 0; i < 10000; ++i) {
    a[i] = g(rng);
    b[i] = g(rng);
  }
  EXPECT_LT(std::abs(margin_correlation(a, b)), 0.05);
}

// ---------------------------------------------------------------------------
// SnrStats
// ---------------------------------------------------------------------------

TEST(SnrStats, GaussianMarginsConvergeToMeanOverStd) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(1.0, 2.0);
  RunningMoments m;
  for (int i = 0; i < 100000; ++i) m.add(g(rng));
  auto s = SnrStats::from(m);
  EXPECT_FALSE(s.degenerate);
  EXPECT_NEAR(s.snr, 0.5, 0.05);
}

TEST(SnrStats, ZeroVarianceFlagsInfinitySentinel) {
  RunningMoments m;
  for (int i = 0; i < 5; ++i) m.add(3.0);
  auto s = SnrStats::from(m);
  EXPECT_TRUE(s.degenerate);
  EXPECT_TRUE(std::isinf(s.snr));
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  auto empty = SnrStats::from(RunningMoments{});
  EXPECT_TRUE(empty.degenerate);
  EXPECT_EQ(empty.count, 0u);
}

// ---------------------------------------------------------------------------
// snr_estimate
// ---------------------------------------------------------------------------

TEST(SnrEstimate, ConfigAndShapeGuards) {
  auto ds = split_dataset(1, 10, {{0, 0}}, {{0, 3}});
  auto buckets = popularity_buckets(ds.train);
  SnrConfig cfg;
  cfg.k_neg = 1;
  EXPECT_THROW(snr_estimate(ds, constant_scorer(10, 0.0),
                            constant_scorer(10, 0.0), 0.0, buckets, cfg),
               ConfigError);
  cfg.k_neg = 10;
  EXPECT_THROW(snr_estimate(ds, constant_scorer(10, 0.0),
                            constant_scorer(10, 0.0), -1.0, buckets, cfg),
               ConfigError);
  EXPECT_THROW(snr_estimate(ds, constant_scorer(9, 0.0),
                            constant_scorer(10, 0.0), 0.0, buckets, cfg),
               ShapeError);
}

TEST(SnrEstimate, ConstantScorerIsFlaggedDegenerate) {
  auto ds = split_dataset(1, 10, {{0, 0}}, {{0, 3}});
  auto buckets = popularity_buckets(ds.train);
  SnrConfig cfg;
  cfg.k_neg = 20;
  auto rep = snr_estimate(ds, constant_scorer(10, 7.0), constant_scorer(10, 7.0),
                          1.0, buckets, cfg);
  EXPECT_EQ(rep.dense.overall.count, 20u);
  EXPECT_TRUE(rep.dense.overall.degenerate);
  EXPECT_TRUE(std::isinf(rep.dense.overall.snr));
  EXPECT_TRUE(rep.sparse.overall.degenerate);
  EXPECT_TRUE(rep.fused.overall.degenerate);
  EXPECT_FALSE(rep.rho_defined);
}

TEST(SnrEstimate, GaussianMarginConvergence) {
  // 1000 users, one positive each, 100 draws: 1e5 margins per view. Dense
  // margins are 1 - N(0,4), sparse margins 1 - N(0,1); the target ratios are
  // 0.5 and 1.0. Positives score the same in every row, so paired margins
  // across the two independent tables decorrelate.
  const std::size_t n_users = 1000, n_items = 1002;
  std::vector<std::pair<user_t, item_t>> train, test;
  for (user_t u = 0; u < n_users; ++u) {
    train.push_back({u, 0});
    test.push_back({u, 1});
  }
  auto ds = split_dataset(n_users, n_items, train, test);
  auto buckets = popularity_buckets(ds.train);
  auto gaussian_table = [n_items](std::uint64_t salt, double sigma) {
    return [n_items, salt, sigma](user_t u) {
      ScoreVector y(n_items, 0.0);
      std::mt19937_64 rng(derive_seed(salt, u));
      std::normal_distribution<double> g(0.0, sigma);
      for (std::size_t i = 2; i < n_items; ++i) y[i] = g(rng);
      y[1] = 1.0;
      return y;
    };
  };
  SnrConfig cfg;
  auto rep = snr_estimate(ds, gaussian_table(999, 2.0), gaussian_table(555, 1.0),
                          0.0, buckets, cfg);
  EXPECT_EQ(rep.dense.overall.count, 100000u);
  EXPECT_NEAR(rep.dense.overall.snr, 0.5, 0.05);
  EXPECT_NEAR(rep.sparse.overall.snr, 1.0, 0.1);
  ASSERT_TRUE(rep.rho_defined);
  EXPECT_LT(std::abs(rep.rho), 0.05);
  // beta = 0 makes the fused margin arithmetic collapse onto the dense one
  EXPECT_EQ(rep.fused.overall.mean, rep.dense.overall.mean);
  EXPECT_EQ(rep.fused.overall.snr, rep.dense.overall.snr);
  // the single positive item sits in the lowest-degree bucket, so the bucket
  // slice holds every margin
  EXPECT_EQ(rep.dense.per_bucket[std::size_t(Bucket::Unpopular)].count,
            rep.dense.overall.count);
}

TEST(SnrEstimate, IdenticalViewsGiveUnitCorrelation) {
  auto ds = split_dataset(1, 40, {{0, 0}}, {{0, 1}});
  auto buckets = popularity_buckets(ds.train);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  ScoreVector table(40);
  for (auto& v : table) v = g(rng);
  auto scorer = [table](user_t) { return table; };
  SnrConfig cfg;
  auto rep = snr_estimate(ds, scorer, scorer, 1.0, buckets, cfg);
  ASSERT_TRUE(rep.rho_defined);
  EXPECT_NEAR(rep.rho, 1.0, 1e-12);
}

TEST(SnrEstimate, NegativeDrawsRespectRejectionPathExclusions) {
  // user 0 trains on items 0..4 (scored NaN: any draw would poison the
  // stats) and tests 5 and 19; candidates 6..18 all score zero.
  auto ds = split_dataset(
      4, 20,
      {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 5}, {1, 6}, {1, 7},
       {1, 8}, {1, 9}, {2, 10}, {2, 11}, {2, 12}, {2, 13}, {2, 14},
       {3, 15}, {3, 16}, {3, 17}, {3, 18}, {3, 19}},
      {{0, 5}, {0, 19}});
  auto buckets = popularity_buckets(ds.train);
  ASSERT_EQ(buckets.assignment[5], Bucket::Unpopular);
  ASSERT_EQ(buckets.assignment[19], Bucket::Popular);
  ScoreVector row(20, 0.0);
  for (item_t i = 0; i < 5; ++i) row[i] = std::nan("");
  row[5] = 5.0;
  row[19] = 1e9;  // drawing the other positive as a negative would show up
  auto scorer = [row](user_t) { return row; };
  SnrConfig cfg;
  auto rep =
      snr_estimate(ds, scorer, constant_scorer(20, 0.0), 0.0, buckets, cfg);
  const auto& unpop = rep.dense.per_bucket[std::size_t(Bucket::Unpopular)];
  EXPECT_EQ(unpop.count, cfg.k_neg);
  EXPECT_DOUBLE_EQ(unpop.mean, 5.0);
  EXPECT_TRUE(unpop.degenerate);
  const auto& pop = rep.dense.per_bucket[std::size_t(Bucket::Popular)];
  EXPECT_EQ(pop.count, cfg.k_neg);
  EXPECT_DOUBLE_EQ(pop.mean, 1e9);
  EXPECT_EQ(rep.dense.per_bucket[std::size_t(Bucket::Normal)].count, 0u);
  EXPECT_EQ(rep.dense.overall.count, 2 * cfg.k_neg);
  EXPECT_TRUE(std::isfinite(rep.dense.overall.mean));
  EXPECT_DOUBLE_EQ(rep.dense.overall.mean, (5.0 + 1e9) / 2.0);
  EXPECT_FALSE(rep.dense.overall.degenerate);
}

TEST(SnrEstimate, MostlyObservedRowsUseTheCandidatePool) {
  // 6 of 8 items observed in train, 1 in test: the one legal negative is
  // item 7, so margins are exactly y[6] - y[7] and NaN train scores prove no
  // observed item was ever drawn.
  auto ds = split_dataset(1, 8, {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}},
                          {{0, 6}});
  auto buckets = popularity_buckets(ds.train);
  ScoreVector row(8, std::nan(""));
  row[6] = 5.0;
  row[7] = 2.0;
  auto scorer = [row](user_t) { return row; };
  SnrConfig cfg;
  auto rep =
      snr_estimate(ds, scorer, constant_scorer(8, 0.0), 0.0, buckets, cfg);
  EXPECT_EQ(rep.dense.overall.count, cfg.k_neg);
  EXPECT_DOUBLE_EQ(rep.dense.overall.mean, 3.0);
  EXPECT_TRUE(rep.dense.overall.degenerate);
}

TEST(SnrEstimate, FullyObservedUsersContributeNothing) {
  auto ds = split_dataset(1, 4, {{0, 0}, {0, 1}, {0, 2}}, {{0, 3}});
  auto buckets = popularity_buckets(ds.train);
  SnrConfig cfg;
  auto rep = snr_estimate(ds, constant_scorer(4, 1.0), constant_scorer(4, 0.0),
                          0.0, buckets, cfg);
  EXPECT_EQ(rep.dense.overall.count, 0u);
  EXPECT_TRUE(rep.dense.overall.degenerate);
}

TEST(SnrEstimate, FusedMarginsMatchCombinedScorer) {
  auto ds = split_dataset(1, 30, {{0, 0}}, {{0, 1}});
  auto buckets = popularity_buckets(ds.train);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  ScoreVector yd(30), ys(30);
  for (std::size_t i = 0; i < 30; ++i) {
    yd[i] = g(rng);
    ys[i] = g(rng);
  }
  const double beta = 2.5;
  ScoreVector combined(30);
  for (std::size_t i = 0; i < 30; ++i) combined[i] = yd[i] + beta * ys[i];
  SnrConfig cfg;
  auto split_views = snr_estimate(
      ds, [yd](user_t) { return yd; }, [ys](user_t) { return ys; }, beta,
      buckets, cfg);
  auto pre_fused = snr_estimate(
      ds, [combined](user_t) { return combined; }, constant_scorer(30, 0.0),
      0.0, buckets, cfg);
  EXPECT_NEAR(split_views.fused.overall.mean, pre_fused.dense.overall.mean,
              1e-9);
  EXPECT_NEAR(split_views.fused.overall.stddev, pre_fused.dense.overall.stddev,
              1e-9);
  EXPECT_NEAR(split_views.fused.overall.snr, pre_fused.dense.overall.snr, 1e-9);
  EXPECT_DOUBLE_EQ(split_views.beta, beta);
}

TEST(SnrEstimate, DeterministicGivenSeedAndThreadCount) {
  const std::size_t n_users = 50, n_items = 60;
  std::vector<std::pair<user_t, item_t>> train, test;
  for (user_t u = 0; u < n_users; ++u) {
    train.push_back({u, item_t(u % 7)});
    test.push_back({u, item_t(10 + u % 11)});
  }
  auto ds = split_dataset(n_users, n_items, train, test);
  auto buckets = popularity_buckets(ds.train);
  auto scorer = [n_items](std::uint64_t salt) {
    return [n_items, salt](user_t u) {
      ScoreVector y(n_items);
      std::mt19937_64 rng(derive_seed(salt, u));
      std::normal_distribution<double> g(0.0, 1.0);
      for (auto& v : y) v = g(rng);
      return y;
    };
  };
  SnrConfig cfg;
  cfg.seed = 77;
  auto a = snr_estimate(ds, scorer(1), scorer(2), 3.0, buckets, cfg, 1);
  auto b = snr_estimate(ds, scorer(1), scorer(2), 3.0, buckets, cfg, 4);
  EXPECT_EQ(a.dense.overall.mean, b.dense.overall.mean);
  EXPECT_EQ(a.sparse.overall.snr, b.sparse.overall.snr);
  EXPECT_EQ(a.fused.overall.stddev, b.fused.overall.stddev);
  EXPECT_EQ(a.rho, b.rho);
  for (std::size_t bk = 0; bk < 3; ++bk) {
    EXPECT_EQ(a.dense.per_bucket[bk].count, b.dense.per_bucket[bk].count);
    EXPECT_EQ(a.dense.per_bucket[bk].mean, b.dense.per_bucket[bk].mean);
  }
  SnrConfig other = cfg;
  other.seed = 78;
  auto c = snr_estimate(ds, scorer(1), scorer(2), 3.0, buckets, other, 1);
  EXPECT_NE(a.dense.overall.mean, c.dense.overall.mean);
}

TEST(SnrEstimate, ConvexBlendNeverFallsBelowTheWeakerView) {
  // correlated Gaussian margins with positive means: any interior mixing
  // weight keeps the measured ratio at or above the weaker view's, up to
  // Monte-Carlo error
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  const double rho = 0.3, mu1 = 1.0, s1 = 1.0, mu2 = 0.8, s2 = 1.2;
  const std::size_t n = 200000;
  RunningMoments v1, v2;
  std::array<RunningMoments, 9> blends;
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = g(rng);
    const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * g(rng);
    const double x = mu1 + s1 * z1;
    const double y = mu2 + s2 * z2;
    v1.add(x);
    v2.add(y);
    for (std::size_t a = 0; a < 9; ++a) {
      const double alpha = 0.1 * double(a + 1);
      blends[a].add(alpha * x + (1.0 - alpha) * y);
    }
  }
  const double r1 = SnrStats::from(v1).snr;
  const double r2 = SnrStats::from(v2).snr;
  const double floor = std::min(r1, r2) - 0.02;
  for (const auto& blend : blends) EXPECT_GE(SnrStats::from(blend).snr, floor);
}

}  // namespace
