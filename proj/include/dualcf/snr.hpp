#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/data.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/kernels.hpp"

// =============================================================================
// FILE: dualcf/snr.hpp
// BRIEF: Empirical signal-to-noise measurement of ranking margins. For every
// test positive (u, i+) a fixed number of negatives is drawn uniformly from
// the items the user has in neither the train nor the test split; the margin
// y(u,i+) - y(u,i-) is attributed to the positive item's popularity bucket.
// SNR is mean/std of the margins; the cross-view correlation pairs both
// views' margins on identical draws. Fused margins follow by linearity:
// margin_fused = margin_dense + beta * margin_sparse.
// =============================================================================

namespace dualcf {

struct SnrConfig {
  std::size_t k_neg = 100;  // negatives drawn per test positive
  std::uint64_t seed = 42;

  void validate() const {
    if (k_neg < 2) throw ConfigError("snr: k_neg must be >= 2");
  }
};

/// Streaming mean/variance accumulator. Merging follows a fixed order in the
/// callers, so results never depend on the thread count.
struct RunningMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations

  void add(double x) {
    ++n;
    const double dx = x - mean;
    mean += dx / double(n);
    m2 += dx * (x - mean);
  }

  void merge(const RunningMoments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = double(n + o.n);
    const double delta = o.mean - mean;
    m2 += o.m2 + delta * delta * double(n) * double(o.n) / total;
    mean += delta * double(o.n) / total;
    n += o.n;
  }

  double variance() const { return n >= 2 ? m2 / double(n - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
};

/// Paired accumulator for the cross-view Pearson correlation.
struct PairedMoments {
  std::size_t n = 0;
  double mean_x = 0.0, mean_y = 0.0;
  double m2x = 0.0, m2y = 0.0, cxy = 0.0;

  void add(double x, double y) {
    ++n;
    const double dx = x - mean_x;
    const double dy = y - mean_y;
    mean_x += dx / double(n);
    mean_y += dy / double(n);
    m2x += dx * (x - mean_x);
    m2y += dy * (y - mean_y);
    cxy += dx * (y - mean_y);
  }

  void merge(const PairedMoments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = double(n + o.n);
    const double dx = o.mean_x - mean_x;
    const double dy = o.mean_y - mean_y;
    const double w = double(n) * double(o.n) / total;
    m2x += o.m2x + dx * dx * w;
    m2y += o.m2y + dy * dy * w;
    cxy += o.cxy + dx * dy * w;
    mean_x += dx * double(o.n) / total;
    mean_y += dy * double(o.n) / total;
    n += o.n;
  }
};

/// Pearson correlation of two margin series taken on identical draws.
inline double margin_correlation(const std::vector<double>& margins_a,
                                 const std::vector<double>& margins_b) {
  if (margins_a.size() != margins_b.size())
    throw ShapeError("margin correlation: series differ in length");
  if (margins_a.size() < 3)
    throw PreconditionError("margin correlation: need >= 3 paired samples");
  const std::size_t n = margins_a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += margins_a[i];
    mb += margins_b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = margins_a[i] - ma;
    const double db = margins_b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw CorrelationUndefined("margin correlation: a series has no variance");
  return sab / std::sqrt(saa * sbb);
}

struct SnrStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double snr = 0.0;         // +inf sentinel when degenerate with samples
  bool degenerate = true;   // no samples, or zero margin variance

  static SnrStats from(const RunningMoments& m) {
    SnrStats s;
    s.count = m.n;
    if (m.n == 0) return s;
    s.mean = m.mean;
    s.stddev = m.stddev();
    if (s.stddev == 0.0) {
      s.snr = std::numeric_limits<double>::infinity();
      s.degenerate = true;
    } else {
      s.snr = s.mean / s.stddev;
      s.degenerate = false;
    }
    return s;
  }
};

struct SnrViewStats {
  SnrStats overall;
  std::array<SnrStats, 3> per_bucket;  // indexed by Bucket value
};

struct SnrReport {
  SnrViewStats dense, sparse, fused;
  double rho = 0.0;          // cross-view Pearson of paired margins
  bool rho_defined = false;  // false when a view's margins have no variance
  std::size_t k_neg = 0;
  std::uint64_t seed = 0;
  double beta = 0.0;         // fusion weight the fused margins used
};

/// Measures margin SNR for both raw view scorers and their fusion at the
/// given weight. Draws are independent uniform picks (with replacement) from
/// the user's unobserved items, generated from a per-user seed so reports are
/// identical across thread counts and user orderings. Scorers must be safe to
/// call concurrently. Users whose test row is empty, or who have no
/// unobserved item left, contribute nothing.
inline SnrReport snr_estimate(const Dataset& ds, const RowScorer& dense_raw,
                              const RowScorer& sparse_raw, double beta,
                              const PopularityBuckets& buckets,
                              const SnrConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw ConfigError("snr: fusion weight must be finite and >= 0");
  const std::size_t n_users = ds.train.n_users();
  const std::size_t n_items = ds.train.n_items();
  if (ds.test.n_users() != n_users || ds.test.n_items() != n_items)
    throw ShapeError("snr: train and test grids differ");
  if (buckets.assignment.size() != n_items)
    throw ShapeError("snr: bucket assignment does not cover the item set");

  // view slots: 0 dense, 1 sparse, 2 fused
  struct UserAcc {
    std::array<RunningMoments, 3> overall;
    std::array<std::array<RunningMoments, 3>, 3> bucket;  // [view][bucket]
    PairedMoments cross;
  };
  std::vector<UserAcc> acc(n_users);
  std::atomic<bool> bad_shape{false};

  parallel_for(n_users, threads, [&](std::size_t uu) {
    const user_t u = user_t(uu);
    auto positives = ds.test.row_items(u);
    if (positives.empty()) return;
    auto train_row = ds.train.row_items(u);
    const std::size_t observed = train_row.size() + positives.size();
    if (observed >= n_items) return;
    ScoreVector yd = dense_raw(u);
    ScoreVector ys = sparse_raw(u);
    if (yd.size() != n_items || ys.size() != n_items) {
      bad_shape.store(true, std::memory_order_relaxed);
      return;
    }
    auto is_observed = [&](item_t j) {
      return std::binary_search(train_row.begin(), train_row.end(), j) ||
             std::binary_search(positives.begin(), positives.end(), j);
    };
    std::mt19937_64 rng(derive_seed(cfg.seed, u));
    // mostly-observed rows enumerate the candidate pool once; sparse rows
    // rejection-sample against the full item range
    const std::size_t free_items = n_items - observed;
    std::vector<item_t> pool;
    if (free_items * 4 < n_items) {
      pool.reserve(free_items);
      for (item_t j = 0; j < item_t(n_items); ++j)
        if (!is_observed(j)) pool.push_back(j);
    }
    std::uniform_int_distribution<std::size_t> pick(
        0, pool.empty() ? n_items - 1 : pool.size() - 1);
    UserAcc& a = acc[uu];
    for (item_t ip : positives) {
      const auto b = std::size_t(buckets.assignment[ip]);
      for (std::size_t t = 0; t < cfg.k_neg; ++t) {
        item_t jn;
        if (!pool.empty()) {
          jn = pool[pick(rng)];
        } else {
          do {
            jn = item_t(pick(rng));
          } while (is_observed(jn));
        }
        const double d_dense = yd[ip] - yd[jn];
        const double d_sparse = ys[ip] - ys[jn];
        const double d_fused = d_dense + beta * d_sparse;
        const std::array<double, 3> d = {d_dense, d_sparse, d_fused};
        for (std::size_t v = 0; v < 3; ++v) {
          a.overall[v].add(d[v]);
          a.bucket[v][b].add(d[v]);
        }
        a.cross.add(d_dense, d_sparse);
      }
    }
  });
  if (bad_shape.load())
    throw ShapeError("snr: scorer returned wrong-length row");

  UserAcc total;
  for (const UserAcc& a : acc) {
    for (std::size_t v = 0; v < 3; ++v) {
      total.overall[v].merge(a.overall[v]);
      for (std::size_t b = 0; b < 3; ++b) total.bucket[v][b].merge(a.bucket[v][b]);
    }
    total.cross.merge(a.cross);
  }

  SnrReport report;
  report.k_neg = cfg.k_neg;
  report.seed = cfg.seed;
  report.beta = beta;
  SnrViewStats* views[3] = {&report.dense, &report.sparse, &report.fused};
  for (std::size_t v = 0; v < 3; ++v) {
    views[v]->overall = SnrStats::from(total.overall[v]);
    for (std::size_t b = 0; b < 3; ++b)
      views[v]->per_bucket[b] = SnrStats::from(total.bucket[v][b]);
  }
  if (total.cross.n >= 3 && total.cross.m2x > 0.0 && total.cross.m2y > 0.0) {
    report.rho = total.cross.cxy / std::sqrt(total.cross.m2x * total.cross.m2y);
    report.rho_defined = true;
  }
  return report;
}

}  // namespace dualcf
