#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/data.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/kernels.hpp"

// =============================================================================
// FILE: dualcf/metrics.hpp
// BRIEF: Prediction fusion and ranking evaluation. Final scores are the
// weighted vote y_dense + beta * y_sparse over raw view outputs; metrics are
// Recall@K and NDCG@K under all-items ranking, reported overall and per
// popularity bucket, where each bucket's denominator counts only that user's
// test items inside the bucket.
// =============================================================================

namespace dualcf {

struct FusionConfig {
  double beta = 0.0;
  std::vector<double> beta_candidates = {1.0,   3.0,   5.0,    10.0,
                                         15.0,  20.0,  50.0,   100.0,
                                         200.0, 1e3,   1e4};

  void validate() const {
    if (beta < 0.0) throw ConfigError("fusion: beta must be >= 0");
    for (double b : beta_candidates)
      if (b < 0.0 || !std::isfinite(b))
        throw ConfigError("fusion: beta candidates must be finite and >= 0");
  }
};

/// Elementwise weighted vote over raw view scores.
inline ScoreVector fuse(const ScoreVector& y_dense, const ScoreVector& y_sparse,
                        double beta) {
  if (y_dense.size() != y_sparse.size())
    throw ShapeError("fuse: score vectors differ in length");
  ScoreVector out(y_dense.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = y_dense[i] + beta * y_sparse[i];
  return out;
}

/// Fraction of this user's test items recovered in the top k. `ranked` is
/// best-first and must already exclude train positives; `test_items` is the
/// user's sorted test row.
inline double recall_at_k(const std::vector<std::size_t>& ranked,
                          std::span<const item_t> test_items, std::size_t k) {
  if (test_items.empty()) return 0.0;
  std::size_t hits = 0;
  const std::size_t upto = std::min(k, ranked.size());
  for (std::size_t p = 0; p < upto; ++p)
    if (std::binary_search(test_items.begin(), test_items.end(),
                           item_t(ranked[p])))
      ++hits;
  return double(hits) / double(test_items.size());
}

/// Binary-gain NDCG: DCG sums 1/log2(p+1) over hit positions p <= k
/// (1-based); the ideal places all test items first.
inline double ndcg_at_k(const std::vector<std::size_t>& ranked,
                        std::span<const item_t> test_items, std::size_t k) {
  if (test_items.empty()) return 0.0;
  double dcg = 0.0;
  const std::size_t upto = std::min(k, ranked.size());
  for (std::size_t p = 0; p < upto; ++p)
    if (std::binary_search(test_items.begin(), test_items.end(),
                           item_t(ranked[p])))
      dcg += 1.0 / std::log2(double(p + 2));
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, test_items.size()); ++p)
    idcg += 1.0 / std::log2(double(p + 2));
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

struct BucketMetrics {
  std::map<std::size_t, double> recall;  // cutoff -> mean over counted users
  std::map<std::size_t, double> ndcg;
  std::size_t users_counted = 0;  // users with >= 1 test item in the bucket
};

struct MetricsReport {
  std::map<std::size_t, double> recall_at_k;
  std::map<std::size_t, double> ndcg_at_k;
  std::array<BucketMetrics, 3> per_bucket;  // indexed by Bucket value
  std::size_t users_evaluated = 0;
  double runtime_seconds = 0.0;
  std::string config_snapshot;
};

/// All-items ranking evaluation. The scorer must return scores with the
/// user's train positives already masked; users without test items are
/// skipped. Per-user work may run in parallel; the reduction order is fixed,
/// so results do not depend on the thread count.
inline MetricsReport evaluate(const InteractionMatrix& eval_split,
                              const RowScorer& scorer,
                              const PopularityBuckets& buckets,
                              const std::vector<std::size_t>& cutoffs,
                              unsigned threads = 0) {
  if (cutoffs.empty()) throw ConfigError("evaluate: cutoff list is empty");
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t max_k = 0;
  for (std::size_t k : cutoffs) {
    if (k == 0) throw ConfigError("evaluate: cutoff 0 is meaningless");
    max_k = std::max(max_k, k);
  }
  const std::size_t n_users = eval_split.n_users();

  // per-user metric slots; reduced sequentially afterwards
  struct UserRow {
    bool counted = false;
    std::vector<double> recall, ndcg;              // per cutoff
    std::array<bool, 3> bucket_counted{};
    std::array<std::vector<double>, 3> bucket_recall, bucket_ndcg;
  };
  std::vector<UserRow> rows(n_users);
  std::atomic<bool> bad_shape{false};

  parallel_for(n_users, threads, [&](std::size_t uu) {
    const user_t u = user_t(uu);
    auto test_items = eval_split.row_items(u);
    if (test_items.empty()) return;
    UserRow& row = rows[uu];
    row.counted = true;
    ScoreVector scores = scorer(u);
    if (scores.size() != eval_split.n_items()) {
      bad_shape.store(true, std::memory_order_relaxed);
      return;
    }
    auto ranked = row_topk(scores, max_k);
    row.recall.reserve(cutoffs.size());
    row.ndcg.reserve(cutoffs.size());
    for (std::size_t k : cutoffs) {
      row.recall.push_back(recall_at_k(ranked, test_items, k));
      row.ndcg.push_back(ndcg_at_k(ranked, test_items, k));
    }
    // split the user's test row by bucket, preserving sort order
    std::array<std::vector<item_t>, 3> by_bucket;
    for (item_t i : test_items)
      by_bucket[std::size_t(buckets.assignment[i])].push_back(i);
    for (std::size_t b = 0; b < 3; ++b) {
      if (by_bucket[b].empty()) continue;
      row.bucket_counted[b] = true;
      for (std::size_t k : cutoffs) {
        row.bucket_recall[b].push_back(recall_at_k(ranked, by_bucket[b], k));
        row.bucket_ndcg[b].push_back(ndcg_at_k(ranked, by_bucket[b], k));
      }
    }
  });
  if (bad_shape.load())
    throw ShapeError("evaluate: scorer returned wrong-length row");

  MetricsReport report;
  std::vector<double> recall_sum(cutoffs.size(), 0.0);
  std::vector<double> ndcg_sum(cutoffs.size(), 0.0);
  std::array<std::vector<double>, 3> b_recall_sum, b_ndcg_sum;
  std::array<std::size_t, 3> b_users{};
  for (auto& v : b_recall_sum) v.assign(cutoffs.size(), 0.0);
  for (auto& v : b_ndcg_sum) v.assign(cutoffs.size(), 0.0);
  for (const auto& row : rows) {
    if (!row.counted) continue;
    ++report.users_evaluated;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      recall_sum[c] += row.recall[c];
      ndcg_sum[c] += row.ndcg[c];
    }
    for (std::size_t b = 0; b < 3; ++b) {
      if (!row.bucket_counted[b]) continue;
      ++b_users[b];
      for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        b_recall_sum[b][c] += row.bucket_recall[b][c];
        b_ndcg_sum[b][c] += row.bucket_ndcg[b][c];
      }
    }
  }
  const double denom = std::max<std::size_t>(report.users_evaluated, 1);
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    report.recall_at_k[cutoffs[c]] = recall_sum[c] / denom;
    report.ndcg_at_k[cutoffs[c]] = ndcg_sum[c] / denom;
  }
  for (std::size_t b = 0; b < 3; ++b) {
    report.per_bucket[b].users_counted = b_users[b];
    const double bd = std::max<std::size_t>(b_users[b], 1);
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      report.per_bucket[b].recall[cutoffs[c]] = b_recall_sum[b][c] / bd;
      report.per_bucket[b].ndcg[cutoffs[c]] = b_ndcg_sum[b][c] / bd;
    }
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

struct BetaSearchResult {
  double beta = 0.0;
  MetricsReport tuning_report;  // at beta*, on the tuning split
  MetricsReport test_report;    // at beta*, on the test split
  bool tuned_on_test = false;   // no validation split was available
  std::vector<std::pair<double, double>> curve;  // (beta, tuning recall@k)
};

/// Sweeps the fusion weight over the candidate set, maximizing Recall@k on
/// the validation split when one exists (otherwise on test, flagged
/// loudly via `tuned_on_test`). Ties pick the smallest beta. Scorers give
/// RAW view scores; masking of train positives happens here.
inline BetaSearchResult beta_search(const Dataset& ds,
                                    const RowScorer& dense_raw,
                                    const RowScorer& sparse_raw,
                                    const FusionConfig& cfg, std::size_t k,
                                    const PopularityBuckets& buckets,
                                    unsigned threads = 0) {
  cfg.validate();
  if (cfg.beta_candidates.empty())
    throw ConfigError("beta search: candidate set is empty");
  std::vector<double> betas = cfg.beta_candidates;
  std::sort(betas.begin(), betas.end());

  const InteractionMatrix& tuning =
      ds.validation ? *ds.validation : ds.test;
  BetaSearchResult result;
  result.tuned_on_test = !ds.validation.has_value();

  auto masked_fused = [&](double beta) -> RowScorer {
    return [&, beta](user_t u) {
      ScoreVector y = fuse(dense_raw(u), sparse_raw(u), beta);
      mask_observed(y, ds.train, u);
      return y;
    };
  };

  double best_recall = -1.0;
  MetricsReport best_report;
  for (double beta : betas) {
    auto rep = evaluate(tuning, masked_fused(beta), buckets, {k}, threads);
    const double r = rep.recall_at_k.at(k);
    result.curve.push_back({beta, r});
    if (r > best_recall) {
      best_recall = r;
      result.beta = beta;
      best_report = std::move(rep);
    }
  }
  result.tuning_report = std::move(best_report);
  std::vector<std::size_t> test_cutoffs{k};
  if (k != 20) test_cutoffs.push_back(20);
  result.test_report = evaluate(ds.test, masked_fused(result.beta), buckets,
                                test_cutoffs, threads);
  return result;
}

}  // namespace dualcf
