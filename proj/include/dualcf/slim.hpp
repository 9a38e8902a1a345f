#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/kernels.hpp"
#include "dualcf/similarity.hpp"

// =============================================================================
// FILE: dualcf/slim.hpp
// BRIEF: Sparse view. Learns the item-item weight matrix by per-column
// elastic-net regression with a zero-diagonal constraint:
//
//     min_s 1/2 ||r_i - R s||^2 + l1 ||s||_1 + l2 ||s||_2^2,   s_ii = 0
//
// solved by cyclic coordinate descent with soft-thresholding. Columns are
// independent pure functions of (R, cfg), so they may be fit in parallel
// with deterministic output.
//
// A Gram matrix G = R^T R is precomputed when it fits the configured memory
// budget; otherwise each coordinate update recomputes column products against
// a maintained residual.
// =============================================================================

namespace dualcf {

struct SlimConfig {
  double l1 = 1e-3;
  double l2 = 1e-3;
  std::size_t max_iters = 100;
  double tol = 1e-4;       // convergence: max |delta s| below tol
  bool nonnegative = false;
  std::size_t topk_cap = 100;  // post-hoc per-column sparsification
  std::size_t gram_budget_mb = 2048;
  unsigned threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (l1 < 0.0 || l2 < 0.0) throw ConfigError("slim: l1 and l2 must be >= 0");
    if (l1 + l2 <= 0.0)
      throw ConfigError("slim: some regularization required (l1 + l2 > 0)");
    if (tol <= 0.0) throw ConfigError("slim: tol must be > 0");
  }
};

/// Per-sweep observer for one column fit; used by tests and diagnostics on
/// small instances. Receives (sweep index, objective value).
using SlimSweepTrace = std::function<void(std::size_t, double)>;

namespace detail {

// Dense item columns of R as contiguous item-major arrays, plus per-item
// squared norms. Only used at fit time.
struct ItemColumns {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  // CSC of R: for each item, the (user, weight) list.
  std::vector<std::size_t> ptr;
  std::vector<user_t> users;
  std::vector<double> weights;
  std::vector<double> sq_norm;

  explicit ItemColumns(const InteractionMatrix& R)
      : n_users(R.n_users()), n_items(R.n_items()) {
    ptr.assign(n_items + 1, 0);
    for (user_t u = 0; u < n_users; ++u)
      for (item_t i : R.row_items(u)) ++ptr[i + 1];
    for (std::size_t i = 0; i < n_items; ++i) ptr[i + 1] += ptr[i];
    users.resize(R.nnz());
    weights.resize(R.nnz());
    std::vector<std::size_t> cursor(ptr.begin(), ptr.end() - 1);
    for (user_t u = 0; u < n_users; ++u) {
      auto items = R.row_items(u);
      auto w = R.row_weights(u);
      for (std::size_t k = 0; k < items.size(); ++k) {
        item_t i = items[k];
        users[cursor[i]] = u;
        weights[cursor[i]] = w[k];
        ++cursor[i];
      }
    }
    sq_norm.assign(n_items, 0.0);
    for (std::size_t i = 0; i < n_items; ++i)
      for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k)
        sq_norm[i] += weights[k] * weights[k];
  }

};

// G = R^T R, row-major dense.
struct GramMatrix {
  std::size_t n = 0;
  std::vector<double> g;

  explicit GramMatrix(const InteractionMatrix& R) : n(R.n_items()) {
    g.assign(n * n, 0.0);
    for (user_t u = 0; u < R.n_users(); ++u) {
      auto items = R.row_items(u);
      auto w = R.row_weights(u);
      for (std::size_t a = 0; a < items.size(); ++a) {
        double* row = g.data() + std::size_t(items[a]) * n;
        const double wa = w[a];
        for (std::size_t b = 0; b < items.size(); ++b)
          row[items[b]] += wa * w[b];
      }
    }
  }

  const double* row(item_t j) const { return g.data() + std::size_t(j) * n; }
};

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace detail

/// Elastic-net objective for one target column: 1/2 ||r_i - R s||^2 +
/// l1 ||s||_1 + l2 ||s||_2^2. `s` is dense over items; s[i] must be 0.
inline double slim_objective(const InteractionMatrix& R, item_t target,
                             const std::vector<double>& s,
                             const SlimConfig& cfg) {
  // Residual per user: r_ui - sum_j w_uj s_j.
  double fit = 0.0;
  for (user_t u = 0; u < R.n_users(); ++u) {
    auto items = R.row_items(u);
    auto w = R.row_weights(u);
    double pred = 0.0;
    double target_val = 0.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      pred += w[k] * s[items[k]];
      if (items[k] == target) target_val = w[k];
    }
    double r = target_val - pred;
    fit += r * r;
  }
  double l1_term = 0.0, l2_term = 0.0;
  for (double v : s) {
    l1_term += std::abs(v);
    l2_term += v * v;
  }
  return 0.5 * fit + cfg.l1 * l1_term + cfg.l2 * l2_term;
}

/// Fits one column of the similarity matrix by cyclic coordinate descent.
/// Returns a dense coefficient vector over items with s[target] == 0.
/// `gram` may be null; `cols` is always required.
inline std::vector<double> fit_slim_column(
    const detail::ItemColumns& cols, const detail::GramMatrix* gram,
    const InteractionMatrix& R, item_t target, const SlimConfig& cfg,
    const SlimSweepTrace& trace = nullptr) {
  const std::size_t n = cols.n_items;
  std::vector<double> s(n, 0.0);
  // q[j] = (G s)_j maintained incrementally; with no Gram matrix we instead
  // keep per-user residuals of the prediction R s.
  std::vector<double> q;
  std::vector<double> pred;  // per-user R s (gram-free path)
  if (gram) {
    q.assign(n, 0.0);
  } else {
    pred.assign(cols.n_users, 0.0);
  }
  // g_ti = <r_t, r_i> for the target column against every candidate.
  std::vector<double> target_dot;
  if (!gram) {
    target_dot.assign(n, 0.0);
    for (std::size_t k = cols.ptr[target]; k < cols.ptr[target + 1]; ++k) {
      user_t u = cols.users[k];
      double wt = cols.weights[k];
      // accumulate w_t(u) * w_j(u) for every item j in user u's row
      auto items = R.row_items(u);
      auto w = R.row_weights(u);
      for (std::size_t t = 0; t < items.size(); ++t)
        target_dot[items[t]] += wt * w[t];
    }
  }

  const double denom_add = 2.0 * cfg.l2;
  for (std::size_t sweep = 0; sweep < cfg.max_iters; ++sweep) {
    double max_delta = 0.0;
    for (item_t j = 0; j < n; ++j) {
      if (j == target) continue;
      const double a = cols.sq_norm[j];
      if (a == 0.0 && denom_add == 0.0) continue;
      double rho;
      if (gram) {
        const double gtj = gram->row(target)[j];
        // partial residual correlation: <r_t, r_j> - sum_{k != j} s_k G_jk
        rho = gtj - (q[j] - a * s[j]);
      } else {
        // <r_j, r_t - R s + r_j s_j> computed from per-user residuals
        double dot_pred = 0.0;
        for (std::size_t k = cols.ptr[j]; k < cols.ptr[j + 1]; ++k)
          dot_pred += cols.weights[k] * pred[cols.users[k]];
        rho = target_dot[j] - (dot_pred - a * s[j]);
      }
      double s_new;
      if (cfg.nonnegative) {
        s_new = std::max(0.0, rho - cfg.l1) / (a + denom_add);
      } else {
        s_new = detail::soft_threshold(rho, cfg.l1) / (a + denom_add);
      }
      if (!std::isfinite(s_new))
        throw NumericError("slim: non-finite coefficient during fit");
      const double delta = s_new - s[j];
      if (delta != 0.0) {
        if (gram) {
          const double* gj = gram->row(j);
          for (std::size_t t = 0; t < n; ++t) q[t] += delta * gj[t];
        } else {
          for (std::size_t k = cols.ptr[j]; k < cols.ptr[j + 1]; ++k)
            pred[cols.users[k]] += delta * cols.weights[k];
        }
        s[j] = s_new;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (trace) trace(sweep, slim_objective(R, target, s, cfg));
    if (max_delta < cfg.tol) break;
  }
  return s;
}

/// Learns the full similarity matrix: each column solved independently, then
/// truncated to the topk_cap largest-magnitude entries.
inline SimilarityMatrix fit_slim(const InteractionMatrix& R,
                                 const SlimConfig& cfg) {
  cfg.validate();
  if (R.empty()) throw EmptyInput("fit_slim: interaction matrix is empty");
  const std::size_t n = R.n_items();

  detail::ItemColumns cols(R);
  std::unique_ptr<detail::GramMatrix> gram;
  const std::size_t gram_bytes = n * n * sizeof(double);
  if (gram_bytes <= cfg.gram_budget_mb * std::size_t(1024 * 1024))
    gram = std::make_unique<detail::GramMatrix>(R);

  std::vector<std::vector<SimilarityEntry>> columns(n);
  std::atomic<bool> numeric_failure{false};
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    if (numeric_failure.load(std::memory_order_relaxed)) return;
    std::vector<double> s;
    try {
      s = fit_slim_column(cols, gram.get(), R, item_t(i), cfg);
    } catch (const NumericError&) {
      numeric_failure.store(true, std::memory_order_relaxed);
      return;
    }
    // keep the topk_cap largest-magnitude coefficients
    std::vector<double> mags(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) mags[j] = std::abs(s[j]);
    auto keep = row_topk(mags, cfg.topk_cap == 0 ? s.size() : cfg.topk_cap);
    auto& col = columns[i];
    for (std::size_t j : keep) {
      if (s[j] != 0.0) col.push_back({item_t(j), s[j]});
    }
  });
  if (numeric_failure.load())
    throw NumericError("slim: non-finite coefficient during fit");
  return SimilarityMatrix(n, std::move(columns));
}

/// Sparse-view scores for one user with train positives masked to -inf.
inline ScoreVector predict_sparse(const InteractionMatrix& R,
                                  const SimilarityMatrix& S, user_t u) {
  ScoreVector scores = spmm_row(R, S, u);
  mask_observed(scores, R, u);
  return scores;
}

}  // namespace dualcf
