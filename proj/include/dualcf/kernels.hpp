#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/similarity.hpp"

// =============================================================================
// FILE: dualcf/kernels.hpp
// BRIEF: The shared linear-algebra kernels: per-user neighborhood scoring
// (sparse row x similarity matrix) and deterministic per-row top-k selection.
//
// Scores are materialized one user at a time, never as a full dense matrix.
// =============================================================================

namespace dualcf {

/// One user's scores over the full catalog.
using ScoreVector = std::vector<double>;

/// Produces one user's scores over all items. Closures handed to evaluation
/// or alignment must be safe to call from several threads at once.
using RowScorer = std::function<ScoreVector(user_t)>;

/// scores[i] = sum_j w_uj * s_ji over the user's history items j.
inline ScoreVector spmm_row(const InteractionMatrix& R,
                            const SimilarityMatrix& S, user_t u) {
  if (R.n_items() != S.n_items())
    throw ShapeError("interaction and similarity item counts differ");
  ScoreVector scores(R.n_items(), 0.0);
  auto items = R.row_items(u);
  auto weights = R.row_weights(u);
  for (std::size_t k = 0; k < items.size(); ++k) {
    const item_t j = items[k];
    const double w = weights[k];
    auto cols = S.row_cols(j);
    auto vals = S.row_values(j);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      scores[cols[t]] += w * vals[t];
    }
  }
  return scores;
}

inline std::vector<ScoreVector> spmm_rows(const InteractionMatrix& R,
                                          const SimilarityMatrix& S,
                                          std::span<const user_t> users) {
  std::vector<ScoreVector> out;
  out.reserve(users.size());
  for (user_t u : users) out.push_back(spmm_row(R, S, u));
  return out;
}

/// Indices of the k largest values not in `exclude`, descending by value;
/// ties broken by lower index. k past the candidate count returns all
/// candidates.
inline std::vector<std::size_t> row_topk(std::span<const double> values,
                                         std::size_t k,
                                         const std::vector<bool>& exclude = {}) {
  std::vector<std::size_t> out;
  if (k == 0) return out;
  // "comes before" ordering: value desc, index asc. Heaped with this
  // comparator the front holds the worst kept candidate.
  auto before = [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  out.reserve(k);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!exclude.empty() && exclude[i]) continue;
    if (out.size() < k) {
      out.push_back(i);
      std::push_heap(out.begin(), out.end(), before);
    } else if (before(i, out.front())) {
      std::pop_heap(out.begin(), out.end(), before);
      out.back() = i;
      std::push_heap(out.begin(), out.end(), before);
    }
  }
  std::sort_heap(out.begin(), out.end(), before);
  return out;
}

/// Sets the user's observed items to -inf so ranking skips train positives.
inline void mask_observed(ScoreVector& scores, const InteractionMatrix& R,
                          user_t u) {
  for (item_t i : R.row_items(u))
    scores[i] = -std::numeric_limits<double>::infinity();
}

}  // namespace dualcf
