#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/kernels.hpp"
#include "dualcf/similarity.hpp"
#include "dualcf/slim.hpp"

// =============================================================================
// FILE: dualcf/align.hpp
// BRIEF: Bidirectional cross-view alignment.
//
// Sparse -> dense: the sparse view nominates pseudo-positives. A pair (u, i)
// is selected iff i is among user u's top-k_user unobserved items by sparse
// score OR u is among item i's top-k_item users. Selected pairs enter the
// dense trainer weighted by a confidence factor lambda.
//
// Dense -> sparse: the dense view nominates pairs the same way (one k), and
// the interaction matrix is OR-merged with them (binary weights) before the
// item-item model is refit.
//
// Scores stream row by row: per-user selection is immediate and per-item
// selection keeps bounded running heaps, so the full score matrix never
// materializes.
// =============================================================================

namespace dualcf {

struct AlignConfig {
  std::size_t k_user = 20;   // items nominated per user
  std::size_t k_item = 20;   // users nominated per item
  double lambda_conf = 0.5;  // confidence weight on sparse->dense pseudo pairs
  std::size_t k_d2s = 20;    // single k for the dense->sparse direction
  std::optional<double> target_pseudo_ratio;  // auto-pick k for this fraction

  void validate() const {
    if (lambda_conf < 0.0 || lambda_conf > 1.0)
      throw ConfigError("align: lambda_conf must lie in [0, 1]");
    if (target_pseudo_ratio &&
        (*target_pseudo_ratio <= 0.0 || *target_pseudo_ratio >= 1.0))
      throw ConfigError("align: target_pseudo_ratio must lie in (0, 1)");
  }
};

// Observed pairs are excluded from candidate selection regardless of the
// scores the RowScorer returns for them.

namespace detail {

struct Nominee {
  double score;
  user_t user;  // or item, depending on which side the list belongs to
};

/// Ranked candidate lists: for each user the best unobserved items, for each
/// item the best unobserved users, both descending by score with ties to the
/// lower index.
struct TopkLists {
  std::vector<std::vector<std::pair<item_t, double>>> per_user;
  std::vector<std::vector<std::pair<user_t, double>>> per_item;
};

inline TopkLists collect_topk_lists(const RowScorer& score,
                                    const InteractionMatrix& r,
                                    std::size_t k_user, std::size_t k_item) {
  TopkLists out;
  out.per_user.resize(r.n_users());
  out.per_item.resize(r.n_items());
  // per-item running heaps; front = worst kept
  std::vector<std::vector<Nominee>> item_heap(r.n_items());
  auto item_before = [](const Nominee& a, const Nominee& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.user < b.user;
  };
  std::vector<bool> observed(r.n_items(), false);
  for (user_t u = 0; u < r.n_users(); ++u) {
    ScoreVector scores = score(u);
    if (scores.size() != r.n_items())
      throw ShapeError("alignment scorer returned wrong-length row");
    for (item_t i : r.row_items(u)) observed[i] = true;
    if (k_user > 0) {
      auto top = row_topk(scores, k_user, observed);
      auto& dst = out.per_user[u];
      for (std::size_t idx : top) {
        if (!std::isfinite(scores[idx])) continue;
        dst.push_back({item_t(idx), scores[idx]});
      }
    }
    if (k_item > 0) {
      for (item_t i = 0; i < r.n_items(); ++i) {
        if (observed[i] || !std::isfinite(scores[i])) continue;
        auto& heap = item_heap[i];
        Nominee cand{scores[i], u};
        if (heap.size() < k_item) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), item_before);
        } else if (item_before(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), item_before);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), item_before);
        }
      }
    }
    for (item_t i : r.row_items(u)) observed[i] = false;
  }
  for (item_t i = 0; i < r.n_items(); ++i) {
    auto& heap = item_heap[i];
    std::sort_heap(heap.begin(), heap.end(), item_before);
    auto& dst = out.per_item[i];
    dst.reserve(heap.size());
    for (const auto& n : heap) dst.push_back({n.user, n.score});
  }
  return out;
}

/// Union of the first k_user entries of each user list and the first k_item
/// entries of each item list, in canonical (user, item) order.
inline std::vector<std::pair<user_t, item_t>> select_union(
    const TopkLists& lists, std::size_t k_user, std::size_t k_item) {
  std::vector<std::pair<user_t, item_t>> pairs;
  for (user_t u = 0; u < lists.per_user.size(); ++u) {
    const auto& lst = lists.per_user[u];
    for (std::size_t k = 0; k < std::min(k_user, lst.size()); ++k)
      pairs.push_back({u, lst[k].first});
  }
  for (item_t i = 0; i < lists.per_item.size(); ++i) {
    const auto& lst = lists.per_item[i];
    for (std::size_t k = 0; k < std::min(k_item, lst.size()); ++k)
      pairs.push_back({lst[k].first, i});
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

}  // namespace detail

/// Sparse-oriented alignment: nominates unobserved pairs by sparse score,
/// union of the user-side and item-side top-k selections. Entries carry
/// weight 1 here; the confidence factor is applied when merging.
inline InteractionMatrix s2d_pseudo_positives(const RowScorer& sparse_scores,
                                              const InteractionMatrix& r,
                                              const AlignConfig& cfg) {
  cfg.validate();
  auto lists =
      detail::collect_topk_lists(sparse_scores, r, cfg.k_user, cfg.k_item);
  auto pairs = detail::select_union(lists, cfg.k_user, cfg.k_item);
  std::vector<Triplet> t;
  t.reserve(pairs.size());
  for (auto [u, i] : pairs)
    t.push_back({u, i, 1.0f, Provenance::pseudo_s2d});
  return csr_from_triplets(std::move(t), r.n_users(), r.n_items());
}

/// R-hat = R + lambda * R*: observed entries keep weight 1, pseudo entries
/// get the confidence factor as weight. The two inputs must be disjoint.
inline InteractionMatrix augment_dense_input(const InteractionMatrix& r,
                                             const InteractionMatrix& pseudo,
                                             double lambda_conf) {
  if (r.n_users() != pseudo.n_users() || r.n_items() != pseudo.n_items())
    throw ShapeError("augment_dense_input: shape mismatch");
  std::vector<Triplet> t = r.to_triplets();
  for (auto entry : pseudo.to_triplets()) {
    if (r.contains(entry.user, entry.item))
      throw DisjointnessError(
          "augment_dense_input: pseudo entry duplicates observed pair (" +
          std::to_string(entry.user) + ", " + std::to_string(entry.item) + ")");
    entry.weight = float(lambda_conf);
    t.push_back(entry);
  }
  return csr_from_triplets(std::move(t), r.n_users(), r.n_items());
}

/// Dense-oriented alignment: nominates unobserved pairs by dense score and
/// OR-merges them into the interactions as binary entries.
inline InteractionMatrix d2s_augment(const RowScorer& dense_scores,
                                     const InteractionMatrix& r,
                                     std::size_t k_d2s) {
  auto lists = detail::collect_topk_lists(dense_scores, r, k_d2s, k_d2s);
  auto pairs = detail::select_union(lists, k_d2s, k_d2s);
  std::vector<Triplet> t = r.to_triplets();
  for (auto [u, i] : pairs) {
    // collect_topk_lists already excludes observed pairs; the OR-merge is
    // therefore a plain disjoint union
    t.push_back({u, i, 1.0f, Provenance::pseudo_d2s});
  }
  return csr_from_triplets(std::move(t), r.n_users(), r.n_items());
}

/// Refits the item-item model on the augmented interactions. Downstream
/// scoring must use the augmented matrix as history input.
inline SimilarityMatrix realign_sparse(const InteractionMatrix& r_prime,
                                       const SlimConfig& slim_cfg) {
  return fit_slim(r_prime, slim_cfg);
}

/// Fraction of entries in an augmented matrix that are pseudo-labeled.
inline double pseudo_fraction(const InteractionMatrix& m) {
  if (m.nnz() == 0) return 0.0;
  const std::size_t pseudo = m.count_with_tag(Provenance::pseudo_s2d) +
                             m.count_with_tag(Provenance::pseudo_d2s);
  return double(pseudo) / double(m.nnz());
}

/// Picks the smallest k from `ladder` whose resulting pseudo fraction lands
/// inside [p/2, 2p] for p = target ratio. The fraction is measured against
/// the merged matrix size nnz(R) + selected pairs.
inline std::size_t auto_k_for_ratio(const RowScorer& scores,
                                    const InteractionMatrix& r,
                                    const std::vector<std::size_t>& ladder,
                                    double target) {
  if (target <= 0.0 || target >= 1.0)
    throw ConfigError("auto_k_for_ratio: target must lie in (0, 1)");
  std::size_t k_max = 0;
  for (std::size_t k : ladder) k_max = std::max(k_max, k);
  if (k_max == 0)
    throw ConfigError("auto_k_for_ratio: ladder holds no positive k");
  auto lists = detail::collect_topk_lists(scores, r, k_max, k_max);
  for (std::size_t k : ladder) {
    if (k == 0) continue;
    const std::size_t selected = detail::select_union(lists, k, k).size();
    const double frac =
        double(selected) / double(r.nnz() + selected);
    if (frac >= target / 2.0 && frac <= 2.0 * target) return k;
  }
  throw ConfigError(
      "auto_k_for_ratio: no ladder k lands the pseudo fraction in band");
}

}  // namespace dualcf
