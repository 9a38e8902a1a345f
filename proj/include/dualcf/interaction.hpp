#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dualcf/common.hpp"

// =============================================================================
// FILE: dualcf/interaction.hpp
// BRIEF: Binary user-item interaction matrix in compressed sparse row form.
//
// INVARIANTS:
// - item indices within a row are strictly increasing (no duplicates)
// - weights lie in [0, 1]; observed entries carry weight exactly 1.0
//   (weight 0 is admitted only for pseudo entries at the confidence-factor
//   lower boundary)
// - every entry carries a provenance tag so augmentation steps can be
//   inspected or ablated without rebuilding
// =============================================================================

namespace dualcf {

enum class Provenance : std::uint8_t {
  observed = 0,
  pseudo_s2d = 1,
  pseudo_d2s = 2,
};

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::observed: return "observed";
    case Provenance::pseudo_s2d: return "pseudo_s2d";
    case Provenance::pseudo_d2s: return "pseudo_d2s";
  }
  return "unknown";
}

inline Provenance provenance_from_name(const std::string& s) {
  if (s == "observed") return Provenance::observed;
  if (s == "pseudo_s2d") return Provenance::pseudo_s2d;
  if (s == "pseudo_d2s") return Provenance::pseudo_d2s;
  throw ParseError("unknown provenance tag: " + s);
}

struct Triplet {
  user_t user;
  item_t item;
  float weight;
  Provenance tag = Provenance::observed;
};

class InteractionMatrix {
public:
  InteractionMatrix() = default;

  InteractionMatrix(std::size_t n_users, std::size_t n_items,
                    std::vector<std::size_t> row_ptr, std::vector<item_t> items,
                    std::vector<float> weights, std::vector<Provenance> tags)
      : n_users_(n_users),
        n_items_(n_items),
        row_ptr_(std::move(row_ptr)),
        items_(std::move(items)),
        weights_(std::move(weights)),
        tags_(std::move(tags)) {}

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t nnz() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  std::span<const item_t> row_items(user_t u) const {
    return {items_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::span<const float> row_weights(user_t u) const {
    return {weights_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::span<const Provenance> row_tags(user_t u) const {
    return {tags_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::size_t row_size(user_t u) const { return row_ptr_[u + 1] - row_ptr_[u]; }

  /// True iff (u, i) is stored (any provenance). Binary search within the row.
  bool contains(user_t u, item_t i) const {
    auto r = row_items(u);
    return std::binary_search(r.begin(), r.end(), i);
  }

  std::size_t count_with_tag(Provenance tag) const {
    std::size_t c = 0;
    for (auto t : tags_)
      if (t == tag) ++c;
    return c;
  }

  /// Entries in canonical order (by user, then item).
  std::vector<Triplet> to_triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (user_t u = 0; u < n_users_; ++u) {
      for (std::size_t k = row_ptr_[u]; k < row_ptr_[u + 1]; ++k) {
        out.push_back({u, items_[k], weights_[k], tags_[k]});
      }
    }
    return out;
  }

private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<item_t> items_;
  std::vector<float> weights_;
  std::vector<Provenance> tags_;
};

/// Builds a canonical CSR matrix from unordered triplets.
/// Throws IndexError for out-of-range indices, DuplicateEntry for repeated
/// (user, item) pairs, NumericError for weights outside [0, 1] (observed
/// entries must weigh exactly 1.0).
inline InteractionMatrix csr_from_triplets(std::vector<Triplet> triplets,
                                           std::size_t n_users,
                                           std::size_t n_items) {
  for (const auto& t : triplets) {
    if (t.user >= n_users)
      throw IndexError("user index " + std::to_string(t.user) +
                       " out of range (n_users=" + std::to_string(n_users) + ")");
    if (t.item >= n_items)
      throw IndexError("item index " + std::to_string(t.item) +
                       " out of range (n_items=" + std::to_string(n_items) + ")");
    if (!std::isfinite(t.weight) || t.weight < 0.0f || t.weight > 1.0f)
      throw NumericError("entry weight must lie in [0, 1]");
    if (t.tag == Provenance::observed && t.weight != 1.0f)
      throw NumericError("observed entries must have weight exactly 1.0");
  }
  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) {
              return std::tie(a.user, a.item) < std::tie(b.user, b.item);
            });
  for (std::size_t k = 1; k < triplets.size(); ++k) {
    if (triplets[k].user == triplets[k - 1].user &&
        triplets[k].item == triplets[k - 1].item)
      throw DuplicateEntry("duplicate (user,item) pair (" +
                           std::to_string(triplets[k].user) + "," +
                           std::to_string(triplets[k].item) + ")");
  }
  std::vector<std::size_t> row_ptr(n_users + 1, 0);
  for (const auto& t : triplets) ++row_ptr[t.user + 1];
  for (std::size_t u = 0; u < n_users; ++u) row_ptr[u + 1] += row_ptr[u];

  std::vector<item_t> items(triplets.size());
  std::vector<float> weights(triplets.size());
  std::vector<Provenance> tags(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    items[k] = triplets[k].item;
    weights[k] = triplets[k].weight;
    tags[k] = triplets[k].tag;
  }
  return InteractionMatrix(n_users, n_items, std::move(row_ptr),
                           std::move(items), std::move(weights),
                           std::move(tags));
}

}  // namespace dualcf
