#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dualcf/common.hpp"

namespace dualcf {

/// Dense user/item embedding tables, row-major, 32-bit reals.
class EmbeddingTable {
public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t n_users, std::size_t n_items, std::size_t dim)
      : n_users_(n_users),
        n_items_(n_items),
        dim_(dim),
        user_(n_users * dim, 0.0f),
        item_(n_items * dim, 0.0f) {}

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t dim() const { return dim_; }

  std::span<float> user_row(user_t u) { return {user_.data() + u * dim_, dim_}; }
  std::span<const float> user_row(user_t u) const {
    return {user_.data() + u * dim_, dim_};
  }
  std::span<float> item_row(item_t i) { return {item_.data() + i * dim_, dim_}; }
  std::span<const float> item_row(item_t i) const {
    return {item_.data() + i * dim_, dim_};
  }

  std::vector<float>& user_data() { return user_; }
  const std::vector<float>& user_data() const { return user_; }
  std::vector<float>& item_data() { return item_; }
  const std::vector<float>& item_data() const { return item_; }

  bool all_finite() const {
    for (float v : user_)
      if (!std::isfinite(v)) return false;
    for (float v : item_)
      if (!std::isfinite(v)) return false;
    return true;
  }

private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> user_;
  std::vector<float> item_;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += double(a[k]) * double(b[k]);
  return acc;
}

}  // namespace dualcf
