#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dualcf/common.hpp"

// =============================================================================
// FILE: dualcf/similarity.hpp
// BRIEF: Sparse item-item weight matrix with a structurally absent diagonal.
//
// Canonical storage is by column: column i holds the coefficients s_ji of the
// items j that contribute to item i's score. A row-major view is built once at
// construction so per-user scoring can walk rows of the user's history items.
// =============================================================================

namespace dualcf {

struct SimilarityEntry {
  item_t index;  // the "other" item (row j in a column view, column i in a row view)
  double value;
};

class SimilarityMatrix {
public:
  SimilarityMatrix() = default;

  /// columns[i] lists (j, s_ji) pairs for target item i, any order.
  /// Throws IndexError for out-of-range indices and DuplicateEntry for a
  /// diagonal entry (s_ii is structurally absent).
  SimilarityMatrix(std::size_t n_items,
                   std::vector<std::vector<SimilarityEntry>> columns)
      : n_items_(n_items) {
    if (columns.size() != n_items)
      throw ShapeError("column count does not match n_items");
    col_ptr_.assign(n_items + 1, 0);
    for (std::size_t i = 0; i < n_items; ++i) {
      auto& col = columns[i];
      std::sort(col.begin(), col.end(),
                [](const SimilarityEntry& a, const SimilarityEntry& b) {
                  return a.index < b.index;
                });
      for (std::size_t k = 0; k < col.size(); ++k) {
        if (col[k].index >= n_items)
          throw IndexError("similarity row index out of range");
        if (col[k].index == i)
          throw DuplicateEntry("diagonal entry s_ii is structurally absent");
        if (k > 0 && col[k].index == col[k - 1].index)
          throw DuplicateEntry("duplicate entry in similarity column " +
                               std::to_string(i));
      }
      col_ptr_[i + 1] = col_ptr_[i] + col.size();
    }
    col_row_.resize(col_ptr_[n_items]);
    col_val_.resize(col_ptr_[n_items]);
    for (std::size_t i = 0; i < n_items; ++i) {
      std::size_t base = col_ptr_[i];
      for (std::size_t k = 0; k < columns[i].size(); ++k) {
        col_row_[base + k] = columns[i][k].index;
        col_val_[base + k] = columns[i][k].value;
      }
    }
    build_row_view();
  }

  std::size_t n_items() const { return n_items_; }
  std::size_t nnz() const { return col_row_.size(); }

  std::size_t col_size(item_t i) const { return col_ptr_[i + 1] - col_ptr_[i]; }
  std::span<const item_t> col_rows(item_t i) const {
    return {col_row_.data() + col_ptr_[i], col_size(i)};
  }
  std::span<const double> col_values(item_t i) const {
    return {col_val_.data() + col_ptr_[i], col_size(i)};
  }

  /// Row j of S: the items i whose score item j contributes to, with s_ji.
  std::size_t row_size(item_t j) const { return row_ptr_[j + 1] - row_ptr_[j]; }
  std::span<const item_t> row_cols(item_t j) const {
    return {row_col_.data() + row_ptr_[j], row_size(j)};
  }
  std::span<const double> row_values(item_t j) const {
    return {row_val_.data() + row_ptr_[j], row_size(j)};
  }

  /// s_ji, zero when absent. Binary search within column i.
  double at(item_t j, item_t i) const {
    auto rows = col_rows(i);
    auto it = std::lower_bound(rows.begin(), rows.end(), j);
    if (it == rows.end() || *it != j) return 0.0;
    return col_val_[col_ptr_[i] + static_cast<std::size_t>(it - rows.begin())];
  }

  /// Entries in canonical (row, col) order.
  std::vector<std::tuple<item_t, item_t, double>> to_triplets() const {
    std::vector<std::tuple<item_t, item_t, double>> out;
    out.reserve(nnz());
    for (item_t j = 0; j < n_items_; ++j) {
      for (std::size_t k = row_ptr_[j]; k < row_ptr_[j + 1]; ++k) {
        out.emplace_back(j, row_col_[k], row_val_[k]);
      }
    }
    return out;
  }

private:
  void build_row_view() {
    row_ptr_.assign(n_items_ + 1, 0);
    for (item_t j : col_row_) ++row_ptr_[j + 1];
    for (std::size_t j = 0; j < n_items_; ++j) row_ptr_[j + 1] += row_ptr_[j];
    row_col_.resize(col_row_.size());
    row_val_.resize(col_row_.size());
    std::vector<std::size_t> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
    // Columns are visited in ascending order, so each row view comes out
    // sorted by column index.
    for (item_t i = 0; i < n_items_; ++i) {
      for (std::size_t k = col_ptr_[i]; k < col_ptr_[i + 1]; ++k) {
        item_t j = col_row_[k];
        row_col_[cursor[j]] = i;
        row_val_[cursor[j]] = col_val_[k];
        ++cursor[j];
      }
    }
  }

  std::size_t n_items_ = 0;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<item_t> col_row_;
  std::vector<double> col_val_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<item_t> row_col_;
  std::vector<double> row_val_;
};

}  // namespace dualcf
