#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/interaction.hpp"

// =============================================================================
// FILE: dualcf/data.hpp
// BRIEF: Dataset ingest (pre-split train/test files), degree vectors, and
// popularity buckets.
//
// Two text formats are supported:
//   adjacency: one line per user, "user item item item ..."
//   triplet:   one line per interaction, "user item [rating]"
// External ids are remapped to dense 0-based indices in first-appearance
// order (train file first, then test). The tool never reshuffles a split.
// =============================================================================

namespace dualcf {

enum class FileFormat { adjacency, triplet };

inline FileFormat file_format_from_name(const std::string& s) {
  if (s == "adjacency") return FileFormat::adjacency;
  if (s == "triplet") return FileFormat::triplet;
  throw ConfigError("unknown dataset format: " + s +
                    " (expected adjacency or triplet)");
}

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t train_interactions = 0;
  std::size_t test_interactions = 0;
  std::size_t validation_interactions = 0;
  std::size_t cold_test_dropped = 0;
  double sparsity = 0.0;  // fraction of the U x I grid with no train entry
};

struct Dataset {
  InteractionMatrix train;
  InteractionMatrix test;
  std::optional<InteractionMatrix> validation;
  // dense index -> external id
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  DatasetStats stats;

  std::size_t n_users() const { return train.n_users(); }
  std::size_t n_items() const { return train.n_items(); }
};

struct DegreeVectors {
  std::vector<std::size_t> user_degree;
  std::vector<std::size_t> item_degree;
};

enum class Bucket : std::uint8_t { Unpopular = 0, Normal = 1, Popular = 2 };

inline const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::Unpopular: return "unpopular";
    case Bucket::Normal: return "normal";
    case Bucket::Popular: return "popular";
  }
  return "unknown";
}

/// Item -> popularity bucket, cut at the 0.80 and 0.95 quantiles of train
/// interaction count: the lowest-degree 80% of items are Unpopular, the top
/// 5% Popular, the rest Normal.
struct PopularityBuckets {
  std::vector<Bucket> assignment;
  std::size_t count(Bucket b) const {
    std::size_t c = 0;
    for (auto a : assignment)
      if (a == b) ++c;
    return c;
  }
};

// --------------------------------------------------------------------------
// Degree vectors
// --------------------------------------------------------------------------

/// Nonzero counts per row/column. Pseudo entries count with multiplicity 1
/// regardless of weight.
inline DegreeVectors degrees(const InteractionMatrix& R) {
  DegreeVectors d;
  d.user_degree.assign(R.n_users(), 0);
  d.item_degree.assign(R.n_items(), 0);
  for (user_t u = 0; u < R.n_users(); ++u) {
    auto items = R.row_items(u);
    d.user_degree[u] = items.size();
    for (item_t i : items) ++d.item_degree[i];
  }
  return d;
}

// --------------------------------------------------------------------------
// Popularity buckets
// --------------------------------------------------------------------------

inline PopularityBuckets popularity_buckets(const InteractionMatrix& train) {
  if (train.empty()) throw EmptyInput("popularity buckets need >=1 interaction");
  const std::size_t n = train.n_items();
  DegreeVectors d = degrees(train);
  std::vector<item_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Ascending degree; quantile ties resolve by lower item index into the
  // lower bucket.
  std::sort(order.begin(), order.end(), [&](item_t a, item_t b) {
    if (d.item_degree[a] != d.item_degree[b])
      return d.item_degree[a] < d.item_degree[b];
    return a < b;
  });
  const auto cut80 = static_cast<std::size_t>(0.80 * static_cast<double>(n));
  const auto cut95 = static_cast<std::size_t>(0.95 * static_cast<double>(n));
  PopularityBuckets out;
  out.assignment.assign(n, Bucket::Unpopular);
  for (std::size_t rank = 0; rank < n; ++rank) {
    Bucket b = rank < cut80   ? Bucket::Unpopular
               : rank < cut95 ? Bucket::Normal
                              : Bucket::Popular;
    out.assignment[order[rank]] = b;
  }
  return out;
}

// --------------------------------------------------------------------------
// Loading
// --------------------------------------------------------------------------

namespace detail {

struct RawPair {
  std::string user;
  std::string item;
};

inline std::vector<RawPair> read_pairs(const std::string& path,
                                       FileFormat format,
                                       double rating_threshold) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<RawPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string user;
    if (!(ls >> user)) continue;  // blank line
    if (format == FileFormat::adjacency) {
      std::string item;
      while (ls >> item) pairs.push_back({user, item});
    } else {
      std::string item;
      if (!(ls >> item))
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": triplet line needs at least user and item");
      std::string rating_tok, extra;
      bool has_rating = static_cast<bool>(ls >> rating_tok);
      if (ls >> extra)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": unexpected trailing token '" + extra + "'");
      if (has_rating) {
        std::size_t used = 0;
        double rating = 0.0;
        try {
          rating = std::stod(rating_tok, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != rating_tok.size())
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": rating '" + rating_tok + "' is not numeric");
        if (rating < rating_threshold) continue;
      }
      pairs.push_back({user, item});
    }
  }
  return pairs;
}

}  // namespace detail

/// Loads a pre-split dataset. Ids are remapped densely; test pairs whose user
/// has no train interaction are dropped (cold users are excluded from
/// metrics). A (u, i) pair present in both splits raises SplitError, as does
/// an empty split. `rating_threshold` binarizes triplet ratings (default:
/// keep all as implicit feedback).
inline Dataset load_dataset(const std::string& train_path,
                            const std::string& test_path, FileFormat format,
                            const std::optional<std::string>& validation_path =
                                std::nullopt,
                            double rating_threshold =
                                -std::numeric_limits<double>::infinity()) {
  auto train_pairs = detail::read_pairs(train_path, format, rating_threshold);
  auto test_pairs = detail::read_pairs(test_path, format, rating_threshold);
  std::vector<detail::RawPair> val_pairs;
  if (validation_path)
    val_pairs = detail::read_pairs(*validation_path, format, rating_threshold);
  if (train_pairs.empty()) throw SplitError("train split is empty: " + train_path);
  if (test_pairs.empty()) throw SplitError("test split is empty: " + test_path);

  Dataset ds;
  std::unordered_map<std::string, user_t> user_map;
  std::unordered_map<std::string, item_t> item_map;
  auto map_user = [&](const std::string& id) {
    auto [it, inserted] = user_map.emplace(id, user_t(ds.user_ids.size()));
    if (inserted) ds.user_ids.push_back(id);
    return it->second;
  };
  auto map_item = [&](const std::string& id) {
    auto [it, inserted] = item_map.emplace(id, item_t(ds.item_ids.size()));
    if (inserted) ds.item_ids.push_back(id);
    return it->second;
  };

  std::vector<Triplet> train_t, test_t, val_t;
  train_t.reserve(train_pairs.size());
  for (const auto& p : train_pairs)
    train_t.push_back({map_user(p.user), map_item(p.item), 1.0f});
  for (const auto& p : test_pairs)
    test_t.push_back({map_user(p.user), map_item(p.item), 1.0f});
  for (const auto& p : val_pairs)
    val_t.push_back({map_user(p.user), map_item(p.item), 1.0f});

  const std::size_t n_users = ds.user_ids.size();
  const std::size_t n_items = ds.item_ids.size();
  ds.train = csr_from_triplets(std::move(train_t), n_users, n_items);

  // Drop test/validation entries for users with no train history.
  auto prune_cold = [&](std::vector<Triplet>& v) {
    std::size_t dropped = 0;
    std::erase_if(v, [&](const Triplet& t) {
      bool cold = ds.train.row_size(t.user) == 0;
      dropped += cold ? 1 : 0;
      return cold;
    });
    return dropped;
  };
  ds.stats.cold_test_dropped = prune_cold(test_t);
  prune_cold(val_t);
  if (test_t.empty())
    throw SplitError("test split has no users with train history");
  ds.test = csr_from_triplets(std::move(test_t), n_users, n_items);
  if (!val_pairs.empty())
    ds.validation = csr_from_triplets(std::move(val_t), n_users, n_items);

  // No pair may appear in both train and test (or validation).
  auto check_disjoint = [&](const InteractionMatrix& other, const char* name) {
    for (user_t u = 0; u < other.n_users(); ++u) {
      for (item_t i : other.row_items(u)) {
        if (ds.train.contains(u, i))
          throw SplitError(std::string("pair present in both train and ") +
                           name + ": user " + ds.user_ids[u] + " item " +
                           ds.item_ids[i]);
      }
    }
  };
  check_disjoint(ds.test, "test");
  if (ds.validation) check_disjoint(*ds.validation, "validation");

  ds.stats.n_users = n_users;
  ds.stats.n_items = n_items;
  ds.stats.train_interactions = ds.train.nnz();
  ds.stats.test_interactions = ds.test.nnz();
  ds.stats.validation_interactions = ds.validation ? ds.validation->nnz() : 0;
  ds.stats.sparsity =
      1.0 - static_cast<double>(ds.train.nnz()) /
                (static_cast<double>(n_users) * static_cast<double>(n_items));
  return ds;
}

}  // namespace dualcf
