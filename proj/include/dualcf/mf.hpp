#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/data.hpp"
#include "dualcf/embedding.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/kernels.hpp"

// =============================================================================
// FILE: dualcf/mf.hpp
// BRIEF: Dense view. Matrix factorization over implicit feedback trained by
// mini-batch SGD on a degree-normalized weighted binary cross-entropy:
//
//   loss = - sum_pos w * d_ui * log sigmoid(e_u . e_i)
//          - sum_neg     d_ui * log(1 - sigmoid(e_u . e_i))
//          + l2_reg * ||unique touched rows||^2
//
// with d_ui = 1/sqrt(D_u * D_i) + alpha. The positive weight w is the stored
// interaction weight: 1 for observed entries, the confidence factor for
// pseudo-positives. Negatives are drawn uniformly from unobserved pairs and
// resampled every epoch. Single-threaded training is the deterministic
// reference mode.
// =============================================================================

namespace dualcf {

struct MfConfig {
  std::size_t dim = 64;
  double lr = 1e-3;
  std::size_t batch_size = 1024;
  double l2_reg = 1e-4;
  std::size_t epochs = 50;
  std::size_t neg_per_pos = 1;
  double alpha = 1.0;
  std::uint64_t seed = 42;
  std::size_t patience = 10;  // early-stopping patience when a validation
                              // callback is supplied

  void validate() const {
    if (dim == 0) throw ConfigError("mf: dim must be > 0");
    if (lr <= 0.0) throw ConfigError("mf: lr must be > 0");
    if (batch_size == 0) throw ConfigError("mf: batch_size must be > 0");
    if (neg_per_pos < 1) throw ConfigError("mf: neg_per_pos must be >= 1");
    if (l2_reg < 0.0) throw ConfigError("mf: l2_reg must be >= 0");
    if (alpha < 0.0) throw ConfigError("mf: alpha must be >= 0");
  }
};

/// Zero-mean Gaussian init with scale 0.1/sqrt(dim); bit-identical for a
/// fixed seed.
inline EmbeddingTable init_embeddings(std::size_t n_users, std::size_t n_items,
                                      const MfConfig& cfg) {
  cfg.validate();
  EmbeddingTable e(n_users, n_items, cfg.dim);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x1417ull));
  const double scale = 0.1 / std::sqrt(double(cfg.dim));
  std::normal_distribution<double> dist(0.0, scale);
  for (user_t u = 0; u < n_users; ++u)
    for (float& v : e.user_row(u)) v = float(dist(rng));
  for (item_t i = 0; i < n_items; ++i)
    for (float& v : e.item_row(i)) v = float(dist(rng));
  return e;
}

/// 1/sqrt(D_u * D_i) + alpha. Observed pairs must have positive degrees.
inline double degree_weight(user_t u, item_t i, const DegreeVectors& d,
                            double alpha) {
  const auto du = d.user_degree[u];
  const auto di = d.item_degree[i];
  if (du == 0 || di == 0)
    throw DegreeError("degree_weight: zero degree for pair (" +
                      std::to_string(u) + ", " + std::to_string(i) + ")");
  return 1.0 / std::sqrt(double(du) * double(di)) + alpha;
}

/// Variant for sampled negative pairs, whose endpoints may be isolated in
/// the augmented matrix: degrees clamp to at least 1.
inline double degree_weight_clamped(user_t u, item_t i,
                                    const DegreeVectors& d, double alpha) {
  const double du = double(std::max<std::size_t>(d.user_degree[u], 1));
  const double di = double(std::max<std::size_t>(d.item_degree[i], 1));
  return 1.0 / std::sqrt(du * di) + alpha;
}

struct PositiveSample {
  user_t user;
  item_t item;
  float weight;  // 1 for observed, confidence factor for pseudo entries
};

struct TrainBatch {
  std::vector<PositiveSample> positives;
  std::vector<std::pair<user_t, item_t>> negatives;
};

/// Sparse gradient of one batch: per-row blocks in ascending id order,
/// `user_grad`/`item_grad` packed dim floats-worth of doubles per listed row.
struct GradientUpdate {
  std::vector<user_t> users;
  std::vector<double> user_grad;
  std::vector<item_t> items;
  std::vector<double> item_grad;
};

namespace detail {

inline double log_sigmoid(double x) {
  // stable: -log(1 + exp(-x)) for x >= 0, x - log(1 + exp(x)) otherwise
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// Loss and exact gradients for one batch. Degrees for positives must be
/// positive; negatives use clamped degrees. The L2 term covers each row
/// touched by the batch exactly once.
inline std::pair<double, GradientUpdate> loss_and_grads(
    const TrainBatch& batch, const EmbeddingTable& e, const DegreeVectors& d,
    const MfConfig& cfg) {
  const std::size_t dim = e.dim();
  // collect touched rows
  std::vector<user_t> users;
  std::vector<item_t> items;
  for (const auto& p : batch.positives) {
    users.push_back(p.user);
    items.push_back(p.item);
  }
  for (const auto& [u, i] : batch.negatives) {
    users.push_back(u);
    items.push_back(i);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  GradientUpdate g;
  g.users = users;
  g.items = items;
  g.user_grad.assign(users.size() * dim, 0.0);
  g.item_grad.assign(items.size() * dim, 0.0);
  auto user_slot = [&](user_t u) {
    return std::size_t(std::lower_bound(users.begin(), users.end(), u) -
                       users.begin());
  };
  auto item_slot = [&](item_t i) {
    return std::size_t(std::lower_bound(items.begin(), items.end(), i) -
                       items.begin());
  };

  double loss = 0.0;
  auto accumulate = [&](user_t u, item_t i, double coeff_pair) {
    // coeff_pair = d/dx of the pair's loss term at x = e_u . e_i
    double* gu = g.user_grad.data() + user_slot(u) * dim;
    double* gi = g.item_grad.data() + item_slot(i) * dim;
    auto eu = e.user_row(u);
    auto ei = e.item_row(i);
    for (std::size_t t = 0; t < dim; ++t) {
      gu[t] += coeff_pair * ei[t];
      gi[t] += coeff_pair * eu[t];
    }
  };

  for (const auto& p : batch.positives) {
    const double w = double(p.weight) * degree_weight(p.user, p.item, d,
                                                      cfg.alpha);
    const double x = dot(e.user_row(p.user), e.item_row(p.item));
    loss += -w * detail::log_sigmoid(x);
    // d/dx [-w log sigma(x)] = -w (1 - sigma(x))
    accumulate(p.user, p.item, -w * (1.0 - detail::sigmoid(x)));
  }
  for (const auto& [u, i] : batch.negatives) {
    const double w = degree_weight_clamped(u, i, d, cfg.alpha);
    const double x = dot(e.user_row(u), e.item_row(i));
    loss += -w * detail::log_sigmoid(-x);  // log(1 - sigma(x)) = logsig(-x)
    // d/dx [-w log(1 - sigma(x))] = w sigma(x)
    accumulate(u, i, w * detail::sigmoid(x));
  }

  for (std::size_t s = 0; s < users.size(); ++s) {
    auto eu = e.user_row(users[s]);
    double* gu = g.user_grad.data() + s * dim;
    for (std::size_t t = 0; t < dim; ++t) {
      loss += cfg.l2_reg * double(eu[t]) * double(eu[t]);
      gu[t] += 2.0 * cfg.l2_reg * double(eu[t]);
    }
  }
  for (std::size_t s = 0; s < items.size(); ++s) {
    auto ei = e.item_row(items[s]);
    double* gi = g.item_grad.data() + s * dim;
    for (std::size_t t = 0; t < dim; ++t) {
      loss += cfg.l2_reg * double(ei[t]) * double(ei[t]);
      gi[t] += 2.0 * cfg.l2_reg * double(ei[t]);
    }
  }

  if (!std::isfinite(loss))
    throw NumericError("mf: non-finite loss (divergence; reduce lr)");
  return {loss, std::move(g)};
}

inline void apply_update(EmbeddingTable& e, const GradientUpdate& g,
                         double lr) {
  const std::size_t dim = e.dim();
  for (std::size_t s = 0; s < g.users.size(); ++s) {
    auto row = e.user_row(g.users[s]);
    const double* gu = g.user_grad.data() + s * dim;
    for (std::size_t t = 0; t < dim; ++t) row[t] -= float(lr * gu[t]);
  }
  for (std::size_t s = 0; s < g.items.size(); ++s) {
    auto row = e.item_row(g.items[s]);
    const double* gi = g.item_grad.data() + s * dim;
    for (std::size_t t = 0; t < dim; ++t) row[t] -= float(lr * gi[t]);
  }
}

struct TrainLog {
  std::vector<double> epoch_loss;        // mean per-batch loss each epoch
  std::vector<double> validation_metric; // filled when a callback is given
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Optional per-epoch validation hook; larger return value is better.
using ValidationFn = std::function<double(const EmbeddingTable&)>;

/// Mini-batch SGD over the (possibly augmented) interactions. Negatives are
/// resampled uniformly from unobserved pairs each epoch. With a validation
/// callback, keeps the best-scoring snapshot and stops after `patience`
/// epochs without improvement.
inline EmbeddingTable train_mf(const InteractionMatrix& rhat,
                               const MfConfig& cfg, const DegreeVectors& d,
                               TrainLog* log = nullptr,
                               const ValidationFn& validation = nullptr) {
  cfg.validate();
  if (rhat.empty()) throw EmptyInput("train_mf: interaction matrix is empty");
  EmbeddingTable e = init_embeddings(rhat.n_users(), rhat.n_items(), cfg);

  std::vector<PositiveSample> all_pos;
  all_pos.reserve(rhat.nnz());
  for (user_t u = 0; u < rhat.n_users(); ++u) {
    auto items = rhat.row_items(u);
    auto w = rhat.row_weights(u);
    for (std::size_t k = 0; k < items.size(); ++k)
      all_pos.push_back({u, items[k], w[k]});
  }

  EmbeddingTable best = e;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xe90c0000ull + epoch));
    std::shuffle(all_pos.begin(), all_pos.end(), rng);
    std::uniform_int_distribution<item_t> item_pick(
        0, item_t(rhat.n_items() - 1));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    TrainBatch batch;
    for (std::size_t start = 0; start < all_pos.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(all_pos.size(), start + cfg.batch_size);
      batch.positives.assign(all_pos.begin() + start, all_pos.begin() + stop);
      batch.negatives.clear();
      for (const auto& p : batch.positives) {
        for (std::size_t n = 0; n < cfg.neg_per_pos; ++n) {
          item_t j = 0;
          bool found = false;
          for (int attempt = 0; attempt < 64; ++attempt) {
            j = item_pick(rng);
            if (!rhat.contains(p.user, j)) {
              found = true;
              break;
            }
          }
          if (found) batch.negatives.push_back({p.user, j});
          // a user observed on (nearly) every item yields no negative
        }
      }
      auto [loss, grads] = loss_and_grads(batch, e, d, cfg);
      apply_update(e, grads, cfg.lr);
      loss_sum += loss;
      ++batches;
    }
    if (!e.all_finite())
      throw NumericError("mf: non-finite parameters after epoch " +
                         std::to_string(epoch));
    if (log) log->epoch_loss.push_back(loss_sum / double(batches));

    if (validation) {
      const double metric = validation(e);
      if (log) log->validation_metric.push_back(metric);
      if (metric > best_metric) {
        best_metric = metric;
        best = e;
        since_best = 0;
        if (log) log->best_epoch = epoch;
      } else if (++since_best >= cfg.patience) {
        if (log) log->stopped_early = true;
        return best;
      }
    }
  }
  return validation ? best : e;
}

/// Raw dot-product scores for one user; monotone for ranking, so no sigmoid.
inline ScoreVector predict_dense(const EmbeddingTable& e, user_t u) {
  ScoreVector scores(e.n_items(), 0.0);
  auto eu = e.user_row(u);
  for (item_t i = 0; i < e.n_items(); ++i) scores[i] = dot(eu, e.item_row(i));
  return scores;
}

}  // namespace dualcf
