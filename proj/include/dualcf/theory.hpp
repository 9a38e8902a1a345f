#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/snr.hpp"

// =============================================================================
// FILE: dualcf/theory.hpp
// BRIEF: Closed-form evaluators and Monte-Carlo simulators for the
// signal-to-noise analysis behind the dual-view design: the convex-blend SNR
// formula and its envelope, the correlation threshold that decides when
// fusion can beat the stronger view, the sqrt(N) ceiling of embedding models
// on rarely seen items (with and without degree normalization), the per-view
// gain model for cross-view augmentation, and the 1/K variance decay of
// neighborhood aggregation. Simulators use Gaussian noise as the reference
// instantiation of the assumed mean/covariance structure and are
// deterministic for a given seed.
// =============================================================================

namespace dualcf {

struct ViewStats {
  double mu = 0.0;
  double sigma = 1.0;  // must stay positive

  double r() const { return mu / sigma; }
  void validate() const {
    if (!(sigma > 0.0)) throw PreconditionError("view stats: sigma must be > 0");
    if (!std::isfinite(mu) || !std::isfinite(sigma))
      throw PreconditionError("view stats: non-finite field");
  }
};

struct NoiseModel {
  double c = 1.0;                  // noise-efficiency constant, > 0
  std::size_t n_interactions = 64; // interaction count of the probed item
  std::size_t k_neighbors = 16;    // effective neighborhood size
  std::size_t eta = 0;             // pseudo-interactions added to the item
  std::size_t kappa = 0;           // extra neighbors added to the item
  double eps = 0.0;                // label noise rate, < 1/2

  void validate() const {
    if (!(c > 0.0)) throw ConfigError("noise model: c must be > 0");
    if (eps < 0.0 || eps >= 0.5)
      throw ConfigError("noise model: label noise rate must be in [0, 0.5)");
    if (n_interactions == 0)
      throw ConfigError("noise model: interaction count must be >= 1");
    if (k_neighbors == 0)
      throw ConfigError("noise model: neighborhood size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Convex-blend SNR and the fusion envelope
// ---------------------------------------------------------------------------

/// SNR of the blend alpha*view1 + (1-alpha)*view2 when the two margin
/// distributions have correlation rho.
inline double snr_fusion(double alpha, const ViewStats& v1, const ViewStats& v2,
                         double rho) {
  v1.validate();
  v2.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw PreconditionError("snr_fusion: alpha must be in [0, 1]");
  if (!(rho >= -1.0 && rho <= 1.0))
    throw PreconditionError("snr_fusion: rho must be in [-1, 1]");
  const double num = alpha * v1.mu + (1.0 - alpha) * v2.mu;
  const double var = alpha * alpha * v1.sigma * v1.sigma +
                     (1.0 - alpha) * (1.0 - alpha) * v2.sigma * v2.sigma +
                     2.0 * alpha * (1.0 - alpha) * rho * v1.sigma * v2.sigma;
  if (!(var > 0.0)) throw DegenerateBlend("snr_fusion: blend variance is zero");
  return num / std::sqrt(var);
}

/// Best achievable blend SNR over all mixing weights (closed form).
inline double fusion_envelope(const ViewStats& v1, const ViewStats& v2,
                              double rho) {
  v1.validate();
  v2.validate();
  if (!(std::abs(rho) < 1.0))
    throw SingularCorrelation("fusion envelope: |rho| must be < 1");
  const double r1 = v1.r(), r2 = v2.r();
  return std::sqrt((r1 * r1 + r2 * r2 - 2.0 * rho * r1 * r2) /
                   (1.0 - rho * rho));
}

/// Highest blend SNR found on a uniform alpha grid (boundaries included).
inline double max_snr_over_alpha(const ViewStats& v1, const ViewStats& v2,
                                 double rho, std::size_t grid = 10000) {
  if (grid < 2) throw PreconditionError("alpha grid needs >= 2 points");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= grid; ++i)
    best = std::max(best, snr_fusion(double(i) / double(grid), v1, v2, rho));
  return best;
}

struct RhoThresholdReport {
  double threshold = 0.0;  // r_min / r_max
  bool verified = false;   // grid check of the if-and-only-if passed
};

/// The correlation level below which some interior blend weight matches or
/// beats the stronger view. Verified empirically on a rho grid straddling the
/// threshold (offset from it: the exact threshold is a knife edge where the
/// interior optimum touches the boundary value only in the limit).
inline RhoThresholdReport rho_threshold_check(const ViewStats& v1,
                                              const ViewStats& v2,
                                              std::size_t alpha_grid = 10000) {
  v1.validate();
  v2.validate();
  const double r1 = v1.r(), r2 = v2.r();
  if (!(r1 > 0.0) || !(r2 > 0.0))
    throw PreconditionError("rho threshold: both view ratios must be > 0");
  RhoThresholdReport rep;
  rep.threshold = std::min(r1, r2) / std::max(r1, r2);
  const double r_max = std::max(r1, r2);

  auto interior_beats_max = [&](double rho) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < alpha_grid; ++i)
      best = std::max(best, snr_fusion(double(i) / double(alpha_grid), v1, v2, rho));
    return best >= r_max - 1e-9;
  };

  rep.verified = true;
  for (int step = 1; step <= 5; ++step) {
    const double off = 0.03 * double(step);
    const double below = rep.threshold - off;
    if (below >= 0.0 && !interior_beats_max(below)) rep.verified = false;
    const double above = rep.threshold + off;
    if (above < 1.0 && interior_beats_max(above)) rep.verified = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Embedding-noise simulators
// ---------------------------------------------------------------------------

struct SimulatorConfig {
  std::size_t dim = 8;
  double user_norm = 1.0;        // cap on the probing user's embedding norm
  std::size_t n_companion = 1u << 20;  // interactions of the paired item,
                                       // held large so its noise is negligible
  std::size_t trials = 20000;
  std::uint64_t seed = 1;

  void validate() const {
    if (dim == 0) throw ConfigError("simulator: dim must be >= 1");
    if (!(user_norm > 0.0)) throw ConfigError("simulator: user norm must be > 0");
    if (n_companion == 0) throw ConfigError("simulator: companion count >= 1");
    if (trials < 10000)
      throw PreconditionError("simulator: need >= 10000 trials");
  }
};

struct CeilingReport {
  double empirical_snr = 0.0;
  double bound = 0.0;       // (gap / sqrt(c)) * sqrt(N_i)
  double slack = 0.0;       // Monte-Carlo allowance: 3 / sqrt(trials)
  bool within_bound = false;
};

/// Margins of a noisy embedding model: the item pair differs by a true-score
/// gap along one direction, each item's embedding carries isotropic Gaussian
/// noise with variance c/N, and the user embedding is aligned with the gap at
/// the norm cap, which attains the ceiling as the companion item warms up.
inline CeilingReport simulate_snr_ceiling(const NoiseModel& noise, double gap,
                                          const SimulatorConfig& cfg) {
  noise.validate();
  cfg.validate();
  if (!(gap >= 0.0)) throw PreconditionError("ceiling: gap must be >= 0");
  const double sd_i = std::sqrt(noise.c / double(noise.n_interactions));
  const double sd_j = std::sqrt(noise.c / double(cfg.n_companion));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RunningMoments margins;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    // user = B * u1, true difference = gap * u1: only the first noise
    // coordinate survives the inner product
    const double noise_i = sd_i * g(rng);
    const double noise_j = sd_j * g(rng);
    // remaining coordinates are orthogonal to the user; draw and discard to
    // keep the stream layout independent of that optimization
    for (std::size_t k = 1; k < cfg.dim; ++k) {
      (void)g(rng);
      (void)g(rng);
    }
    margins.add(cfg.user_norm * (gap + noise_i - noise_j));
  }
  CeilingReport rep;
  rep.empirical_snr = SnrStats::from(margins).degenerate
                          ? 0.0
                          : margins.mean / margins.stddev();
  rep.bound = gap / std::sqrt(noise.c) * std::sqrt(double(noise.n_interactions));
  rep.slack = 3.0 / std::sqrt(double(cfg.trials));
  rep.within_bound = rep.empirical_snr <= rep.bound * (1.0 + rep.slack);
  return rep;
}

/// OLS slope of ln(y) against ln(x).
inline double log_log_slope(
    const std::vector<std::pair<std::size_t, double>>& points) {
  if (points.size() < 2)
    throw PreconditionError("log-log fit: need >= 2 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    if (x == 0 || !(y > 0.0))
      throw PreconditionError("log-log fit: values must be positive");
    const double lx = std::log(double(x)), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = double(points.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ScalingReport {
  std::vector<std::pair<std::size_t, double>> snr_by_count;
  double exponent = 0.0;  // log-log slope of SNR against N
};

/// Repeats the ceiling simulation with degree-normalized scores
/// z = (user . item) / sqrt(d_u * d_i) across a grid of interaction counts.
/// The normalization rescales both signal and noise, so the fitted exponent
/// of SNR against N stays near 1/2.
inline ScalingReport simulate_normalized_scaling(
    const NoiseModel& noise, double d_u, double d_i, double d_j, double gap,
    const std::vector<std::size_t>& n_grid, const SimulatorConfig& cfg) {
  noise.validate();
  cfg.validate();
  if (!(d_u > 0.0) || !(d_i > 0.0) || !(d_j > 0.0))
    throw PreconditionError("normalized scaling: degrees must be > 0");
  if (n_grid.size() < 2)
    throw PreconditionError("normalized scaling: need >= 2 grid points");
  ScalingReport rep;
  for (std::size_t n_i : n_grid) {
    if (n_i == 0) throw PreconditionError("normalized scaling: N must be >= 1");
    const double sd_i = std::sqrt(noise.c / double(n_i));
    const double sd_j = std::sqrt(noise.c / double(cfg.n_companion));
    std::mt19937_64 rng(derive_seed(cfg.seed, n_i));
    std::normal_distribution<double> g(0.0, 1.0);
    RunningMoments margins;
    const double user_scale = cfg.user_norm / std::sqrt(d_u);
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const double side_i = (gap + sd_i * g(rng)) / std::sqrt(d_i);
      const double side_j = (sd_j * g(rng)) / std::sqrt(d_j);
      margins.add(user_scale * (side_i - side_j));
    }
    rep.snr_by_count.push_back({n_i, margins.mean / margins.stddev()});
  }
  rep.exponent = log_log_slope(rep.snr_by_count);
  return rep;
}

// ---------------------------------------------------------------------------
// Cross-view gain model
// ---------------------------------------------------------------------------

struct GainReport {
  ViewStats dense_primed, sparse_primed;
  double r_dense_primed = 0.0;   // (1 - 2 eps) * r_D * sqrt(1 + eta / N)
  double r_sparse_primed = 0.0;  // r_S * sqrt(1 + kappa / K)
  double max_snr_base = 0.0;     // best blend SNR before augmentation
  double max_snr_primed = 0.0;   // best blend SNR after augmentation
  bool monotone = false;         // primed optimum >= base optimum
};

/// Applies the per-view gain model at fixed correlation: pseudo-interactions
/// shrink the dense view's noise by sqrt(N/(N+eta)) while label noise scales
/// its mean by (1-2*eps); extra neighbors shrink the sparse view's noise by
/// sqrt(K/(K+kappa)). The stated lower bounds are evaluated as equalities of
/// their leading terms.
inline GainReport apply_view_gains(const NoiseModel& noise,
                                   const ViewStats& dense,
                                   const ViewStats& sparse, double rho) {
  noise.validate();
  dense.validate();
  sparse.validate();
  if (!(std::abs(rho) < 1.0))
    throw SingularCorrelation("view gains: |rho| must be < 1");
  const double n = double(noise.n_interactions);
  const double k = double(noise.k_neighbors);
  GainReport rep;
  rep.dense_primed.mu = (1.0 - 2.0 * noise.eps) * dense.mu;
  rep.dense_primed.sigma = dense.sigma * std::sqrt(n / (n + double(noise.eta)));
  rep.sparse_primed.mu = sparse.mu;
  rep.sparse_primed.sigma =
      sparse.sigma * std::sqrt(k / (k + double(noise.kappa)));
  rep.r_dense_primed = rep.dense_primed.r();
  rep.r_sparse_primed = rep.sparse_primed.r();
  rep.max_snr_base = max_snr_over_alpha(dense, sparse, rho);
  rep.max_snr_primed = max_snr_over_alpha(rep.dense_primed, rep.sparse_primed, rho);
  rep.monotone = rep.max_snr_primed >= rep.max_snr_base - 1e-12;
  return rep;
}

/// First-order condition under which the fusion envelope rises even though
/// the correlation increases: weighted per-view gains outpace the correlation
/// penalty.
inline bool tradeoff_condition(const ViewStats& v1, const ViewStats& v2,
                               double rho, double dr1, double dr2,
                               double drho) {
  v1.validate();
  v2.validate();
  if (!(std::abs(rho) < 1.0))
    throw SingularCorrelation("tradeoff: |rho| must be < 1");
  const double r1 = v1.r(), r2 = v2.r();
  const double lhs = (r1 - rho * r2) * dr1 + (r2 - rho * r1) * dr2;
  const double rhs =
      (r1 - rho * r2) * (r2 - rho * r1) / (1.0 - rho * rho) * drho;
  return lhs >= rhs;
}

struct TradeoffReport {
  std::size_t sampled = 0;
  std::size_t satisfied = 0;  // perturbations meeting the condition (with margin)
  std::size_t increased = 0;  // of those, how many raised the envelope
};

/// Samples small random perturbations with a positive correlation shift and
/// checks that every one clearing the first-order condition (with a strict
/// margin dominating second-order terms) does raise the envelope.
inline TradeoffReport verify_tradeoff(const ViewStats& v1, const ViewStats& v2,
                                      double rho, std::size_t n_samples,
                                      std::uint64_t seed,
                                      double scale = 1e-4) {
  v1.validate();
  v2.validate();
  if (!(std::abs(rho) < 1.0))
    throw SingularCorrelation("tradeoff: |rho| must be < 1");
  if (!(scale > 0.0)) throw PreconditionError("tradeoff: scale must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double g_base = fusion_envelope(v1, v2, rho);
  const double r1 = v1.r(), r2 = v2.r();
  TradeoffReport rep;
  for (std::size_t t = 0; t < n_samples; ++t) {
    const double dr1 = scale * unit(rng);
    const double dr2 = scale * unit(rng);
    const double drho = 4.0 * scale * unit(rng);
    if (rho + drho >= 1.0) continue;
    ++rep.sampled;
    const double lhs = (r1 - rho * r2) * dr1 + (r2 - rho * r1) * dr2;
    const double rhs =
        (r1 - rho * r2) * (r2 - rho * r1) / (1.0 - rho * rho) * drho;
    // strict margin: first-order surplus must dominate the O(scale^2) terms
    if (!(lhs >= rhs * 1.05 + scale * scale)) continue;
    ++rep.satisfied;
    ViewStats p1{(r1 + dr1) * v1.sigma, v1.sigma};
    ViewStats p2{(r2 + dr2) * v2.sigma, v2.sigma};
    if (fusion_envelope(p1, p2, rho + drho) > g_base) ++rep.increased;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Neighborhood-aggregation variance decay
// ---------------------------------------------------------------------------

struct VarianceDecayReport {
  std::vector<std::pair<std::size_t, double>> variance_by_k;
  double exponent = 0.0;  // log-log slope of variance against K
};

/// Equal-weight aggregation over K i.i.d. neighbor signals: the aggregate's
/// variance decays like 1/K.
inline VarianceDecayReport sparse_variance_check(
    const std::vector<std::size_t>& k_values, std::size_t trials,
    std::uint64_t seed, double signal_mean = 1.0, double signal_std = 1.0) {
  if (k_values.size() < 2)
    throw PreconditionError("variance decay: need >= 2 neighborhood sizes");
  if (trials < 100) throw PreconditionError("variance decay: need >= 100 trials");
  if (!(signal_std >= 0.0))
    throw PreconditionError("variance decay: signal std must be >= 0");
  VarianceDecayReport rep;
  for (std::size_t k : k_values) {
    if (k == 0) throw PreconditionError("variance decay: K must be >= 1");
    std::mt19937_64 rng(derive_seed(seed, k));
    std::normal_distribution<double> g(signal_mean, signal_std);
    RunningMoments agg;
    for (std::size_t t = 0; t < trials; ++t) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += g(rng);
      agg.add(sum / double(k));
    }
    rep.variance_by_k.push_back({k, agg.variance()});
  }
  if (signal_std > 0.0) rep.exponent = log_log_slope(rep.variance_by_k);
  return rep;
}

// ---------------------------------------------------------------------------
// Full battery
// ---------------------------------------------------------------------------

struct TheoryLabReport {
  bool boundary_ok = false;        // blend boundaries reproduce per-view ratios
  bool envelope_ok = false;        // closed-form envelope dominates the grid
  bool threshold_ok = false;       // correlation threshold verified both sides
  bool monotonic_rho_ok = false;   // blend SNR falls as correlation rises
  bool ceiling_ok = false;         // sqrt(N) bound never violated
  bool ceiling_scaling_ok = false; // quadrupling N roughly doubles SNR
  bool normalized_ok = false;      // normalized exponent near 1/2, d_i cancels
  bool gains_ok = false;           // per-view gains raise the blend optimum
  bool tradeoff_ok = false;        // satisfied perturbations raise the envelope
  bool variance_decay_ok = false;  // 1/K fit within band
  double normalized_exponent = 0.0;
  double variance_exponent = 0.0;

  bool all_ok() const {
    return boundary_ok && envelope_ok && threshold_ok && monotonic_rho_ok &&
           ceiling_ok && ceiling_scaling_ok && normalized_ok && gains_ok &&
           tradeoff_ok && variance_decay_ok;
  }
};

/// Fixed verification battery over the closed forms and simulators; the CLI
/// surfaces this as a report.
inline TheoryLabReport run_theory_lab(std::uint64_t seed = 42) {
  TheoryLabReport rep;
  std::mt19937_64 rng(derive_seed(seed, 0x7eabull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_stats = [&]() {
    return ViewStats{0.2 + 2.0 * unit(rng), 0.5 + 1.5 * unit(rng)};
  };

  rep.boundary_ok = true;
  rep.envelope_ok = true;
  rep.threshold_ok = true;
  rep.monotonic_rho_ok = true;
  for (int t = 0; t < 10; ++t) {
    ViewStats v1 = random_stats(), v2 = random_stats();
    const double rho = 0.9 * unit(rng);
    if (std::abs(snr_fusion(1.0, v1, v2, rho) - v1.r()) > 1e-12)
      rep.boundary_ok = false;
    if (std::abs(snr_fusion(0.0, v1, v2, rho) - v2.r()) > 1e-12)
      rep.boundary_ok = false;
    if (fusion_envelope(v1, v2, rho) < max_snr_over_alpha(v1, v2, rho) - 1e-9)
      rep.envelope_ok = false;
    if (!rho_threshold_check(v1, v2).verified) rep.threshold_ok = false;
    double prev = std::numeric_limits<double>::infinity();
    for (double r = 0.0; r < 0.95; r += 0.05) {
      const double s = snr_fusion(0.5, v1, v2, r);
      if (s >= prev) rep.monotonic_rho_ok = false;
      prev = s;
    }
  }

  SimulatorConfig sim;
  sim.seed = derive_seed(seed, 0xce11ull);
  rep.ceiling_ok = true;
  std::uniform_int_distribution<std::size_t> pick_n(4, 512);
  for (int t = 0; t < 50; ++t) {
    NoiseModel noise;
    noise.c = 0.5 + 2.0 * unit(rng);
    noise.n_interactions = pick_n(rng);
    SimulatorConfig per = sim;
    per.seed = derive_seed(sim.seed, t);
    per.trials = 10000;
    auto ceil = simulate_snr_ceiling(noise, 0.2 + unit(rng), per);
    if (!ceil.within_bound) rep.ceiling_ok = false;
  }
  {
    NoiseModel noise;
    noise.n_interactions = 16;
    auto low = simulate_snr_ceiling(noise, 1.0, sim);
    noise.n_interactions = 64;
    auto high = simulate_snr_ceiling(noise, 1.0, sim);
    const double ratio = high.empirical_snr / low.empirical_snr;
    rep.ceiling_scaling_ok = ratio > 2.0 * 0.85 && ratio < 2.0 * 1.15;
  }
  {
    NoiseModel noise;
    auto scaling = simulate_normalized_scaling(noise, 2.0, 3.0, 5.0, 1.0,
                                               {16, 64, 256, 1024}, sim);
    rep.normalized_exponent = scaling.exponent;
    rep.normalized_ok = scaling.exponent >= 0.4 && scaling.exponent <= 0.6;
    auto narrow = simulate_normalized_scaling(noise, 2.0, 30.0, 5.0, 1.0,
                                              {16, 64, 256, 1024}, sim);
    for (std::size_t i = 0; i < scaling.snr_by_count.size(); ++i) {
      const double a = scaling.snr_by_count[i].second;
      const double b = narrow.snr_by_count[i].second;
      if (std::abs(a - b) / std::abs(a) > 0.10) rep.normalized_ok = false;
    }
  }
  {
    rep.gains_ok = true;
    for (int t = 0; t < 20; ++t) {
      // zero label noise keeps both views improved, the hypothesis under
      // which the blend optimum must not drop
      NoiseModel noise;
      noise.n_interactions = pick_n(rng);
      noise.k_neighbors = pick_n(rng);
      noise.eta = pick_n(rng);
      noise.kappa = pick_n(rng);
      auto gain = apply_view_gains(noise, random_stats(), random_stats(),
                                   0.8 * unit(rng));
      if (!gain.monotone) rep.gains_ok = false;
    }
    NoiseModel plain;
    plain.eta = 0;
    plain.kappa = 0;
    plain.eps = 0.0;
    ViewStats d{1.0, 1.0}, s{0.8, 1.1};
    auto no_gain = apply_view_gains(plain, d, s, 0.3);
    if (std::abs(no_gain.max_snr_primed - no_gain.max_snr_base) > 1e-12)
      rep.gains_ok = false;
    NoiseModel doubled;
    doubled.eta = doubled.n_interactions;
    auto twice = apply_view_gains(doubled, d, s, 0.3);
    if (std::abs(twice.r_dense_primed - std::sqrt(2.0) * d.r()) > 1e-12)
      rep.gains_ok = false;
  }
  {
    auto trade = verify_tradeoff(ViewStats{1.2, 1.0}, ViewStats{0.9, 1.0}, 0.3,
                                 400, derive_seed(seed, 0x7aceull));
    rep.tradeoff_ok = trade.satisfied >= 100 && trade.increased == trade.satisfied;
  }
  {
    auto decay = sparse_variance_check({4, 16, 64, 256}, 20000,
                                       derive_seed(seed, 0xdecaull));
    rep.variance_exponent = decay.exponent;
    rep.variance_decay_ok = decay.exponent >= -1.15 && decay.exponent <= -0.85;
  }
  return rep;
}

}  // namespace dualcf
