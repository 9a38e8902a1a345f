#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dualcf/align.hpp"
#include "dualcf/common.hpp"
#include "dualcf/data.hpp"
#include "dualcf/io.hpp"
#include "dualcf/kernels.hpp"
#include "dualcf/metrics.hpp"
#include "dualcf/mf.hpp"
#include "dualcf/similarity.hpp"
#include "dualcf/slim.hpp"
#include "dualcf/snr.hpp"

// =============================================================================
// FILE: dualcf/pipeline.hpp
// BRIEF: Staged end-to-end runs over persisted artifacts.
//
// Stage order: train-sparse -> align-s2d -> train-dense -> align-d2s ->
// fuse-eval -> snr-report. Every stage is a pure function of the config and
// the artifacts already on disk, so rerunning a stage against unchanged
// upstream artifacts is byte-stable and a full rerun with the same config and
// seed reproduces identical manifest checksums.
// =============================================================================

namespace dualcf {

using Json = nlohmann::json;

// --------------------------------------------------------------------------
// Configuration
// --------------------------------------------------------------------------

struct DataConfig {
  std::string train_path;
  std::string test_path;
  std::optional<std::string> validation_path;
  FileFormat format = FileFormat::adjacency;
  double rating_threshold = -std::numeric_limits<double>::infinity();
};

struct PipelineConfig {
  DataConfig data;
  SlimConfig slim;
  MfConfig mf;
  AlignConfig align;
  std::vector<std::size_t> auto_k_ladder = {2, 5, 10, 20, 40, 80, 160};
  FusionConfig fusion;
  SnrConfig snr;
  std::optional<double> snr_beta;  // pinned fusion weight; default reads the
                                   // fuse-eval artifact
  std::size_t tune_k = 20;         // recall cutoff the fusion search maximizes
  std::string out_dir = "run";
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0 = hardware concurrency; applies to every stage
  bool s2d = true;       // sparse->dense augmentation toggle
  bool d2s = true;       // dense->sparse augmentation toggle

  void validate() const {
    slim.validate();
    mf.validate();
    align.validate();
    fusion.validate();
    snr.validate();
    if (out_dir.empty()) throw ConfigError("config: out must be nonempty");
    if (tune_k == 0) throw ConfigError("config: fusion.tune_k must be > 0");
    if (snr_beta && (!std::isfinite(*snr_beta) || *snr_beta < 0.0))
      throw ConfigError("config: snr.beta must be finite and >= 0");
    for (std::size_t k : auto_k_ladder)
      if (k == 0) throw ConfigError("config: align.ladder entries must be > 0");
  }

  /// Set only when the config requests a stage that reads the dataset.
  void validate_data() const {
    if (data.train_path.empty() || data.test_path.empty())
      throw ConfigError("config: dataset.train and dataset.test are required");
  }
};

namespace cfgjson {

inline void check_keys(const Json& obj,
                       std::initializer_list<const char*> allowed,
                       const char* section) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known)
      throw ConfigError(std::string("config: unknown key '") + key +
                        "' in section '" + section + "'");
  }
}

inline const Json* section(const Json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) return nullptr;
  if (!it->is_object())
    throw ConfigError(std::string("config: section '") + name +
                      "' must be an object");
  return &*it;
}

template <class T>
inline void read_into(const Json& obj, const char* key, T& out,
                      const char* section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + section + "." +
                      key + "'");
  }
}

}  // namespace cfgjson

/// Builds a config from a JSON document. Every key is optional and falls back
/// to the struct defaults; unknown keys are rejected so typos in files or
/// overrides fail loudly. The top-level seed feeds every stochastic stage
/// unless a section pins its own.
inline PipelineConfig config_from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config: root must be an object");
  cfgjson::check_keys(doc,
                      {"dataset", "out", "seed", "threads", "stages", "sparse",
                       "dense", "align", "fusion", "snr"},
                      "<root>");
  PipelineConfig cfg;
  cfgjson::read_into(doc, "out", cfg.out_dir, "<root>");
  cfgjson::read_into(doc, "seed", cfg.seed, "<root>");
  cfgjson::read_into(doc, "threads", cfg.threads, "<root>");

  if (const Json* d = cfgjson::section(doc, "dataset")) {
    cfgjson::check_keys(
        *d, {"train", "test", "validation", "format", "rating_threshold"},
        "dataset");
    cfgjson::read_into(*d, "train", cfg.data.train_path, "dataset");
    cfgjson::read_into(*d, "test", cfg.data.test_path, "dataset");
    if (d->contains("validation") && !(*d)["validation"].is_null()) {
      std::string v;
      cfgjson::read_into(*d, "validation", v, "dataset");
      cfg.data.validation_path = v;
    }
    if (d->contains("format")) {
      std::string f;
      cfgjson::read_into(*d, "format", f, "dataset");
      cfg.data.format = file_format_from_name(f);
    }
    cfgjson::read_into(*d, "rating_threshold", cfg.data.rating_threshold,
                       "dataset");
  }

  if (const Json* s = cfgjson::section(doc, "stages")) {
    cfgjson::check_keys(*s, {"s2d", "d2s"}, "stages");
    cfgjson::read_into(*s, "s2d", cfg.s2d, "stages");
    cfgjson::read_into(*s, "d2s", cfg.d2s, "stages");
  }

  if (const Json* s = cfgjson::section(doc, "sparse")) {
    cfgjson::check_keys(*s,
                        {"l1", "l2", "max_iters", "tol", "nonnegative",
                         "topk_cap", "gram_budget_mb"},
                        "sparse");
    cfgjson::read_into(*s, "l1", cfg.slim.l1, "sparse");
    cfgjson::read_into(*s, "l2", cfg.slim.l2, "sparse");
    cfgjson::read_into(*s, "max_iters", cfg.slim.max_iters, "sparse");
    cfgjson::read_into(*s, "tol", cfg.slim.tol, "sparse");
    cfgjson::read_into(*s, "nonnegative", cfg.slim.nonnegative, "sparse");
    cfgjson::read_into(*s, "topk_cap", cfg.slim.topk_cap, "sparse");
    cfgjson::read_into(*s, "gram_budget_mb", cfg.slim.gram_budget_mb,
                       "sparse");
  }

  bool mf_seed_pinned = false;
  if (const Json* d = cfgjson::section(doc, "dense")) {
    cfgjson::check_keys(*d,
                        {"dim", "lr", "batch_size", "l2_reg", "epochs",
                         "neg_per_pos", "alpha", "seed", "patience"},
                        "dense");
    cfgjson::read_into(*d, "dim", cfg.mf.dim, "dense");
    cfgjson::read_into(*d, "lr", cfg.mf.lr, "dense");
    cfgjson::read_into(*d, "batch_size", cfg.mf.batch_size, "dense");
    cfgjson::read_into(*d, "l2_reg", cfg.mf.l2_reg, "dense");
    cfgjson::read_into(*d, "epochs", cfg.mf.epochs, "dense");
    cfgjson::read_into(*d, "neg_per_pos", cfg.mf.neg_per_pos, "dense");
    cfgjson::read_into(*d, "alpha", cfg.mf.alpha, "dense");
    cfgjson::read_into(*d, "patience", cfg.mf.patience, "dense");
    if (d->contains("seed")) {
      cfgjson::read_into(*d, "seed", cfg.mf.seed, "dense");
      mf_seed_pinned = true;
    }
  }
  if (!mf_seed_pinned) cfg.mf.seed = cfg.seed;

  if (const Json* a = cfgjson::section(doc, "align")) {
    cfgjson::check_keys(*a,
                        {"k_user", "k_item", "lambda_conf", "k_d2s",
                         "target_pseudo_ratio", "ladder"},
                        "align");
    cfgjson::read_into(*a, "k_user", cfg.align.k_user, "align");
    cfgjson::read_into(*a, "k_item", cfg.align.k_item, "align");
    cfgjson::read_into(*a, "lambda_conf", cfg.align.lambda_conf, "align");
    cfgjson::read_into(*a, "k_d2s", cfg.align.k_d2s, "align");
    if (a->contains("target_pseudo_ratio") &&
        !(*a)["target_pseudo_ratio"].is_null()) {
      double r = 0.0;
      cfgjson::read_into(*a, "target_pseudo_ratio", r, "align");
      cfg.align.target_pseudo_ratio = r;
    }
    cfgjson::read_into(*a, "ladder", cfg.auto_k_ladder, "align");
  }

  if (const Json* f = cfgjson::section(doc, "fusion")) {
    cfgjson::check_keys(*f, {"beta_candidates", "tune_k"}, "fusion");
    cfgjson::read_into(*f, "beta_candidates", cfg.fusion.beta_candidates,
                       "fusion");
    cfgjson::read_into(*f, "tune_k", cfg.tune_k, "fusion");
  }

  bool snr_seed_pinned = false;
  if (const Json* s = cfgjson::section(doc, "snr")) {
    cfgjson::check_keys(*s, {"k_neg", "seed", "beta"}, "snr");
    cfgjson::read_into(*s, "k_neg", cfg.snr.k_neg, "snr");
    if (s->contains("seed")) {
      cfgjson::read_into(*s, "seed", cfg.snr.seed, "snr");
      snr_seed_pinned = true;
    }
    if (s->contains("beta") && !(*s)["beta"].is_null()) {
      double b = 0.0;
      cfgjson::read_into(*s, "beta", b, "snr");
      cfg.snr_beta = b;
    }
  }
  if (!snr_seed_pinned) cfg.snr.seed = cfg.seed;

  cfg.validate();
  return cfg;
}

/// Canonical resolved document: every default materialized, keys sorted by
/// the JSON library. Hashing this dump identifies the run.
inline Json config_to_json(const PipelineConfig& cfg) {
  Json doc;
  doc["out"] = cfg.out_dir;
  doc["seed"] = cfg.seed;
  doc["threads"] = cfg.threads;
  doc["dataset"]["train"] = cfg.data.train_path;
  doc["dataset"]["test"] = cfg.data.test_path;
  if (cfg.data.validation_path)
    doc["dataset"]["validation"] = *cfg.data.validation_path;
  doc["dataset"]["format"] =
      cfg.data.format == FileFormat::adjacency ? "adjacency" : "triplet";
  if (std::isfinite(cfg.data.rating_threshold))
    doc["dataset"]["rating_threshold"] = cfg.data.rating_threshold;
  doc["stages"]["s2d"] = cfg.s2d;
  doc["stages"]["d2s"] = cfg.d2s;
  doc["sparse"] = {{"l1", cfg.slim.l1},
                   {"l2", cfg.slim.l2},
                   {"max_iters", cfg.slim.max_iters},
                   {"tol", cfg.slim.tol},
                   {"nonnegative", cfg.slim.nonnegative},
                   {"topk_cap", cfg.slim.topk_cap},
                   {"gram_budget_mb", cfg.slim.gram_budget_mb}};
  doc["dense"] = {{"dim", cfg.mf.dim},
                  {"lr", cfg.mf.lr},
                  {"batch_size", cfg.mf.batch_size},
                  {"l2_reg", cfg.mf.l2_reg},
                  {"epochs", cfg.mf.epochs},
                  {"neg_per_pos", cfg.mf.neg_per_pos},
                  {"alpha", cfg.mf.alpha},
                  {"seed", cfg.mf.seed},
                  {"patience", cfg.mf.patience}};
  doc["align"] = {{"k_user", cfg.align.k_user},
                  {"k_item", cfg.align.k_item},
                  {"lambda_conf", cfg.align.lambda_conf},
                  {"k_d2s", cfg.align.k_d2s},
                  {"ladder", cfg.auto_k_ladder}};
  if (cfg.align.target_pseudo_ratio)
    doc["align"]["target_pseudo_ratio"] = *cfg.align.target_pseudo_ratio;
  doc["fusion"] = {{"beta_candidates", cfg.fusion.beta_candidates},
                   {"tune_k", cfg.tune_k}};
  doc["snr"] = {{"k_neg", cfg.snr.k_neg}, {"seed", cfg.snr.seed}};
  if (cfg.snr_beta) doc["snr"]["beta"] = *cfg.snr_beta;
  return doc;
}

/// Applies one "dotted.path=value" override to a JSON document. The value is
/// parsed as JSON when possible (numbers, booleans, arrays) and falls back to
/// a plain string.
inline void apply_override(Json& doc, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + spec);
  std::string path = spec.substr(0, eq);
  std::string raw = spec.substr(eq + 1);

  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw ConfigError("override has an empty path segment: " + spec);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    Json& child = (*node)[key];
    if (!child.is_object()) {
      if (!child.is_null())
        throw ConfigError("override path crosses a non-section value: " +
                          spec);
      child = Json::object();
    }
    node = &child;
    start = dot + 1;
  }
}

inline std::string hex64(std::uint64_t h) {
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i)
    out[15 - i] = "0123456789abcdef"[(h >> (4 * i)) & 0xf];
  return out;
}

inline std::string config_hash_hex(const PipelineConfig& cfg) {
  return hex64(fnv1a64(config_to_json(cfg).dump()));
}

inline PipelineConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

// --------------------------------------------------------------------------
// Stages and artifacts
// --------------------------------------------------------------------------

enum class Stage {
  train_sparse = 0,
  align_s2d,
  train_dense,
  align_d2s,
  fuse_eval,
  snr_report,
};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::train_sparse: return "train-sparse";
    case Stage::align_s2d: return "align-s2d";
    case Stage::train_dense: return "train-dense";
    case Stage::align_d2s: return "align-d2s";
    case Stage::fuse_eval: return "fuse-eval";
    case Stage::snr_report: return "snr-report";
  }
  throw ConfigError("unknown stage id");
}

inline Stage stage_from_name(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Stage::snr_report); ++i)
    if (s == stage_name(static_cast<Stage>(i))) return static_cast<Stage>(i);
  throw ConfigError("unknown stage: " + s +
                    " (expected train-sparse, align-s2d, train-dense, "
                    "align-d2s, fuse-eval, or snr-report)");
}

inline constexpr Stage kAllStages[] = {
    Stage::train_sparse, Stage::align_s2d,  Stage::train_dense,
    Stage::align_d2s,    Stage::fuse_eval,  Stage::snr_report,
};

namespace artifact {
inline constexpr const char* kUserIds = "user_ids.tsv";
inline constexpr const char* kItemIds = "item_ids.tsv";
inline constexpr const char* kSparse = "sparse.bin";
inline constexpr const char* kRhat = "rhat.txt";
inline constexpr const char* kEmbeddings = "embeddings.bin";
inline constexpr const char* kRprime = "rprime.txt";
inline constexpr const char* kSparseRealigned = "sparse_realigned.bin";
inline constexpr const char* kBeta = "beta.tsv";
inline constexpr const char* kMetrics = "metrics.tsv";
inline constexpr const char* kMetricsGrid = "metrics_grid.tsv";
inline constexpr const char* kSnr = "snr.tsv";
inline constexpr const char* kSnrGrid = "snr_grid.tsv";
inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kManifest = "manifest.tsv";

inline constexpr const char* kAll[] = {
    kUserIds, kItemIds,      kSparse,  kRhat,        kEmbeddings,
    kRprime,  kSparseRealigned, kBeta, kMetrics,     kMetricsGrid,
    kSnr,     kSnrGrid,      kConfigEcho,
};
}  // namespace artifact

inline std::string artifact_path(const PipelineConfig& cfg, const char* name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

/// Missing upstream artifacts abort with the subcommand that produces them.
inline std::string require_artifact(const PipelineConfig& cfg,
                                    const char* name, const char* producer) {
  auto path = artifact_path(cfg, name);
  if (!std::filesystem::exists(path))
    throw DependencyError(std::string(name) + " not found under " +
                          cfg.out_dir + "; run " + producer + " first");
  return path;
}

namespace detail {

inline void prepare_out_dir(const PipelineConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec)
    throw ConfigError("config: cannot create output directory " + cfg.out_dir +
                      ": " + ec.message());
  auto out = ioutil::open_output(artifact_path(cfg, artifact::kConfigEcho));
  out << config_to_json(cfg).dump(2) << '\n';
  ioutil::finish_output(out, artifact::kConfigEcho);
}

inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

/// Rewrites the manifest: current config hash, stage markers (merged with any
/// previous manifest), and checksums of every artifact present on disk, so
/// checksums always describe the bytes actually there.
inline void update_manifest(const PipelineConfig& cfg, Stage stage,
                            const char* state) {
  auto path = artifact_path(cfg, artifact::kManifest);
  std::map<std::string, std::string> entries;
  if (std::filesystem::exists(path)) entries = read_key_value(path);
  entries["config_hash"] = config_hash_hex(cfg);
  entries["seed"] = std::to_string(cfg.seed);
  entries[std::string("stage_") + stage_name(stage)] = state;
  for (const char* name : artifact::kAll) {
    auto ap = artifact_path(cfg, name);
    std::string key = std::string("checksum_") + name;
    if (std::filesystem::exists(ap))
      entries[key] = hex64(file_checksum(ap));
    else
      entries.erase(key);
  }
  auto out = ioutil::open_output(path);
  for (const auto& [k, v] : entries) ioutil::kv(out, k, v);
  ioutil::finish_output(out, path);
}

inline Dataset load_pipeline_dataset(const PipelineConfig& cfg) {
  cfg.validate_data();
  return load_dataset(cfg.data.train_path, cfg.data.test_path, cfg.data.format,
                      cfg.data.validation_path, cfg.data.rating_threshold);
}

inline SlimConfig slim_with_threads(const PipelineConfig& cfg) {
  SlimConfig sc = cfg.slim;
  sc.threads = cfg.threads;
  return sc;
}

inline RowScorer dense_raw_scorer(const EmbeddingTable& e) {
  return [&e](user_t u) { return predict_dense(e, u); };
}

inline RowScorer sparse_raw_scorer(const InteractionMatrix& history,
                                   const SimilarityMatrix& s) {
  return [&history, &s](user_t u) { return spmm_row(history, s, u); };
}

inline void check_embedding_shape(const EmbeddingTable& e, const Dataset& ds) {
  if (e.n_users() != ds.n_users() || e.n_items() != ds.n_items())
    throw ShapeError("embedding table shape does not match the dataset");
}

}  // namespace detail

// --------------------------------------------------------------------------
// Stage bodies
// --------------------------------------------------------------------------

/// Fits the item-item model on the observed training interactions.
inline SimilarityMatrix stage_train_sparse(const PipelineConfig& cfg) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::train_sparse, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  save_id_map(ds.user_ids, artifact_path(cfg, artifact::kUserIds));
  save_id_map(ds.item_ids, artifact_path(cfg, artifact::kItemIds));
  SimilarityMatrix S = fit_slim(ds.train, detail::slim_with_threads(cfg));
  save_similarity_binary(S, artifact_path(cfg, artifact::kSparse));
  detail::update_manifest(cfg, Stage::train_sparse, "done");
  return S;
}

/// Builds the dense model's training input: observed interactions plus
/// confidence-weighted pseudo-positives nominated by the sparse view. With
/// the toggle off the observed matrix passes through unchanged.
inline InteractionMatrix stage_align_s2d(const PipelineConfig& cfg) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::align_s2d, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  InteractionMatrix rhat = ds.train;
  if (cfg.s2d) {
    SimilarityMatrix S = load_similarity_binary(
        require_artifact(cfg, artifact::kSparse, "train-sparse"));
    if (S.n_items() != ds.n_items())
      throw ShapeError("similarity matrix does not match the dataset");
    RowScorer sparse_raw = detail::sparse_raw_scorer(ds.train, S);
    AlignConfig ac = cfg.align;
    if (ac.target_pseudo_ratio) {
      std::size_t k = auto_k_for_ratio(sparse_raw, ds.train, cfg.auto_k_ladder,
                                       *ac.target_pseudo_ratio);
      ac.k_user = k;
      ac.k_item = k;
    }
    InteractionMatrix pseudo = s2d_pseudo_positives(sparse_raw, ds.train, ac);
    rhat = augment_dense_input(ds.train, pseudo, ac.lambda_conf);
  }
  save_interactions_text(rhat, artifact_path(cfg, artifact::kRhat));
  detail::update_manifest(cfg, Stage::align_s2d, "done");
  return rhat;
}

/// Trains the embedding model on the (possibly augmented) input, with
/// degree normalization recomputed on that input. A validation split, when
/// present, drives early stopping on recall at the tuning cutoff.
inline EmbeddingTable stage_train_dense(const PipelineConfig& cfg,
                                        TrainLog* log = nullptr) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::train_dense, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  InteractionMatrix rhat = load_interactions_text(
      require_artifact(cfg, artifact::kRhat, "align-s2d"), ds.n_users(),
      ds.n_items());
  DegreeVectors deg = degrees(rhat);

  ValidationFn validation = nullptr;
  PopularityBuckets buckets;
  if (ds.validation) {
    buckets = popularity_buckets(ds.train);
    validation = [&](const EmbeddingTable& e) {
      auto scorer = [&](user_t u) {
        ScoreVector y = predict_dense(e, u);
        mask_observed(y, ds.train, u);
        return y;
      };
      auto rep = evaluate(*ds.validation, scorer, buckets, {cfg.tune_k},
                          cfg.threads);
      return rep.recall_at_k.at(cfg.tune_k);
    };
  }
  EmbeddingTable e = train_mf(rhat, cfg.mf, deg, log, validation);
  save_embeddings(e, artifact_path(cfg, artifact::kEmbeddings));
  detail::update_manifest(cfg, Stage::train_dense, "done");
  return e;
}

/// Augments the sparse model's input with the dense view's nominations and
/// refits. With the toggle off the original fit is carried over unchanged.
inline SimilarityMatrix stage_align_d2s(const PipelineConfig& cfg) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::align_d2s, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  SimilarityMatrix sprime;
  if (cfg.d2s) {
    EmbeddingTable e = load_embeddings(
        require_artifact(cfg, artifact::kEmbeddings, "train-dense"));
    detail::check_embedding_shape(e, ds);
    RowScorer dense_raw = detail::dense_raw_scorer(e);
    InteractionMatrix rprime =
        d2s_augment(dense_raw, ds.train, cfg.align.k_d2s);
    save_interactions_text(rprime, artifact_path(cfg, artifact::kRprime));
    sprime = realign_sparse(rprime, detail::slim_with_threads(cfg));
    save_similarity_binary(sprime,
                           artifact_path(cfg, artifact::kSparseRealigned));
  } else {
    // No augmentation: the realigned artifacts equal the originals byte for
    // byte, without refitting.
    save_interactions_text(ds.train, artifact_path(cfg, artifact::kRprime));
    auto src = require_artifact(cfg, artifact::kSparse, "train-sparse");
    sprime = load_similarity_binary(src);
    save_similarity_binary(sprime,
                           artifact_path(cfg, artifact::kSparseRealigned));
  }
  detail::update_manifest(cfg, Stage::align_d2s, "done");
  return sprime;
}

/// Sweeps the fusion weight, evaluates the fused ranker on the test split,
/// and persists the chosen weight, the sweep curve, and the metric reports.
inline BetaSearchResult stage_fuse_eval(const PipelineConfig& cfg) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::fuse_eval, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  EmbeddingTable e = load_embeddings(
      require_artifact(cfg, artifact::kEmbeddings, "train-dense"));
  detail::check_embedding_shape(e, ds);
  InteractionMatrix rprime = load_interactions_text(
      require_artifact(cfg, artifact::kRprime, "align-d2s"), ds.n_users(),
      ds.n_items());
  SimilarityMatrix sprime = load_similarity_binary(
      require_artifact(cfg, artifact::kSparseRealigned, "align-d2s"));
  if (sprime.n_items() != ds.n_items())
    throw ShapeError("realigned similarity matrix does not match the dataset");

  PopularityBuckets buckets = popularity_buckets(ds.train);
  RowScorer dense_raw = detail::dense_raw_scorer(e);
  RowScorer sparse_raw = detail::sparse_raw_scorer(rprime, sprime);
  BetaSearchResult res = beta_search(ds, dense_raw, sparse_raw, cfg.fusion,
                                     cfg.tune_k, buckets, cfg.threads);
  res.test_report.config_snapshot =
      "config_hash=" + config_hash_hex(cfg) +
      " beta=" + format_real(res.beta) +
      (res.tuned_on_test ? " tuned_on_test=1" : "");

  auto beta_path = artifact_path(cfg, artifact::kBeta);
  {
    auto out = ioutil::open_output(beta_path);
    ioutil::kv(out, "beta", format_real(res.beta));
    ioutil::kv(out, "tuned_on_test", res.tuned_on_test ? "1" : "0");
    ioutil::kv(out, "tune_k", std::to_string(cfg.tune_k));
    std::string last_key;
    for (const auto& [b, r] : res.curve) {
      // repeated candidate weights would collide as keys
      std::string key = "curve_" + format_real(b);
      if (key == last_key) continue;
      ioutil::kv(out, key, format_real(r));
      last_key = key;
    }
    ioutil::finish_output(out, beta_path);
  }
  // Persisted reports zero the wall-time field: artifact bytes must depend
  // on config and seed alone. Timing stays in the returned report.
  MetricsReport persisted = res.test_report;
  persisted.runtime_seconds = 0.0;
  write_metrics_report(artifact_path(cfg, artifact::kMetrics), persisted);
  write_metrics_table(artifact_path(cfg, artifact::kMetricsGrid), persisted);
  detail::update_manifest(cfg, Stage::fuse_eval, "done");
  return res;
}

/// Measures margin statistics for both views and their fusion at the chosen
/// weight (the fuse-eval artifact's, unless the config pins one).
inline SnrReport stage_snr_report(const PipelineConfig& cfg) {
  detail::prepare_out_dir(cfg);
  detail::update_manifest(cfg, Stage::snr_report, "started");
  Dataset ds = detail::load_pipeline_dataset(cfg);
  EmbeddingTable e = load_embeddings(
      require_artifact(cfg, artifact::kEmbeddings, "train-dense"));
  detail::check_embedding_shape(e, ds);
  InteractionMatrix rprime = load_interactions_text(
      require_artifact(cfg, artifact::kRprime, "align-d2s"), ds.n_users(),
      ds.n_items());
  SimilarityMatrix sprime = load_similarity_binary(
      require_artifact(cfg, artifact::kSparseRealigned, "align-d2s"));

  double beta = 0.0;
  if (cfg.snr_beta) {
    beta = *cfg.snr_beta;
  } else {
    auto kv = read_key_value(require_artifact(cfg, artifact::kBeta,
                                              "fuse-eval"));
    auto it = kv.find("beta");
    if (it == kv.end())
      throw ParseError(artifact_path(cfg, artifact::kBeta) +
                       ": missing 'beta' key");
    beta = ioutil::parse_number<double>(it->second, artifact::kBeta);
  }

  PopularityBuckets buckets = popularity_buckets(ds.train);
  RowScorer dense_raw = detail::dense_raw_scorer(e);
  RowScorer sparse_raw = detail::sparse_raw_scorer(rprime, sprime);
  SnrReport rep = snr_estimate(ds, dense_raw, sparse_raw, beta, buckets,
                               cfg.snr, cfg.threads);
  write_snr_report(artifact_path(cfg, artifact::kSnr), rep);
  write_snr_table(artifact_path(cfg, artifact::kSnrGrid), rep);
  detail::update_manifest(cfg, Stage::snr_report, "done");
  return rep;
}

inline void run_stage(const PipelineConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::train_sparse: stage_train_sparse(cfg); return;
    case Stage::align_s2d: stage_align_s2d(cfg); return;
    case Stage::train_dense: stage_train_dense(cfg); return;
    case Stage::align_d2s: stage_align_d2s(cfg); return;
    case Stage::fuse_eval: stage_fuse_eval(cfg); return;
    case Stage::snr_report: stage_snr_report(cfg); return;
  }
  throw ConfigError("unknown stage id");
}

struct PipelineResult {
  double beta = 0.0;
  bool tuned_on_test = false;
  MetricsReport metrics;  // test split, at the chosen fusion weight
  SnrReport snr;
  std::map<std::string, std::string> manifest;
};

/// Runs every stage in order against the configured output directory and
/// returns the final reports plus the manifest contents.
inline PipelineResult run_pipeline(const PipelineConfig& cfg,
                                   const std::function<void(const std::string&)>&
                                       log = nullptr) {
  PipelineResult result;
  for (Stage stage : kAllStages) {
    if (log) log(std::string("stage ") + stage_name(stage));
    switch (stage) {
      case Stage::fuse_eval: {
        BetaSearchResult res = stage_fuse_eval(cfg);
        result.beta = res.beta;
        result.tuned_on_test = res.tuned_on_test;
        result.metrics = std::move(res.test_report);
        break;
      }
      case Stage::snr_report:
        result.snr = stage_snr_report(cfg);
        break;
      default:
        run_stage(cfg, stage);
    }
  }
  result.manifest = read_key_value(artifact_path(cfg, artifact::kManifest));
  return result;
}

}  // namespace dualcf
