// Command-line front end: one subcommand per pipeline stage plus a full run,
// a grid sweep, the closed-form verification suite, and artifact inspection.
// Stages communicate through files in the output directory, so any stage can
// be rerun on its own against unchanged upstream artifacts.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "dualcf/pipeline.hpp"
#include "dualcf/theory.hpp"

namespace {

using dualcf::Json;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_config_flags(CLI::App* sub, ConfigArgs& a) {
  sub->add_option("--config", a.config_path, "JSON configuration file");
  sub->add_option("--override", a.overrides,
                  "dotted.path=value, applied after the file (repeatable)");
  a.seed_opt = sub->add_option("--seed", a.seed,
                               "master seed; feeds every stochastic stage");
  a.threads_opt = sub->add_option("--threads", a.threads,
                                  "worker threads (0 = all cores)");
  a.out_opt = sub->add_option("--out", a.out, "artifact directory");
}

/// File, then --override in order, then the dedicated flags.
Json assemble_doc(const ConfigArgs& a) {
  Json doc = Json::object();
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in)
      throw dualcf::ConfigError("config: cannot open " + a.config_path);
    try {
      doc = Json::parse(in);
    } catch (const Json::exception& e) {
      throw dualcf::ConfigError("config " + a.config_path + ": " + e.what());
    }
  }
  for (const auto& o : a.overrides) dualcf::apply_override(doc, o);
  if (a.seed_opt && *a.seed_opt) doc["seed"] = a.seed;
  if (a.threads_opt && *a.threads_opt) doc["threads"] = a.threads;
  if (a.out_opt && *a.out_opt) doc["out"] = a.out;
  return doc;
}

dualcf::PipelineConfig build_config(const ConfigArgs& a) {
  return dualcf::config_from_json(assemble_doc(a));
}

int cmd_stage(dualcf::Stage st, const ConfigArgs& a) {
  using namespace dualcf;
  PipelineConfig cfg = build_config(a);
  switch (st) {
    case Stage::train_sparse: {
      SimilarityMatrix S = stage_train_sparse(cfg);
      ioutil::kv(std::cout, "nnz", std::to_string(S.nnz()));
      break;
    }
    case Stage::align_s2d: {
      InteractionMatrix rhat = stage_align_s2d(cfg);
      ioutil::kv(std::cout, "nnz", std::to_string(rhat.nnz()));
      ioutil::kv(std::cout, "pseudo_fraction",
                 format_real(pseudo_fraction(rhat)));
      break;
    }
    case Stage::train_dense: {
      TrainLog log;
      stage_train_dense(cfg, &log);
      ioutil::kv(std::cout, "epochs_run", std::to_string(log.epoch_loss.size()));
      ioutil::kv(std::cout, "best_epoch", std::to_string(log.best_epoch));
      ioutil::kv(std::cout, "stopped_early", log.stopped_early ? "1" : "0");
      break;
    }
    case Stage::align_d2s: {
      SimilarityMatrix S = stage_align_d2s(cfg);
      ioutil::kv(std::cout, "nnz", std::to_string(S.nnz()));
      break;
    }
    case Stage::fuse_eval: {
      BetaSearchResult res = stage_fuse_eval(cfg);
      ioutil::kv(std::cout, "beta", format_real(res.beta));
      ioutil::kv(std::cout, "tuned_on_test", res.tuned_on_test ? "1" : "0");
      write_metrics_report(std::cout, res.test_report);
      break;
    }
    case Stage::snr_report: {
      SnrReport rep = stage_snr_report(cfg);
      write_snr_report(std::cout, rep);
      break;
    }
  }
  std::cerr << stage_name(st) << " done: " << cfg.out_dir << "\n";
  return 0;
}

int cmd_run(const ConfigArgs& a, const std::string& only_stage) {
  using namespace dualcf;
  if (!only_stage.empty()) return cmd_stage(stage_from_name(only_stage), a);
  PipelineConfig cfg = build_config(a);
  PipelineResult res = run_pipeline(
      cfg, [](const std::string& line) { std::cerr << line << "\n"; });
  ioutil::kv(std::cout, "beta", format_real(res.beta));
  ioutil::kv(std::cout, "tuned_on_test", res.tuned_on_test ? "1" : "0");
  write_metrics_report(std::cout, res.metrics);
  write_snr_report(std::cout, res.snr);
  std::cerr << "run done: " << cfg.out_dir << "\n";
  return 0;
}

int cmd_theory(std::uint64_t seed, const std::string& out_dir) {
  using namespace dualcf;
  TheoryLabReport rep = run_theory_lab(seed);
  write_theory_report(std::cout, rep);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_theory_report(
        (std::filesystem::path(out_dir) / "theory.tsv").string(), rep);
  }
  return rep.all_ok() ? 0 : 4;
}

// --------------------------------------------------------------------------
// inspect
// --------------------------------------------------------------------------

void describe_similarity(const dualcf::SimilarityMatrix& S) {
  using dualcf::ioutil::kv;
  kv(std::cout, "kind", "item_item_weights");
  kv(std::cout, "n_items", std::to_string(S.n_items()));
  kv(std::cout, "nnz", std::to_string(S.nnz()));
  if (S.nnz() == 0) return;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [row, col, value] : S.to_triplets()) {
    lo = std::min(lo, value);
    hi = std::max(hi, value);
  }
  kv(std::cout, "value_min", dualcf::format_real(lo));
  kv(std::cout, "value_max", dualcf::format_real(hi));
}

void describe_embeddings(const dualcf::EmbeddingTable& e) {
  using dualcf::ioutil::kv;
  kv(std::cout, "kind", "embeddings");
  kv(std::cout, "n_users", std::to_string(e.n_users()));
  kv(std::cout, "n_items", std::to_string(e.n_items()));
  kv(std::cout, "dim", std::to_string(e.dim()));
}

void describe_interactions(const dualcf::InteractionMatrix& m) {
  using namespace dualcf;
  using ioutil::kv;
  kv(std::cout, "kind", "interactions");
  kv(std::cout, "n_users", std::to_string(m.n_users()));
  kv(std::cout, "n_items", std::to_string(m.n_items()));
  kv(std::cout, "nnz", std::to_string(m.nnz()));
  for (Provenance p :
       {Provenance::observed, Provenance::pseudo_s2d, Provenance::pseudo_d2s})
    kv(std::cout, provenance_name(p), std::to_string(m.count_with_tag(p)));
  if (m.empty()) return;
  float lo = 1.0f, hi = 0.0f;
  for (user_t u = 0; u < m.n_users(); ++u)
    for (float w : m.row_weights(u)) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  kv(std::cout, "weight_min", format_real(lo));
  kv(std::cout, "weight_max", format_real(hi));
}

void print_file(const std::string& path) {
  auto in = dualcf::ioutil::open_input(path);
  std::cout << in.rdbuf();
  std::cout.clear();  // an empty file leaves failbit set
}

void inspect_one(const std::string& path) {
  namespace fs = std::filesystem;
  using namespace dualcf;
  std::cout << "=== " << path << " ===\n";
  const std::string base = fs::path(path).filename().string();
  auto named = [&](const char* n) { return base == n; };

  if (named(artifact::kSparse) || named(artifact::kSparseRealigned))
    return describe_similarity(load_similarity_binary(path));
  if (named(artifact::kEmbeddings))
    return describe_embeddings(load_embeddings(path));
  if (named(artifact::kRhat) || named(artifact::kRprime))
    return describe_interactions(load_interactions_text(path));
  if (named(artifact::kUserIds) || named(artifact::kItemIds)) {
    auto ids = load_id_map(path);
    ioutil::kv(std::cout, "kind", "id_map");
    ioutil::kv(std::cout, "count", std::to_string(ids.size()));
    return;
  }
  if (named(artifact::kBeta) || named(artifact::kMetrics) ||
      named(artifact::kMetricsGrid) || named(artifact::kSnr) ||
      named(artifact::kSnrGrid) || named(artifact::kManifest) ||
      named(artifact::kConfigEcho))
    return print_file(path);

  // Unknown name: sniff the contents.
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw ParseError("cannot open " + path);
    std::uint32_t magic = 0;
    try {
      magic = ioutil::get_le<std::uint32_t>(probe, path, "magic");
    } catch (const ParseError&) {
    }
    if (magic == kEmbeddingMagic)
      return describe_embeddings(load_embeddings(path));
  }
  try {
    return describe_similarity(load_similarity_binary(path));
  } catch (const Error&) {
  }
  try {
    return describe_similarity(load_similarity_text(path));
  } catch (const Error&) {
  }
  try {
    return describe_interactions(load_interactions_text(path));
  } catch (const Error&) {
  }
  try {
    read_key_value(path);
    return print_file(path);
  } catch (const Error&) {
  }
  throw ParseError("unrecognized artifact: " + path);
}

int cmd_inspect(const std::vector<std::string>& paths) {
  for (const auto& p : paths) inspect_one(p);
  return 0;
}

// --------------------------------------------------------------------------
// sweep
// --------------------------------------------------------------------------

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

std::vector<SweepAxis> parse_axes(const std::vector<std::string>& grids) {
  using dualcf::ConfigError;
  if (grids.empty())
    throw ConfigError("sweep: at least one --grid axis is required");
  std::vector<SweepAxis> axes;
  for (const auto& g : grids) {
    auto eq = g.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == g.size())
      throw ConfigError("sweep: --grid must look like key=v1,v2,...: " + g);
    SweepAxis ax;
    ax.key = g.substr(0, eq);
    for (const auto& prev : axes)
      if (prev.key == ax.key)
        throw ConfigError("sweep: duplicate axis " + ax.key);
    const std::string rest = g.substr(eq + 1);
    std::size_t start = 0;
    while (true) {
      auto comma = rest.find(',', start);
      std::string tok = rest.substr(start, comma - start);
      if (tok.empty())
        throw ConfigError("sweep: empty value in axis " + ax.key);
      ax.values.push_back(std::move(tok));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    axes.push_back(std::move(ax));
  }
  return axes;
}

std::string cell_dir_name(std::size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return "cell_" + s;
}

/// Cross product over the axes; every cell is a full pipeline run in its own
/// subdirectory, summarized as one row of <out>/sweep.tsv.
int cmd_sweep(const ConfigArgs& a, const std::vector<std::string>& grids) {
  using namespace dualcf;
  std::vector<SweepAxis> axes = parse_axes(grids);
  Json base = assemble_doc(a);
  const std::string base_out = base.value("out", std::string("run"));

  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.values.size();

  std::filesystem::create_directories(base_out);
  const std::string table_path =
      (std::filesystem::path(base_out) / "sweep.tsv").string();
  auto table = ioutil::open_output(table_path);
  table << "cell";
  for (const auto& ax : axes) table << '\t' << ax.key;
  table << "\tbeta\trecall_at_20\tndcg_at_20\n";

  for (std::size_t cell = 0; cell < total; ++cell) {
    // mixed-radix decode, last axis fastest
    std::vector<std::size_t> idx(axes.size(), 0);
    std::size_t rem = cell;
    for (std::size_t i = axes.size(); i-- > 0;) {
      idx[i] = rem % axes[i].values.size();
      rem /= axes[i].values.size();
    }
    Json doc = base;
    std::string label;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const std::string& v = axes[i].values[idx[i]];
      apply_override(doc, axes[i].key + "=" + v);
      label += (label.empty() ? "" : " ") + axes[i].key + "=" + v;
    }
    doc["out"] =
        (std::filesystem::path(base_out) / cell_dir_name(cell)).string();
    PipelineConfig cfg = config_from_json(doc);
    std::cerr << "cell " << (cell + 1) << "/" << total << ": " << label
              << "\n";
    PipelineResult res = run_pipeline(cfg);
    table << cell;
    for (std::size_t i = 0; i < axes.size(); ++i)
      table << '\t' << axes[i].values[idx[i]];
    table << '\t' << format_real(res.beta) << '\t'
          << format_real(res.metrics.recall_at_k.at(20)) << '\t'
          << format_real(res.metrics.ndcg_at_k.at(20)) << '\n';
    table.flush();
  }
  ioutil::finish_output(table, table_path);
  ioutil::kv(std::cout, "cells", std::to_string(total));
  ioutil::kv(std::cout, "table", table_path);
  return 0;
}

const char* stage_blurb(dualcf::Stage s) {
  using dualcf::Stage;
  switch (s) {
    case Stage::train_sparse:
      return "fit the item-item model on observed interactions";
    case Stage::align_s2d:
      return "build the dense trainer's input with sparse-view nominations";
    case Stage::train_dense:
      return "train the embedding model on the augmented input";
    case Stage::align_d2s:
      return "refit the item-item model on dense-view nominations";
    case Stage::fuse_eval:
      return "pick the fusion weight and evaluate on the test split";
    case Stage::snr_report:
      return "measure margin statistics for both views and their fusion";
  }
  return "";
}

int guarded(const std::function<int()>& body) {
  using namespace dualcf;
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateBlend& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SingularCorrelation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CorrelationUndefined& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dual-view recommender: sparse item-item and dense embedding models,\n"
      "cross-aligned, fused, and evaluated through persisted artifacts"};
  app.require_subcommand(1);

  std::deque<std::pair<dualcf::Stage, ConfigArgs>> stage_cmds;
  std::deque<CLI::App*> stage_subs;
  for (dualcf::Stage s : dualcf::kAllStages) {
    stage_cmds.emplace_back(s, ConfigArgs{});
    CLI::App* sub = app.add_subcommand(dualcf::stage_name(s), stage_blurb(s));
    add_config_flags(sub, stage_cmds.back().second);
    stage_subs.push_back(sub);
  }

  ConfigArgs run_args;
  std::string only_stage;
  CLI::App* run_cmd =
      app.add_subcommand("run", "execute every stage in order");
  add_config_flags(run_cmd, run_args);
  run_cmd->add_option("--stage", only_stage,
                      "run a single named stage instead");

  ConfigArgs sweep_args;
  std::vector<std::string> grid_specs;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "full runs over a parameter grid, one subdirectory per cell");
  add_config_flags(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--grid", grid_specs,
                        "key=v1,v2,... axis; repeat for a cross product "
                        "(values must not contain commas)");

  std::uint64_t theory_seed = 42;
  std::string theory_out;
  CLI::App* theory_cmd = app.add_subcommand(
      "theory-lab", "verify the closed-form margin analysis against "
                    "simulation; exit 0 only if every check passes");
  theory_cmd->add_option("--seed", theory_seed, "randomized-check seed");
  theory_cmd->add_option("--out", theory_out,
                         "also write theory.tsv under this directory");

  std::vector<std::string> inspect_paths;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect", "print artifact headers and stats");
  inspect_cmd->add_option("paths", inspect_paths, "artifact files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // command-line misuse is a configuration error
  }

  for (std::size_t i = 0; i < stage_cmds.size(); ++i)
    if (stage_subs[i]->parsed()) {
      auto& [st, args] = stage_cmds[i];
      return guarded([&] { return cmd_stage(st, args); });
    }
  if (run_cmd->parsed())
    return guarded([&] { return cmd_run(run_args, only_stage); });
  if (sweep_cmd->parsed())
    return guarded([&] { return cmd_sweep(sweep_args, grid_specs); });
  if (theory_cmd->parsed())
    return guarded([&] { return cmd_theory(theory_seed, theory_out); });
  if (inspect_cmd->parsed())
    return guarded([&] { return cmd_inspect(inspect_paths); });
  return 1;
}
