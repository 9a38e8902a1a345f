#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "dualcf/common.hpp"
#include "dualcf/data.hpp"
#include "dualcf/embedding.hpp"
#include "dualcf/interaction.hpp"
#include "dualcf/metrics.hpp"
#include "dualcf/similarity.hpp"
#include "dualcf/snr.hpp"
#include "dualcf/theory.hpp"

// =============================================================================
// FILE: dualcf/io.hpp
// BRIEF: On-disk formats for model artifacts and reports.
//
// Text formats write numbers with std::to_chars in shortest round-trip form,
// so loading reproduces the exact stored value and saving the loaded object
// again yields byte-identical files. Binary formats are little-endian
// regardless of host order and round-trip bit-exactly. Field names emitted by
// the report writers are documented in the README and are stable.
// =============================================================================

namespace dualcf {

// --------------------------------------------------------------------------
// Numeric text
// --------------------------------------------------------------------------

/// Shortest decimal form that parses back to exactly `v` (handles inf/nan).
template <class Real>
inline std::string format_real(Real v) {
  static_assert(std::is_floating_point_v<Real>);
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace ioutil {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n';
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && is_space(line[pos])) ++pos;
    std::size_t start = pos;
    while (pos < line.size() && !is_space(line[pos])) ++pos;
    if (pos > start) toks.push_back(line.substr(start, pos - start));
  }
  return toks;
}

template <class T>
inline T parse_number(std::string_view tok, const std::string& where) {
  T v{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw ParseError(where + ": '" + std::string(tok) +
                     "' is not a valid number");
  return v;
}

/// Tracks line numbers so parse errors can say "path:line: ...".
struct LineReader {
  std::istream& in;
  std::string path;
  std::size_t lineno = 0;

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  }
  std::string where() const { return path + ":" + std::to_string(lineno); }
};

inline std::ofstream open_output(const std::string& path,
                                 std::ios::openmode extra = {}) {
  std::ofstream out(path, std::ios::out | std::ios::trunc | extra);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  return out;
}

inline std::ifstream open_input(const std::string& path,
                                std::ios::openmode extra = {}) {
  std::ifstream in(path, std::ios::in | extra);
  if (!in) throw ParseError("cannot open " + path);
  return in;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error("write failed: " + path);
}

// Binary primitives: fixed little-endian layout independent of host order.

template <class T>
inline void put_le(std::ostream& os, T v) {
  static_assert(std::is_unsigned_v<T>);
  char buf[sizeof(T)];
  for (std::size_t b = 0; b < sizeof(T); ++b)
    buf[b] = static_cast<char>((v >> (8 * b)) & 0xffu);
  os.write(buf, sizeof(T));
}

template <class T>
inline T get_le(std::istream& is, const std::string& path, const char* what) {
  static_assert(std::is_unsigned_v<T>);
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T)))
    throw ParseError(path + ": truncated while reading " + what);
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b)
    v |= static_cast<T>(static_cast<unsigned char>(buf[b])) << (8 * b);
  return v;
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_le(os, bits);
}

inline float get_f32(std::istream& is, const std::string& path,
                     const char* what) {
  std::uint32_t bits = get_le<std::uint32_t>(is, path, what);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_le(os, bits);
}

inline double get_f64(std::istream& is, const std::string& path,
                      const char* what) {
  std::uint64_t bits = get_le<std::uint64_t>(is, path, what);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void expect_eof(std::istream& is, const std::string& path) {
  if (is.peek() != std::char_traits<char>::eof())
    throw ParseError(path + ": trailing bytes after the expected payload");
}

inline void kv(std::ostream& os, std::string_view key, std::string_view value) {
  os << key << '\t' << value << '\n';
}

/// Value missing from a per-bucket map renders as "nan" in tables.
inline double lookup_or_nan(const std::map<std::size_t, double>& m,
                            std::size_t k) {
  auto it = m.find(k);
  return it == m.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

}  // namespace ioutil

// --------------------------------------------------------------------------
// Item-item weight matrix
//
// Text:   "n_items nnz" header line, then one "row col value" line per entry
//         in (row, col) order.
// Binary: u64 n_items, u64 nnz, then (u32 row, u32 col, f64 value) records in
//         the same order. Round-trips are byte-identical in both forms.
// --------------------------------------------------------------------------

inline void save_similarity_text(const SimilarityMatrix& S,
                                 const std::string& path) {
  auto out = ioutil::open_output(path);
  out << S.n_items() << ' ' << S.nnz() << '\n';
  for (const auto& [row, col, value] : S.to_triplets())
    out << row << ' ' << col << ' ' << format_real(value) << '\n';
  ioutil::finish_output(out, path);
}

inline SimilarityMatrix load_similarity_text(const std::string& path) {
  auto in = ioutil::open_input(path);
  ioutil::LineReader lr{in, path};
  std::string line;
  if (!lr.next(line))
    throw ParseError(path + ": empty file, expected 'n_items nnz' header");
  auto header = ioutil::split_tokens(line);
  if (header.size() != 2)
    throw ParseError(lr.where() + ": header must be 'n_items nnz'");
  auto n_items = ioutil::parse_number<std::size_t>(header[0], lr.where());
  auto nnz = ioutil::parse_number<std::size_t>(header[1], lr.where());
  std::vector<std::vector<SimilarityEntry>> columns(n_items);
  std::size_t seen = 0;
  while (lr.next(line)) {
    auto toks = ioutil::split_tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 3)
      throw ParseError(lr.where() + ": entry must be 'row col value'");
    auto row = ioutil::parse_number<item_t>(toks[0], lr.where());
    auto col = ioutil::parse_number<item_t>(toks[1], lr.where());
    auto value = ioutil::parse_number<double>(toks[2], lr.where());
    if (col >= n_items)
      throw ParseError(lr.where() + ": column index " + std::to_string(col) +
                       " out of range for " + std::to_string(n_items) +
                       " items");
    if (++seen > nnz)
      throw ParseError(lr.where() + ": more entries than the header's nnz");
    columns[col].push_back({row, value});
  }
  if (seen != nnz)
    throw ParseError(path + ": header promises " + std::to_string(nnz) +
                     " entries, found " + std::to_string(seen));
  return SimilarityMatrix(n_items, std::move(columns));
}

inline void save_similarity_binary(const SimilarityMatrix& S,
                                   const std::string& path) {
  auto out = ioutil::open_output(path, std::ios::binary);
  ioutil::put_le<std::uint64_t>(out, S.n_items());
  ioutil::put_le<std::uint64_t>(out, S.nnz());
  for (const auto& [row, col, value] : S.to_triplets()) {
    ioutil::put_le<std::uint32_t>(out, row);
    ioutil::put_le<std::uint32_t>(out, col);
    ioutil::put_f64(out, value);
  }
  ioutil::finish_output(out, path);
}

inline SimilarityMatrix load_similarity_binary(const std::string& path) {
  auto in = ioutil::open_input(path, std::ios::binary);
  auto n_items = ioutil::get_le<std::uint64_t>(in, path, "n_items");
  auto nnz = ioutil::get_le<std::uint64_t>(in, path, "nnz");
  std::vector<std::vector<SimilarityEntry>> columns(n_items);
  for (std::uint64_t k = 0; k < nnz; ++k) {
    auto row = ioutil::get_le<std::uint32_t>(in, path, "entry row");
    auto col = ioutil::get_le<std::uint32_t>(in, path, "entry col");
    double value = ioutil::get_f64(in, path, "entry value");
    if (col >= n_items)
      throw ParseError(path + ": column index " + std::to_string(col) +
                       " out of range for " + std::to_string(n_items) +
                       " items");
    columns[col].push_back({row, value});
  }
  ioutil::expect_eof(in, path);
  return SimilarityMatrix(static_cast<std::size_t>(n_items),
                          std::move(columns));
}

// --------------------------------------------------------------------------
// Embedding tables
//
// Binary only: u32 magic "DCFE", u32 version, u64 n_users, u64 n_items,
// u64 dim, then n_users*dim f32 user rows and n_items*dim f32 item rows,
// row-major. Round-trip is bit-exact.
// --------------------------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingMagic = 0x45464344u;  // "DCFE"
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void save_embeddings(const EmbeddingTable& E, const std::string& path) {
  auto out = ioutil::open_output(path, std::ios::binary);
  ioutil::put_le(out, kEmbeddingMagic);
  ioutil::put_le(out, kEmbeddingVersion);
  ioutil::put_le<std::uint64_t>(out, E.n_users());
  ioutil::put_le<std::uint64_t>(out, E.n_items());
  ioutil::put_le<std::uint64_t>(out, E.dim());
  for (float v : E.user_data()) ioutil::put_f32(out, v);
  for (float v : E.item_data()) ioutil::put_f32(out, v);
  ioutil::finish_output(out, path);
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  auto in = ioutil::open_input(path, std::ios::binary);
  auto magic = ioutil::get_le<std::uint32_t>(in, path, "magic");
  if (magic != kEmbeddingMagic)
    throw ParseError(path + ": bad magic, not an embedding file");
  auto version = ioutil::get_le<std::uint32_t>(in, path, "version");
  if (version != kEmbeddingVersion)
    throw ParseError(path + ": unsupported embedding format version " +
                     std::to_string(version));
  auto n_users = ioutil::get_le<std::uint64_t>(in, path, "n_users");
  auto n_items = ioutil::get_le<std::uint64_t>(in, path, "n_items");
  auto dim = ioutil::get_le<std::uint64_t>(in, path, "dim");
  constexpr auto cap = std::numeric_limits<std::size_t>::max();
  if (dim != 0 && (n_users > cap / dim || n_items > cap / dim))
    throw ParseError(path + ": header sizes overflow");
  EmbeddingTable E(static_cast<std::size_t>(n_users),
                   static_cast<std::size_t>(n_items),
                   static_cast<std::size_t>(dim));
  for (float& v : E.user_data()) v = ioutil::get_f32(in, path, "user value");
  for (float& v : E.item_data()) v = ioutil::get_f32(in, path, "item value");
  ioutil::expect_eof(in, path);
  return E;
}

// --------------------------------------------------------------------------
// Interaction matrices with provenance
//
// One "user item weight tag" line per entry in (user, item) order, where tag
// names how the entry arose (observed or one of the pseudo-label channels).
// This is the persistence form for augmented matrices; plain datasets load
// through load_dataset.
// --------------------------------------------------------------------------

inline void save_interactions_text(const InteractionMatrix& R,
                                   const std::string& path) {
  auto out = ioutil::open_output(path);
  for (const Triplet& t : R.to_triplets())
    out << t.user << ' ' << t.item << ' ' << format_real(t.weight) << ' '
        << provenance_name(t.tag) << '\n';
  ioutil::finish_output(out, path);
}

namespace ioutil {

inline std::vector<Triplet> read_triplet_lines(const std::string& path) {
  auto in = open_input(path);
  LineReader lr{in, path};
  std::vector<Triplet> triplets;
  std::string line;
  while (lr.next(line)) {
    auto toks = split_tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 4)
      throw ParseError(lr.where() + ": line must be 'user item weight tag'");
    Triplet t;
    t.user = parse_number<user_t>(toks[0], lr.where());
    t.item = parse_number<item_t>(toks[1], lr.where());
    t.weight = parse_number<float>(toks[2], lr.where());
    try {
      t.tag = provenance_from_name(std::string(toks[3]));
    } catch (const ParseError& e) {
      throw ParseError(lr.where() + ": " + e.what());
    }
    triplets.push_back(t);
  }
  return triplets;
}

}  // namespace ioutil

inline InteractionMatrix load_interactions_text(const std::string& path,
                                                std::size_t n_users,
                                                std::size_t n_items) {
  return csr_from_triplets(ioutil::read_triplet_lines(path), n_users, n_items);
}

/// Shape inferred as (max index + 1) per axis; trailing empty rows or columns
/// are not representable this way, so prefer the explicit-shape overload when
/// the shape is known.
inline InteractionMatrix load_interactions_text(const std::string& path) {
  auto triplets = ioutil::read_triplet_lines(path);
  std::size_t n_users = 0, n_items = 0;
  for (const Triplet& t : triplets) {
    n_users = std::max(n_users, static_cast<std::size_t>(t.user) + 1);
    n_items = std::max(n_items, static_cast<std::size_t>(t.item) + 1);
  }
  return csr_from_triplets(triplets, n_users, n_items);
}

// --------------------------------------------------------------------------
// Id maps
//
// Two-column text: "dense_index external_id" per line, indices dense and
// ascending from 0. External ids are whitespace-free tokens by construction
// (they come from whitespace-split input files).
// --------------------------------------------------------------------------

inline void save_id_map(const std::vector<std::string>& ids,
                        const std::string& path) {
  auto out = ioutil::open_output(path);
  for (std::size_t k = 0; k < ids.size(); ++k)
    out << k << '\t' << ids[k] << '\n';
  ioutil::finish_output(out, path);
}

inline std::vector<std::string> load_id_map(const std::string& path) {
  auto in = ioutil::open_input(path);
  ioutil::LineReader lr{in, path};
  std::vector<std::string> ids;
  std::string line;
  while (lr.next(line)) {
    auto toks = ioutil::split_tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw ParseError(lr.where() + ": id map line must be 'index id'");
    auto idx = ioutil::parse_number<std::size_t>(toks[0], lr.where());
    if (idx != ids.size())
      throw ParseError(lr.where() +
                       ": indices must be dense and ascending from 0");
    ids.emplace_back(toks[1]);
  }
  return ids;
}

// --------------------------------------------------------------------------
// Report emitters
//
// Key-value form: one "key<TAB>value" line per field, machine-parsable with
// read_key_value. Table form: TSV grids meant for plotting. Exact keys and
// columns are listed in the README.
// --------------------------------------------------------------------------

inline void write_metrics_report(std::ostream& os, const MetricsReport& rep) {
  ioutil::kv(os, "users_evaluated", std::to_string(rep.users_evaluated));
  ioutil::kv(os, "runtime_seconds", format_real(rep.runtime_seconds));
  for (const auto& [k, v] : rep.recall_at_k)
    ioutil::kv(os, "recall_at_" + std::to_string(k), format_real(v));
  for (const auto& [k, v] : rep.ndcg_at_k)
    ioutil::kv(os, "ndcg_at_" + std::to_string(k), format_real(v));
  for (int b = 0; b < 3; ++b) {
    const std::string name = bucket_name(static_cast<Bucket>(b));
    const BucketMetrics& bm = rep.per_bucket[static_cast<std::size_t>(b)];
    ioutil::kv(os, name + "_users", std::to_string(bm.users_counted));
    for (const auto& [k, v] : bm.recall)
      ioutil::kv(os, name + "_recall_at_" + std::to_string(k), format_real(v));
    for (const auto& [k, v] : bm.ndcg)
      ioutil::kv(os, name + "_ndcg_at_" + std::to_string(k), format_real(v));
  }
  if (!rep.config_snapshot.empty()) {
    std::string flat = rep.config_snapshot;
    for (char& c : flat)
      if (c == '\n' || c == '\t' || c == '\r') c = ' ';
    ioutil::kv(os, "config", flat);
  }
}

inline void write_metrics_table(std::ostream& os, const MetricsReport& rep) {
  os << "bucket\tusers";
  for (const auto& [k, v] : rep.recall_at_k) os << "\trecall@" << k;
  for (const auto& [k, v] : rep.ndcg_at_k) os << "\tndcg@" << k;
  os << '\n';
  os << "overall\t" << rep.users_evaluated;
  for (const auto& [k, v] : rep.recall_at_k) os << '\t' << format_real(v);
  for (const auto& [k, v] : rep.ndcg_at_k) os << '\t' << format_real(v);
  os << '\n';
  for (int b = 0; b < 3; ++b) {
    const BucketMetrics& bm = rep.per_bucket[static_cast<std::size_t>(b)];
    os << bucket_name(static_cast<Bucket>(b)) << '\t' << bm.users_counted;
    for (const auto& [k, v] : rep.recall_at_k)
      os << '\t' << format_real(ioutil::lookup_or_nan(bm.recall, k));
    for (const auto& [k, v] : rep.ndcg_at_k)
      os << '\t' << format_real(ioutil::lookup_or_nan(bm.ndcg, k));
    os << '\n';
  }
}

namespace ioutil {

inline void kv_snr_stats(std::ostream& os, const std::string& prefix,
                         const SnrStats& s) {
  kv(os, prefix + "_count", std::to_string(s.count));
  kv(os, prefix + "_mean", format_real(s.mean));
  kv(os, prefix + "_stddev", format_real(s.stddev));
  kv(os, prefix + "_snr", format_real(s.snr));
  kv(os, prefix + "_degenerate", s.degenerate ? "1" : "0");
}

inline void snr_table_row(std::ostream& os, std::string_view view,
                          std::string_view bucket, const SnrStats& s) {
  os << view << '\t' << bucket << '\t' << s.count << '\t'
     << format_real(s.mean) << '\t' << format_real(s.stddev) << '\t'
     << format_real(s.snr) << '\t' << (s.degenerate ? '1' : '0') << '\n';
}

}  // namespace ioutil

inline void write_snr_report(std::ostream& os, const SnrReport& rep) {
  ioutil::kv(os, "k_neg", std::to_string(rep.k_neg));
  ioutil::kv(os, "seed", std::to_string(rep.seed));
  ioutil::kv(os, "beta", format_real(rep.beta));
  ioutil::kv(os, "rho_defined", rep.rho_defined ? "1" : "0");
  if (rep.rho_defined) ioutil::kv(os, "rho", format_real(rep.rho));
  const std::pair<const char*, const SnrViewStats*> views[] = {
      {"dense", &rep.dense}, {"sparse", &rep.sparse}, {"fused", &rep.fused}};
  for (const auto& [name, stats] : views) {
    ioutil::kv_snr_stats(os, name, stats->overall);
    for (int b = 0; b < 3; ++b)
      ioutil::kv_snr_stats(
          os, std::string(name) + "_" + bucket_name(static_cast<Bucket>(b)),
          stats->per_bucket[static_cast<std::size_t>(b)]);
  }
}

inline void write_snr_table(std::ostream& os, const SnrReport& rep) {
  os << "view\tbucket\tcount\tmean\tstddev\tsnr\tdegenerate\n";
  const std::pair<const char*, const SnrViewStats*> views[] = {
      {"dense", &rep.dense}, {"sparse", &rep.sparse}, {"fused", &rep.fused}};
  for (const auto& [name, stats] : views) {
    ioutil::snr_table_row(os, name, "overall", stats->overall);
    for (int b = 0; b < 3; ++b)
      ioutil::snr_table_row(os, name, bucket_name(static_cast<Bucket>(b)),
                            stats->per_bucket[static_cast<std::size_t>(b)]);
  }
}

inline void write_theory_report(std::ostream& os, const TheoryLabReport& rep) {
  auto pf = [](bool ok) { return ok ? "pass" : "fail"; };
  ioutil::kv(os, "blend_boundaries", pf(rep.boundary_ok));
  ioutil::kv(os, "envelope_dominates", pf(rep.envelope_ok));
  ioutil::kv(os, "correlation_threshold", pf(rep.threshold_ok));
  ioutil::kv(os, "correlation_monotonicity", pf(rep.monotonic_rho_ok));
  ioutil::kv(os, "ceiling_bound", pf(rep.ceiling_ok));
  ioutil::kv(os, "ceiling_scaling", pf(rep.ceiling_scaling_ok));
  ioutil::kv(os, "normalized_scaling", pf(rep.normalized_ok));
  ioutil::kv(os, "view_gains", pf(rep.gains_ok));
  ioutil::kv(os, "tradeoff_condition", pf(rep.tradeoff_ok));
  ioutil::kv(os, "variance_decay", pf(rep.variance_decay_ok));
  ioutil::kv(os, "normalized_exponent", format_real(rep.normalized_exponent));
  ioutil::kv(os, "variance_exponent", format_real(rep.variance_exponent));
  ioutil::kv(os, "all", pf(rep.all_ok()));
}

// Path-based wrappers.

inline void write_metrics_report(const std::string& path,
                                 const MetricsReport& rep) {
  auto out = ioutil::open_output(path);
  write_metrics_report(out, rep);
  ioutil::finish_output(out, path);
}

inline void write_metrics_table(const std::string& path,
                                const MetricsReport& rep) {
  auto out = ioutil::open_output(path);
  write_metrics_table(out, rep);
  ioutil::finish_output(out, path);
}

inline void write_snr_report(const std::string& path, const SnrReport& rep) {
  auto out = ioutil::open_output(path);
  write_snr_report(out, rep);
  ioutil::finish_output(out, path);
}

inline void write_snr_table(const std::string& path, const SnrReport& rep) {
  auto out = ioutil::open_output(path);
  write_snr_table(out, rep);
  ioutil::finish_output(out, path);
}

inline void write_theory_report(const std::string& path,
                                const TheoryLabReport& rep) {
  auto out = ioutil::open_output(path);
  write_theory_report(out, rep);
  ioutil::finish_output(out, path);
}

/// Reads a key-value report back into a map. Blank lines are skipped; a line
/// without a TAB or a duplicated key is malformed.
inline std::map<std::string, std::string> read_key_value(
    const std::string& path) {
  auto in = ioutil::open_input(path);
  ioutil::LineReader lr{in, path};
  std::map<std::string, std::string> out;
  std::string line;
  while (lr.next(line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw ParseError(lr.where() + ": expected 'key<TAB>value'");
    std::string key = line.substr(0, tab);
    if (!out.emplace(key, line.substr(tab + 1)).second)
      throw ParseError(lr.where() + ": duplicate key '" + key + "'");
  }
  return out;
}

}  // namespace dualcf
