#include "dualcf/io.hpp"

#include <gtest/gtest.h>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "testutil.hpp"

namespace dualcf {
namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(bool(in)) << path;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Byte-string builders used to pin binary layouts by hand.
void append_le32(std::string& s, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) s.push_back(char((v >> (8 * b)) & 0xffu));
}

void append_le64(std::string& s, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) s.push_back(char((v >> (8 * b)) & 0xffu));
}

void append_f32(std::string& s, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_le32(s, bits);
}

void append_f64(std::string& s, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_le64(s, bits);
}

// 3 items; column 1 receives from row 0, column 0 receives from row 2.
SimilarityMatrix tiny_similarity() {
  std::vector<std::vector<SimilarityEntry>> cols(3);
  cols[1].push_back({0, 0.5});
  cols[0].push_back({2, -0.25});
  return SimilarityMatrix(3, std::move(cols));
}

SimilarityMatrix awkward_similarity() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::vector<SimilarityEntry>> cols(12);
  auto reserved = [](item_t j, item_t i) {
    return (j == 11 && i == 0) || (j == 7 && i == 2) || (j == 9 && i == 3) ||
           (j == 1 && i == 4);
  };
  for (item_t i = 0; i < 12; ++i) {
    for (item_t j = 0; j < 12; ++j) {
      if (j == i || reserved(j, i) || rng() % 3 != 0) continue;
      cols[i].push_back({j, unit(rng)});
    }
  }
  cols[0].push_back({11, 1.0 / 3.0});
  cols[2].push_back({7, 1e-300});
  cols[3].push_back({9, 6.02214076e23});
  cols[4].push_back({1, std::nextafter(0.5, 1.0)});
  return SimilarityMatrix(12, std::move(cols));
}

TEST(FormatReal, ShortestFormRoundTrips) {
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(-0.25), "-0.25");
  EXPECT_EQ(format_real(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_real(0.1f), "0.1");

  for (double v : {1.0 / 3.0, 1e-300, 6.02214076e23, std::nextafter(0.5, 1.0),
                   -0.0, 12345.6789}) {
    std::string text = format_real(v);
    double back = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), back);
    ASSERT_EQ(res.ec, std::errc{}) << text;
    EXPECT_EQ(std::memcmp(&back, &v, sizeof(v)), 0) << text;
  }
}

TEST(SimilarityText, SaveMatchesHandFormat) {
  testutil::TempDir dir("io-sim-text");
  auto path = dir.file("s.txt");
  save_similarity_text(tiny_similarity(), path);
  EXPECT_EQ(read_bytes(path), "3 2\n0 1 0.5\n2 0 -0.25\n");
}

TEST(SimilarityText, HandFormattedFileParses) {
  testutil::TempDir dir("io-sim-text");
  auto path = dir.file("s.txt");
  testutil::write_file(path, "3 2\n\n0 1 0.5\n2 0 -0.25\n");
  SimilarityMatrix S = load_similarity_text(path);
  EXPECT_EQ(S.n_items(), 3u);
  EXPECT_EQ(S.nnz(), 2u);
  EXPECT_EQ(S.at(0, 1), 0.5);
  EXPECT_EQ(S.at(2, 0), -0.25);
  EXPECT_EQ(S.at(1, 0), 0.0);
}

TEST(SimilarityText, RoundTripPreservesEveryValueExactly) {
  testutil::TempDir dir("io-sim-text");
  SimilarityMatrix S = awkward_similarity();
  auto first = dir.file("a.txt");
  auto second = dir.file("b.txt");
  save_similarity_text(S, first);
  SimilarityMatrix L = load_similarity_text(first);
  ASSERT_EQ(L.n_items(), S.n_items());
  ASSERT_EQ(L.nnz(), S.nnz());
  auto expect = S.to_triplets();
  auto got = L.to_triplets();
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t k = 0; k < expect.size(); ++k) {
    EXPECT_EQ(std::get<0>(got[k]), std::get<0>(expect[k]));
    EXPECT_EQ(std::get<1>(got[k]), std::get<1>(expect[k]));
    EXPECT_EQ(std::get<2>(got[k]), std::get<2>(expect[k]));
  }
  save_similarity_text(L, second);
  EXPECT_EQ(read_bytes(first), read_bytes(second));
}

TEST(SimilarityText, MalformedInputsRaiseLineNumberedErrors) {
  testutil::TempDir dir("io-sim-text");
  auto path = dir.file("s.txt");
  auto expect_parse_error = [&](const std::string& content,
                                const std::string& fragment) {
    testutil::write_file(path, content);
    try {
      load_similarity_text(path);
      FAIL() << "expected ParseError for: " << content;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos)
          << e.what();
    }
  };
  expect_parse_error("", "empty file");
  expect_parse_error("3\n", "header");
  expect_parse_error("3 2 9\n", "header");
  expect_parse_error("3 1\n0 1\n", ":2:");
  expect_parse_error("3 1\n0 1 zebra\n", "not a valid number");
  expect_parse_error("3 1\n0 7 0.5\n", "out of range");
  expect_parse_error("3 2\n0 1 0.5\n", "found 1");
  expect_parse_error("3 1\n0 1 0.5\n2 0 0.5\n", "more entries");

  testutil::write_file(path, "3 2\n0 1 0.5\n0 1 0.7\n");
  EXPECT_THROW(load_similarity_text(path), DuplicateEntry);
  testutil::write_file(path, "3 1\n1 1 0.5\n");
  EXPECT_THROW(load_similarity_text(path), DuplicateEntry);
  testutil::write_file(path, "3 1\n7 1 0.5\n");
  EXPECT_THROW(load_similarity_text(path), IndexError);
  EXPECT_THROW(load_similarity_text(dir.file("missing.txt")), ParseError);
}

TEST(SimilarityBinary, LayoutIsLittleEndianWithPinnedHeader) {
  std::vector<std::vector<SimilarityEntry>> cols(2);
  cols[1].push_back({0, 1.5});
  SimilarityMatrix S(2, std::move(cols));

  std::string expect;
  append_le64(expect, 2);
  append_le64(expect, 1);
  append_le32(expect, 0);
  append_le32(expect, 1);
  append_f64(expect, 1.5);

  testutil::TempDir dir("io-sim-bin");
  auto path = dir.file("s.bin");
  save_similarity_binary(S, path);
  EXPECT_EQ(read_bytes(path), expect);

  SimilarityMatrix L = load_similarity_binary(path);
  EXPECT_EQ(L.n_items(), 2u);
  EXPECT_EQ(L.nnz(), 1u);
  EXPECT_EQ(L.at(0, 1), 1.5);
}

TEST(SimilarityBinary, RoundTripIsByteIdentical) {
  testutil::TempDir dir("io-sim-bin");
  SimilarityMatrix S = awkward_similarity();
  auto first = dir.file("a.bin");
  auto second = dir.file("b.bin");
  save_similarity_binary(S, first);
  SimilarityMatrix L = load_similarity_binary(first);
  save_similarity_binary(L, second);
  EXPECT_EQ(read_bytes(first), read_bytes(second));
  ASSERT_EQ(L.nnz(), S.nnz());
  for (const auto& [row, col, value] : S.to_triplets())
    EXPECT_EQ(L.at(row, col), value);
}

TEST(SimilarityBinary, TruncatedOrPaddedFilesRaise) {
  testutil::TempDir dir("io-sim-bin");
  auto path = dir.file("s.bin");
  save_similarity_binary(tiny_similarity(), path);
  std::string bytes = read_bytes(path);

  testutil::write_file(path, bytes.substr(0, bytes.size() - 3));
  try {
    load_similarity_binary(path);
    FAIL() << "expected ParseError for truncated file";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }

  testutil::write_file(path, bytes + "x");
  try {
    load_similarity_binary(path);
    FAIL() << "expected ParseError for trailing bytes";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("trailing"), std::string::npos);
  }
}

EmbeddingTable patterned_embeddings() {
  EmbeddingTable E(3, 4, 5);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> unit(-2.0f, 2.0f);
  for (float& v : E.user_data()) v = unit(rng);
  for (float& v : E.item_data()) v = unit(rng);
  E.user_data()[0] = -0.0f;
  E.user_data()[1] = std::numeric_limits<float>::denorm_min();
  E.item_data()[0] = std::numeric_limits<float>::max();
  E.item_data()[1] = -std::numeric_limits<float>::min();
  return E;
}

TEST(Embeddings, RoundTripIsBitExact) {
  testutil::TempDir dir("io-emb");
  EmbeddingTable E = patterned_embeddings();
  auto first = dir.file("a.emb");
  auto second = dir.file("b.emb");
  save_embeddings(E, first);
  EmbeddingTable L = load_embeddings(first);
  ASSERT_EQ(L.n_users(), E.n_users());
  ASSERT_EQ(L.n_items(), E.n_items());
  ASSERT_EQ(L.dim(), E.dim());
  ASSERT_EQ(L.user_data().size(), E.user_data().size());
  EXPECT_EQ(std::memcmp(L.user_data().data(), E.user_data().data(),
                        E.user_data().size() * sizeof(float)),
            0);
  EXPECT_EQ(std::memcmp(L.item_data().data(), E.item_data().data(),
                        E.item_data().size() * sizeof(float)),
            0);
  save_embeddings(L, second);
  EXPECT_EQ(read_bytes(first), read_bytes(second));
}

TEST(Embeddings, HeaderAndPayloadBytesArePinned) {
  EmbeddingTable E(1, 1, 1);
  E.user_data()[0] = 1.0f;
  E.item_data()[0] = 2.0f;

  std::string expect;
  expect += "DCFE";
  append_le32(expect, 1);
  append_le64(expect, 1);
  append_le64(expect, 1);
  append_le64(expect, 1);
  append_f32(expect, 1.0f);
  append_f32(expect, 2.0f);

  testutil::TempDir dir("io-emb");
  auto path = dir.file("e.emb");
  save_embeddings(E, path);
  EXPECT_EQ(read_bytes(path), expect);
}

TEST(Embeddings, RejectsForeignOrCorruptFiles) {
  testutil::TempDir dir("io-emb");
  auto path = dir.file("e.emb");
  save_embeddings(patterned_embeddings(), path);
  std::string bytes = read_bytes(path);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  testutil::write_file(path, wrong_magic);
  try {
    load_embeddings(path);
    FAIL() << "expected ParseError for bad magic";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }

  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  testutil::write_file(path, wrong_version);
  try {
    load_embeddings(path);
    FAIL() << "expected ParseError for bad version";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  testutil::write_file(path, bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(load_embeddings(path), ParseError);
  testutil::write_file(path, bytes + "zz");
  EXPECT_THROW(load_embeddings(path), ParseError);
}

InteractionMatrix tagged_interactions() {
  std::vector<Triplet> trips = {
      {0, 1, 1.0f, Provenance::observed},
      {0, 3, 0.25f, Provenance::pseudo_s2d},
      {2, 0, 1.0f, Provenance::pseudo_d2s},
  };
  return csr_from_triplets(trips, 3, 4);
}

TEST(InteractionText, HandFormatIsPinned) {
  testutil::TempDir dir("io-int");
  auto path = dir.file("r.txt");
  save_interactions_text(tagged_interactions(), path);
  EXPECT_EQ(read_bytes(path),
            "0 1 1 observed\n0 3 0.25 pseudo_s2d\n2 0 1 pseudo_d2s\n");
}

TEST(InteractionText, RoundTripKeepsWeightsAndProvenance) {
  testutil::TempDir dir("io-int");
  auto path = dir.file("r.txt");
  InteractionMatrix R = tagged_interactions();
  save_interactions_text(R, path);

  InteractionMatrix L = load_interactions_text(path, 3, 4);
  ASSERT_EQ(L.n_users(), 3u);
  ASSERT_EQ(L.n_items(), 4u);
  auto expect = R.to_triplets();
  auto got = L.to_triplets();
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t k = 0; k < expect.size(); ++k) {
    EXPECT_EQ(got[k].user, expect[k].user);
    EXPECT_EQ(got[k].item, expect[k].item);
    EXPECT_EQ(got[k].weight, expect[k].weight);
    EXPECT_EQ(got[k].tag, expect[k].tag);
  }

  InteractionMatrix inferred = load_interactions_text(path);
  EXPECT_EQ(inferred.n_users(), 3u);
  EXPECT_EQ(inferred.n_items(), 4u);
  EXPECT_EQ(inferred.nnz(), 3u);
}

TEST(InteractionText, ExplicitShapeKeepsEmptyTrailingRows) {
  testutil::TempDir dir("io-int");
  auto path = dir.file("r.txt");
  save_interactions_text(tagged_interactions(), path);
  InteractionMatrix L = load_interactions_text(path, 10, 9);
  EXPECT_EQ(L.n_users(), 10u);
  EXPECT_EQ(L.n_items(), 9u);
  EXPECT_EQ(L.nnz(), 3u);
}

TEST(InteractionText, MalformedLinesRaise) {
  testutil::TempDir dir("io-int");
  auto path = dir.file("r.txt");

  testutil::write_file(path, "0 1 1\n");
  try {
    load_interactions_text(path, 3, 4);
    FAIL() << "expected ParseError for short line";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos);
  }

  testutil::write_file(path, "0 1 1 observed\n0 2 1 mystery\n");
  try {
    load_interactions_text(path, 3, 4);
    FAIL() << "expected ParseError for unknown tag";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }

  testutil::write_file(path, "0 1 soft observed\n");
  EXPECT_THROW(load_interactions_text(path, 3, 4), ParseError);
  testutil::write_file(path, "0 1 1.5 pseudo_s2d\n");
  EXPECT_THROW(load_interactions_text(path, 3, 4), NumericError);
  testutil::write_file(path, "0 1 0.5 observed\n");
  EXPECT_THROW(load_interactions_text(path, 3, 4), NumericError);
  testutil::write_file(path, "0 1 1 observed\n0 1 1 observed\n");
  EXPECT_THROW(load_interactions_text(path, 3, 4), DuplicateEntry);
  testutil::write_file(path, "9 1 1 observed\n");
  EXPECT_THROW(load_interactions_text(path, 3, 4), IndexError);
}

TEST(IdMap, RoundTripPreservesOrder) {
  testutil::TempDir dir("io-ids");
  auto path = dir.file("ids.txt");
  std::vector<std::string> ids = {"u42", "alpha", "7"};
  save_id_map(ids, path);
  EXPECT_EQ(read_bytes(path), "0\tu42\n1\talpha\n2\t7\n");
  EXPECT_EQ(load_id_map(path), ids);

  save_id_map({}, path);
  EXPECT_TRUE(load_id_map(path).empty());
}

TEST(IdMap, RejectsNonDenseIndices) {
  testutil::TempDir dir("io-ids");
  auto path = dir.file("ids.txt");
  testutil::write_file(path, "0\ta\n2\tb\n");
  EXPECT_THROW(load_id_map(path), ParseError);
  testutil::write_file(path, "1\ta\n");
  EXPECT_THROW(load_id_map(path), ParseError);
  testutil::write_file(path, "0\ta b\n");
  EXPECT_THROW(load_id_map(path), ParseError);
  testutil::write_file(path, "zero\ta\n");
  EXPECT_THROW(load_id_map(path), ParseError);
}

MetricsReport sample_metrics() {
  MetricsReport rep;
  rep.recall_at_k = {{10, 0.5}, {20, 0.75}};
  rep.ndcg_at_k = {{10, 0.4}, {20, 0.6}};
  rep.users_evaluated = 42;
  rep.runtime_seconds = 1.5;
  rep.config_snapshot = "beta=3\nk=20";
  for (int b = 0; b < 3; ++b) {
    auto& bm = rep.per_bucket[std::size_t(b)];
    bm.users_counted = std::size_t(10 + b);
    bm.recall = {{10, 0.1 * (b + 1)}, {20, 0.2 * (b + 1)}};
    bm.ndcg = {{10, 0.05 * (b + 1)}, {20, 0.1 * (b + 1)}};
  }
  return rep;
}

TEST(MetricsReportIo, KeyValueFieldsAreCompleteAndParseBack) {
  testutil::TempDir dir("io-metrics");
  auto path = dir.file("metrics.tsv");
  MetricsReport rep = sample_metrics();
  write_metrics_report(path, rep);

  auto kv = read_key_value(path);
  EXPECT_EQ(kv.at("users_evaluated"), "42");
  EXPECT_EQ(kv.at("runtime_seconds"), "1.5");
  EXPECT_EQ(kv.at("recall_at_10"), "0.5");
  EXPECT_EQ(kv.at("recall_at_20"), "0.75");
  EXPECT_EQ(kv.at("ndcg_at_20"), "0.6");
  EXPECT_EQ(kv.at("unpopular_users"), "10");
  EXPECT_EQ(kv.at("normal_users"), "11");
  EXPECT_EQ(kv.at("popular_users"), "12");
  EXPECT_EQ(kv.at("popular_recall_at_20"), format_real(0.2 * 3));
  EXPECT_EQ(kv.at("normal_ndcg_at_10"), "0.1");
  EXPECT_EQ(kv.at("config"), "beta=3 k=20");
  EXPECT_EQ(kv.size(), 6u + 3u * 5u + 1u);
}

TEST(MetricsReportIo, TableGridHasBucketRows) {
  testutil::TempDir dir("io-metrics");
  auto path = dir.file("metrics_grid.tsv");
  write_metrics_table(path, sample_metrics());

  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0],
            "bucket\tusers\trecall@10\trecall@20\tndcg@10\tndcg@20");
  EXPECT_EQ(lines[1], "overall\t42\t0.5\t0.75\t0.4\t0.6");
  EXPECT_EQ(lines[2], "unpopular\t10\t0.1\t0.2\t0.05\t0.1");
  EXPECT_EQ(lines[4].substr(0, 10), "popular\t12");
}

SnrReport sample_snr() {
  SnrReport rep;
  rep.k_neg = 100;
  rep.seed = 42;
  rep.beta = 3.0;
  rep.rho = 0.25;
  rep.rho_defined = true;
  auto stats = [](std::size_t n, double mean, double sd) {
    SnrStats s;
    s.count = n;
    s.mean = mean;
    s.stddev = sd;
    s.snr = sd > 0 ? mean / sd : std::numeric_limits<double>::infinity();
    s.degenerate = sd <= 0;
    return s;
  };
  rep.dense.overall = stats(400, 1.0, 2.0);
  rep.sparse.overall = stats(400, 0.5, 1.0);
  rep.fused.overall = stats(400, 2.5, 4.0);
  for (int b = 0; b < 3; ++b) {
    rep.dense.per_bucket[std::size_t(b)] = stats(100, 0.5 * (b + 1), 1.0);
    rep.sparse.per_bucket[std::size_t(b)] = stats(100, 0.25, 0.5);
    rep.fused.per_bucket[std::size_t(b)] = stats(100, 1.0, 0.0);
  }
  return rep;
}

TEST(SnrReportIo, KeyValueCoversEveryViewAndBucket) {
  testutil::TempDir dir("io-snr");
  auto path = dir.file("snr.tsv");
  SnrReport rep = sample_snr();
  write_snr_report(path, rep);

  auto kv = read_key_value(path);
  EXPECT_EQ(kv.at("k_neg"), "100");
  EXPECT_EQ(kv.at("seed"), "42");
  EXPECT_EQ(kv.at("beta"), "3");
  EXPECT_EQ(kv.at("rho_defined"), "1");
  EXPECT_EQ(kv.at("rho"), "0.25");
  EXPECT_EQ(kv.at("dense_snr"), "0.5");
  EXPECT_EQ(kv.at("dense_count"), "400");
  EXPECT_EQ(kv.at("sparse_normal_mean"), "0.25");
  EXPECT_EQ(kv.at("fused_unpopular_snr"), "inf");
  EXPECT_EQ(kv.at("fused_unpopular_degenerate"), "1");
  EXPECT_EQ(kv.at("dense_popular_mean"), "1.5");
  EXPECT_EQ(kv.size(), 5u + 3u * 4u * 5u);

  SnrReport hidden = rep;
  hidden.rho_defined = false;
  auto path2 = dir.file("snr2.tsv");
  write_snr_report(path2, hidden);
  auto kv2 = read_key_value(path2);
  EXPECT_EQ(kv2.at("rho_defined"), "0");
  EXPECT_EQ(kv2.count("rho"), 0u);
}

TEST(SnrReportIo, TableGridListsViewBucketRows) {
  testutil::TempDir dir("io-snr");
  auto path = dir.file("snr_grid.tsv");
  write_snr_table(path, sample_snr());

  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 1u + 3u * 4u);
  EXPECT_EQ(lines[0], "view\tbucket\tcount\tmean\tstddev\tsnr\tdegenerate");
  EXPECT_EQ(lines[1], "dense\toverall\t400\t1\t2\t0.5\t0");
  EXPECT_EQ(lines[2], "dense\tunpopular\t100\t0.5\t1\t0.5\t0");
  EXPECT_EQ(lines[10], "fused\tunpopular\t100\t1\t0\tinf\t1");
}

TEST(TheoryReportIo, EmitsPassFailPerCheckAndExponents) {
  TheoryLabReport rep;
  rep.boundary_ok = true;
  rep.envelope_ok = true;
  rep.threshold_ok = false;
  rep.monotonic_rho_ok = true;
  rep.ceiling_ok = true;
  rep.ceiling_scaling_ok = true;
  rep.normalized_ok = true;
  rep.gains_ok = true;
  rep.tradeoff_ok = true;
  rep.variance_decay_ok = true;
  rep.normalized_exponent = 0.501;
  rep.variance_exponent = -0.997;

  testutil::TempDir dir("io-theory");
  auto path = dir.file("theory.tsv");
  write_theory_report(path, rep);

  auto kv = read_key_value(path);
  EXPECT_EQ(kv.at("blend_boundaries"), "pass");
  EXPECT_EQ(kv.at("correlation_threshold"), "fail");
  EXPECT_EQ(kv.at("ceiling_bound"), "pass");
  EXPECT_EQ(kv.at("variance_decay"), "pass");
  EXPECT_EQ(kv.at("normalized_exponent"), format_real(0.501));
  EXPECT_EQ(kv.at("variance_exponent"), format_real(-0.997));
  EXPECT_EQ(kv.at("all"), "fail");
  EXPECT_EQ(kv.size(), 13u);

  rep.threshold_ok = true;
  write_theory_report(path, rep);
  EXPECT_EQ(read_key_value(path).at("all"), "pass");
}

TEST(KeyValueReader, MalformedLinesRaise) {
  testutil::TempDir dir("io-kv");
  auto path = dir.file("kv.tsv");
  testutil::write_file(path, "a\t1\n\nb\t2\n");
  auto kv = read_key_value(path);
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("b"), "2");

  testutil::write_file(path, "a 1\n");
  EXPECT_THROW(read_key_value(path), ParseError);
  testutil::write_file(path, "a\t1\na\t2\n");
  EXPECT_THROW(read_key_value(path), ParseError);
  testutil::write_file(path, "\tvalue\n");
  EXPECT_THROW(read_key_value(path), ParseError);
  EXPECT_THROW(read_key_value(dir.file("missing.tsv")), ParseError);
}

}  // namespace
}  // namespace dualcf
