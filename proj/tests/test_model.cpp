#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "moma/model.hpp"

using namespace moma;
using model::AugDocTokens;
using model::ModelConfig;
using model::ModelParams;
using model::Role;
using nn::Tape;
using nn::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.model_dim = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.feedforward_dim = 24;
  cfg.max_query_len = 8;
  cfg.max_doc_len = 12;
  cfg.k_default = 4;
  return cfg;
}

std::vector<int> random_ids(int len, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(kNumReservedIds, vocab - 1);
  std::vector<int> ids(len);
  ids[0] = kClsId;
  for (int i = 1; i < len; ++i) ids[i] = dist(rng);
  return ids;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.model_dim = 15;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.max_query_len = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("encode is deterministic and truncates") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 42);
  std::mt19937_64 rng(0);
  auto ids = random_ids(6, cfg.vocab_size, rng);

  Tape t1(false), t2(false);
  auto a = model::encode(t1, params, ids, Role::query);
  auto b = model::encode(t2, params, ids, Role::query);
  CHECK(a.encoded.values() == b.encoded.values());

  auto long_ids = random_ids(cfg.max_doc_len + 40, cfg.vocab_size, rng);
  Tape t3(false);
  auto seg = model::encode(t3, params, long_ids, Role::document);
  CHECK(seg.encoded.rows() == cfg.max_doc_len);
  CHECK(static_cast<int>(seg.token_ids.size()) == cfg.max_doc_len);

  Tape t4(false);
  CHECK_THROWS_AS(model::encode(t4, params, {}, Role::query), std::invalid_argument);
}

TEST_CASE("position encoding distinguishes permuted tokens") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 7);
  std::vector<int> ids = {kClsId, 10, 11, 12};
  std::vector<int> swapped = {kClsId, 11, 10, 12};
  Tape t1(false), t2(false);
  auto a = model::encode(t1, params, ids, Role::query);
  auto b = model::encode(t2, params, swapped, Role::query);
  CHECK(a.encoded.values() != b.encoded.values());
}

TEST_CASE("embed_text shape and distinctness") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 3);
  std::mt19937_64 rng(1);
  Tape tape(false);
  Tensor e1 = model::embed_text(tape, params, random_ids(5, cfg.vocab_size, rng), Role::document);
  CHECK(e1.shape() == std::vector<int>{cfg.model_dim});
  Tensor e2 = model::embed_text(tape, params, random_ids(5, cfg.vocab_size, rng), Role::document);
  CHECK(e1.values() != e2.values());
}

TEST_CASE("dot of embeddings differentiates through the embedding table") {
  ModelConfig cfg = tiny_config();
  cfg.num_layers = 1;
  ModelParams params = ModelParams::init(cfg, 11);
  std::vector<int> q = {kClsId, 9, 17};
  std::vector<int> d = {kClsId, 21, 30, 12};

  auto fn = [&](Tape& t, std::vector<Tensor>&) {
    Tensor qe = model::embed_text(t, params, q, Role::query);
    Tensor de = model::embed_text(t, params, d, Role::document);
    return t.dot(qe, de);
  };
  params.zero_grads();
  auto report = moma::testing::finite_diff_check(fn, {params.token_embedding}, 1e-5, 40, 5);
  CHECK(report.entries_checked == 40);
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("fused embedding with no documents equals embed_text exactly") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 19);
  std::vector<int> q = {kClsId, 5, 6, 7};
  Tape t1(false), t2(false);
  auto fused = model::embed_query_fused(t1, params, q, {});
  Tensor plain = model::embed_text(t2, params, q, Role::query);
  CHECK(fused.embedding.values() == plain.values());
  CHECK(fused.segments.size() == 1);
}

TEST_CASE("fused attention rows cover query plus K documents") {
  // Row width follows the paper shape: full-length query plus K full docs.
  ModelConfig cfg = tiny_config();
  cfg.max_query_len = 32;
  cfg.max_doc_len = 128;
  cfg.k_default = 10;
  cfg.vocab_size = 256;
  ModelParams params = ModelParams::init(cfg, 23);
  std::mt19937_64 rng(2);

  auto q = random_ids(32, cfg.vocab_size, rng);
  std::vector<AugDocTokens> docs;
  for (int i = 0; i < 10; ++i) {
    // 128 content tokens; the [SEP] prefix is added and truncated inside.
    docs.push_back({DocKey{"m", "d" + std::to_string(i)},
                    random_ids(128, cfg.vocab_size, rng)});
  }
  Tape tape(false);
  auto fused = model::embed_query_fused(tape, params, q, docs);
  CHECK(fused.attention.total_positions() == 32 + 10 * 128);
  CHECK(fused.attention.rows.size() == static_cast<std::size_t>(cfg.num_layers));
  for (const auto& layer : fused.attention.rows) {
    CHECK(layer.size() == static_cast<std::size_t>(cfg.num_heads));
    for (const auto& row : layer) {
      CHECK(row.size() == static_cast<std::size_t>(32 + 10 * 128));
      double s = std::accumulate(row.begin(), row.end(), 0.0);
      CHECK(std::abs(s - 1.0) < 1e-10);
    }
  }
  CHECK(static_cast<int>(fused.segments.size()) == 11);

  std::vector<AugDocTokens> too_many(11, docs[0]);
  Tape t2(false);
  CHECK_THROWS_AS(model::embed_query_fused(t2, params, q, too_many), std::invalid_argument);
}

TEST_CASE("segments are encoded independently of each other") {
  // No cross-document attention in the encoder: the fused per-segment outputs
  // equal the outputs of encoding each segment on its own.
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 29);
  std::mt19937_64 rng(3);
  auto q = random_ids(4, cfg.vocab_size, rng);
  std::vector<AugDocTokens> docs;
  for (int i = 0; i < 3; ++i) {
    docs.push_back({DocKey{"m", "d" + std::to_string(i)},
                    random_ids(6, cfg.vocab_size, rng)});
  }
  Tape tape(false);
  auto fused = model::embed_query_fused(tape, params, q, docs);

  Tape solo(false);
  auto q_alone = model::encode(solo, params, q, Role::query);
  CHECK(fused.segments[0].encoded.values() == q_alone.encoded.values());
  for (int i = 0; i < 3; ++i) {
    std::vector<int> with_sep = {kSepId};
    with_sep.insert(with_sep.end(), docs[i].token_ids.begin(), docs[i].token_ids.end());
    auto d_alone = model::encode(solo, params, with_sep, Role::document);
    CHECK(fused.segments[i + 1].encoded.values() == d_alone.encoded.values());
  }
}

TEST_CASE("permuting documents permutes segment attention masses") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 31);
  std::mt19937_64 rng(4);
  auto q = random_ids(4, cfg.vocab_size, rng);
  std::vector<AugDocTokens> docs;
  for (int i = 0; i < 3; ++i) {
    docs.push_back({DocKey{"m", "d" + std::to_string(i)},
                    random_ids(5 + i, cfg.vocab_size, rng)});
  }
  std::vector<AugDocTokens> permuted = {docs[2], docs[0], docs[1]};

  auto segment_mass = [](const model::CrossAttentionRecord& rec) {
    std::map<std::string, double> mass;
    for (const auto& layer : rec.rows) {
      for (const auto& row : layer) {
        for (const auto& span : rec.segments) {
          if (span.is_query) continue;
          double m = 0;
          for (int p = span.begin; p < span.end; ++p) m += row[p];
          mass[span.doc.doc_id] += m;
        }
      }
    }
    return mass;
  };

  Tape t1(false), t2(false);
  auto a = model::embed_query_fused(t1, params, q, docs);
  auto b = model::embed_query_fused(t2, params, q, permuted);
  auto ma = segment_mass(a.attention);
  auto mb = segment_mass(b.attention);
  for (const auto& [doc, m] : ma) {
    CHECK(mb.at(doc) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("scoring is the plain dot product of the returned embeddings") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 37);
  std::mt19937_64 rng(5);
  auto q = random_ids(4, cfg.vocab_size, rng);
  auto d = random_ids(6, cfg.vocab_size, rng);
  Tape tape(false);
  auto fused = model::embed_query_fused(
      tape, params, q, {{DocKey{"m", "d0"}, random_ids(5, cfg.vocab_size, rng)}});
  Tensor de = model::embed_text(tape, params, d, Role::document);
  double manual = 0;
  for (int i = 0; i < cfg.model_dim; ++i) {
    manual += fused.embedding.values()[i] * de.values()[i];
  }
  CHECK(tape.dot(fused.embedding, de).item() == doctest::Approx(manual).epsilon(1e-15));
}

TEST_CASE("independent instances never share storage") {
  ModelConfig cfg = tiny_config();
  ModelParams a = ModelParams::init(cfg, 1);
  ModelParams b = a.clone();
  auto na = a.named();
  auto nb = b.named();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].second.id() != nb[i].second.id());
    CHECK(na[i].second.values() == nb[i].second.values());
  }
  // Mutating the clone leaves the original untouched.
  b.token_embedding.values()[0] += 1.0;
  CHECK(a.token_embedding.values()[0] != b.token_embedding.values()[0]);
  CHECK(a.checksum() != b.checksum());
}
