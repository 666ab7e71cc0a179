#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "moma/embedder.hpp"
#include "moma/memory.hpp"
#include "moma/model.hpp"
#include "moma/optimizer.hpp"

using namespace moma;
using memory::ApproxParams;

using memory::MemoryMixture;
using memory::SearchMode;
using memory::SearchResult;

namespace {

// Embeds documents by a fixed per-id table; unknown ids get zeros.
class TableEmbedder : public memory::DocumentEmbedder {
 public:
  TableEmbedder(int dim, std::map<std::string, std::vector<double>> table, std::string tag = "table")
      : dim_(dim), table_(std::move(table)), tag_(std::move(tag)) {}
  int dim() const override { return dim_; }
  std::vector<double> embed(const Document& doc) const override {
    auto it = table_.find(doc.doc_id);
    return it == table_.end() ? std::vector<double>(dim_, 0.0) : it->second;
  }
  std::string version_tag() const override { return tag_; }

 private:
  int dim_;
  std::map<std::string, std::vector<double>> table_;
  std::string tag_;
};

// Deterministic clustered vectors derived from the doc id: "c<cluster>_<n>".
class ClusterEmbedder : public memory::DocumentEmbedder {
 public:
  ClusterEmbedder(int dim, int clusters) : dim_(dim), clusters_(clusters) {}
  int dim() const override { return dim_; }
  std::vector<double> embed(const Document& doc) const override {
    const std::size_t h = std::hash<std::string>{}(doc.doc_id);
    const int cluster = static_cast<int>(h % clusters_);
    std::mt19937_64 rng(h);
    std::normal_distribution<double> noise(0.0, 0.25);
    std::vector<double> v = center(cluster);
    for (auto& x : v) x += noise(rng);
    return v;
  }
  std::vector<double> center(int cluster) const {
    std::mt19937_64 rng(1000 + cluster);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dim_);
    for (auto& x : v) x = dist(rng);
    return v;
  }
  std::string version_tag() const override { return "cluster"; }

 private:
  int dim_;
  int clusters_;
};

Corpus make_corpus(const std::string& id, const std::vector<std::string>& doc_ids) {
  Corpus c;
  c.corpus_id = id;
  for (const auto& d : doc_ids) c.docs.push_back({d, id, "", "text of " + d});
  return c;
}

std::vector<std::string> result_ids(const SearchResult& r) {
  std::vector<std::string> ids;
  for (const auto& hit : r.hits) ids.push_back(hit.doc->doc_id);
  return ids;
}

}  // namespace

TEST_CASE("hand-scored search order with tie-break") {
  auto embedder = std::make_shared<TableEmbedder>(
      2, std::map<std::string, std::vector<double>>{
             {"d1", {1.0, 0.0}}, {"d2", {0.0, 1.0}}, {"d3", {0.6, 0.6}}});
  MemoryMixture mixture(embedder);
  mixture.add_corpus(make_corpus("c", {"d1", "d2", "d3"}));

  std::vector<double> q = {1.0, 0.1};
  auto r = mixture.search(q, 3, SearchMode::exact);
  CHECK(result_ids(r) == std::vector<std::string>{"d1", "d3", "d2"});
  CHECK(r.hits[0].score == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.hits[1].score == doctest::Approx(0.66).epsilon(1e-12));
  CHECK(r.hits[2].score == doctest::Approx(0.1).epsilon(1e-15));

  // k beyond corpus size returns everything, still sorted.
  CHECK(result_ids(mixture.search(q, 10, SearchMode::exact)).size() == 3);
  CHECK_THROWS_AS(mixture.search(q, 0, SearchMode::exact), std::invalid_argument);
}

TEST_CASE("add and remove corpora") {
  auto embedder = std::make_shared<TableEmbedder>(
      2, std::map<std::string, std::vector<double>>{{"t1", {1.0, 0.0}},
                                                    {"w1", {0.0, 1.0}}});
  MemoryMixture mixture(embedder);
  mixture.add_corpus(make_corpus("wiki", {"w1"}));

  SUBCASE("duplicate corpus id is rejected") {
    CHECK_THROWS_AS(mixture.add_corpus(make_corpus("wiki", {"x"})), std::invalid_argument);
  }

  SUBCASE("added docs become retrievable") {
    std::vector<double> q = {1.0, 0.0};
    CHECK(mixture.search(q, 1, SearchMode::exact).hits[0].doc->doc_id == "w1");
    mixture.add_corpus(make_corpus("target", {"t1"}));
    CHECK(mixture.search(q, 1, SearchMode::exact).hits[0].doc->doc_id == "t1");
  }

  SUBCASE("empty corpus only adds a registry entry") {
    mixture.add_corpus(make_corpus("empty", {}));
    CHECK(mixture.has_corpus("empty"));
    CHECK(mixture.doc_count() == 1);
  }

  SUBCASE("swap source for target") {
    mixture.add_corpus(make_corpus("marco", {"m1"}));
    mixture.add_corpus(make_corpus("mesh", {"s1"}));
    mixture.remove_corpus("marco");
    mixture.add_corpus(make_corpus("target", {"t1"}));
    CHECK(mixture.corpus_ids() == std::vector<std::string>{"mesh", "target", "wiki"});
  }

  SUBCASE("removed corpus never appears in results") {
    mixture.add_corpus(make_corpus("target", {"t1"}));
    mixture.remove_corpus("wiki");
    std::vector<double> q = {0.0, 1.0};
    for (const auto& hit : mixture.search(q, 10, SearchMode::exact).hits) {
      CHECK(hit.doc->corpus_id != "wiki");
    }
    CHECK_THROWS_AS(mixture.remove_corpus("nope"), std::invalid_argument);
  }

  SUBCASE("remove and re-add reproduces identical results") {
    std::vector<double> q = {0.3, 0.7};
    auto before = result_ids(mixture.search(q, 5, SearchMode::exact));
    mixture.remove_corpus("wiki");
    mixture.add_corpus(make_corpus("wiki", {"w1"}));
    CHECK(result_ids(mixture.search(q, 5, SearchMode::exact)) == before);
  }
}

TEST_CASE("exact search equals the full-scan oracle") {
  const int dim = 8;
  ClusterEmbedder reference(dim, 12);
  auto embedder = std::make_shared<ClusterEmbedder>(dim, 12);
  MemoryMixture mixture(embedder);
  std::vector<std::string> all_ids;
  for (int c = 0; c < 3; ++c) {
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) ids.push_back("c" + std::to_string(c) + "_" + std::to_string(i));
    mixture.add_corpus(make_corpus("corp" + std::to_string(c), ids));
  }

  std::mt19937_64 rng(77);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> q(dim);
    for (auto& x : q) x = dist(rng);
    auto got = mixture.search(q, 10, SearchMode::exact);

    // Independent scan: recompute every score from the reference embedder.
    struct Scored {
      double s;
      std::string corpus, id;
    };
    std::vector<Scored> oracle;
    for (const auto& cid : mixture.corpus_ids()) {
      for (const auto& d : mixture.corpus(cid).docs) {
        auto e = reference.embed(d);
        double s = 0;
        for (int j = 0; j < dim; ++j) s += q[j] * e[j];
        oracle.push_back({s, cid, d.doc_id});
      }
    }
    std::sort(oracle.begin(), oracle.end(), [](const Scored& a, const Scored& b) {
      if (a.s != b.s) return a.s > b.s;
      if (a.corpus != b.corpus) return a.corpus < b.corpus;
      return a.id < b.id;
    });
    REQUIRE(got.hits.size() == 10);
    for (int i = 0; i < 10; ++i) {
      CHECK(got.hits[i].doc->doc_id == oracle[i].id);
      CHECK(got.hits[i].score == doctest::Approx(oracle[i].s).epsilon(1e-12));
    }
  }
}

TEST_CASE("mixture search equals the per-corpus merge") {
  const int dim = 6;
  auto embedder = std::make_shared<ClusterEmbedder>(dim, 8);
  MemoryMixture mixture(embedder);
  for (int c = 0; c < 3; ++c) {
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) ids.push_back("c" + std::to_string(c) + "_" + std::to_string(i));
    mixture.add_corpus(make_corpus("corp" + std::to_string(c), ids));
  }
  std::mt19937_64 rng(99);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> q(dim);
    for (auto& x : q) x = dist(rng);
    auto unified = mixture.search(q, 12, SearchMode::exact);

    // Merge per-corpus searches by (score desc, corpus, id).
    std::vector<memory::ScoredDoc> merged;
    for (const auto& cid : mixture.corpus_ids()) {
      auto r = mixture.search(q, 12, SearchMode::exact, cid);
      merged.insert(merged.end(), r.hits.begin(), r.hits.end());
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.doc->corpus_id != b.doc->corpus_id) return a.doc->corpus_id < b.doc->corpus_id;
      return a.doc->doc_id < b.doc->doc_id;
    });
    REQUIRE(unified.hits.size() == 12);
    for (int i = 0; i < 12; ++i) {
      CHECK(unified.hits[i].doc == merged[i].doc);
      CHECK(unified.hits[i].score == merged[i].score);
    }
  }
}

TEST_CASE("approximate search reaches exact recall at full probe width") {
  const int dim = 12;
  ApproxParams ap;
  ap.nlist = 20;
  ap.nprobe = 20;  // probing every list must reproduce the exact ranking
  auto embedder = std::make_shared<ClusterEmbedder>(dim, 20);
  MemoryMixture mixture(embedder, ap);
  std::vector<std::string> ids;
  for (int i = 0; i < 400; ++i) ids.push_back("d" + std::to_string(i));
  mixture.add_corpus(make_corpus("c", ids));

  std::mt19937_64 rng(123);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> q(dim);
    for (auto& x : q) x = dist(rng);
    CHECK(result_ids(mixture.search(q, 10, SearchMode::approx)) ==
          result_ids(mixture.search(q, 10, SearchMode::exact)));
  }
}

TEST_CASE("approximate search recall on clustered data") {
  const int dim = 12;
  const int clusters = 40;
  ApproxParams ap;
  ap.nlist = 40;
  ap.nprobe = 10;
  ClusterEmbedder reference(dim, clusters);
  auto embedder = std::make_shared<ClusterEmbedder>(dim, clusters);
  MemoryMixture mixture(embedder, ap);
  std::vector<std::string> ids;
  for (int i = 0; i < 2000; ++i) ids.push_back("d" + std::to_string(i));
  mixture.add_corpus(make_corpus("c", ids));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.3);
  double hits = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // Queries near cluster centers, like encoded queries on a topical task.
    std::vector<double> q = reference.center(trial % clusters);
    for (auto& x : q) x += noise(rng);
    auto exact = result_ids(mixture.search(q, 10, SearchMode::exact));
    auto approx = result_ids(mixture.search(q, 10, SearchMode::approx));
    for (const auto& id : exact) {
      total += 1;
      hits += std::count(approx.begin(), approx.end(), id) > 0 ? 1 : 0;
    }
  }
  CHECK(hits / total >= 0.95);
}

TEST_CASE("refresh determinism and sensitivity to parameter updates") {
  model::ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.model_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.feedforward_dim = 16;
  cfg.max_query_len = 8;
  cfg.max_doc_len = 12;
  model::ModelParams params = model::ModelParams::init(cfg, 5);

  Corpus corpus = make_corpus("c", {"a", "b"});
  auto vocab = std::make_shared<workbench::Vocabulary>(
      workbench::Vocabulary::build({&corpus}, 64));

  MemoryMixture mixture(std::make_shared<model::TextEmbedder>(params, vocab, "g"));
  mixture.add_corpus(corpus);
  const auto v0 = mixture.version_stamp();

  // Same params, fresh snapshot: embeddings must be bit-identical.
  std::vector<double> before(mixture.embedding_of({"c", "a"}).begin(),
                             mixture.embedding_of({"c", "a"}).end());
  mixture.refresh_index(std::make_shared<model::TextEmbedder>(params, vocab, "g"));
  CHECK(mixture.version_stamp() == v0 + 1);
  std::vector<double> after(mixture.embedding_of({"c", "a"}).begin(),
                            mixture.embedding_of({"c", "a"}).end());
  CHECK(before == after);

  // One optimizer step must change at least one embedding.
  params.set_requires_grad(true);
  params.zero_grads();
  nn::Tape tape;
  auto ids = workbench::tokenize(*vocab, "text of a", cfg.max_doc_len);
  nn::Tensor emb = model::embed_text(tape, params, ids, model::Role::document);
  tape.backward(tape.sum(emb));
  nn::AdamWConfig ocfg;
  ocfg.learning_rate = 0.05;
  nn::AdamW opt(params.all(), ocfg);
  opt.step();

  mixture.refresh_index(std::make_shared<model::TextEmbedder>(params, vocab, "g"));
  std::vector<double> updated(mixture.embedding_of({"c", "a"}).begin(),
                              mixture.embedding_of({"c", "a"}).end());
  CHECK(updated != after);
  CHECK(mixture.version_stamp() == v0 + 2);
}

TEST_CASE("memory operations never touch model parameters") {
  model::ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.model_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.feedforward_dim = 16;
  cfg.max_query_len = 8;
  cfg.max_doc_len = 12;
  model::ModelParams end_model = model::ModelParams::init(cfg, 1);
  model::ModelParams augmenter = model::ModelParams::init(cfg, 2);
  const auto end_sum = end_model.checksum();
  const auto aug_sum = augmenter.checksum();

  Corpus corpus = make_corpus("source", {"a", "b", "c"});
  auto vocab = std::make_shared<workbench::Vocabulary>(
      workbench::Vocabulary::build({&corpus}, 64));
  MemoryMixture mixture(std::make_shared<model::TextEmbedder>(augmenter, vocab, "f_a"));
  mixture.add_corpus(corpus);
  mixture.add_corpus(make_corpus("wiki", {"w1", "w2"}));
  mixture.remove_corpus("source");
  mixture.add_corpus(make_corpus("target", {"t1"}));
  mixture.refresh_index(std::make_shared<model::TextEmbedder>(augmenter, vocab, "f_a"));
  std::vector<double> q(cfg.model_dim, 0.1);
  mixture.search(q, 3, SearchMode::exact);

  CHECK(end_model.checksum() == end_sum);
  CHECK(augmenter.checksum() == aug_sum);
}

TEST_CASE("negative mining excludes, samples and flags shortfall") {
  auto embedder = std::make_shared<TableEmbedder>(
      2, std::map<std::string, std::vector<double>>{{"d1", {0.8, 0.0}},
                                                    {"d2", {1.0, 0.0}},
                                                    {"d3", {0.2, 0.0}},
                                                    {"d4", {0.9, 0.0}},
                                                    {"d5", {0.1, 0.0}}});
  MemoryMixture mixture(embedder);
  mixture.add_corpus(make_corpus("c", {"d1", "d2", "d3", "d4", "d5"}));
  std::vector<double> q = {1.0, 0.0};

  SUBCASE("excluded top hits never appear") {
    std::mt19937_64 rng(0);
    auto r = mixture.mine_negatives(q, 3, {DocKey{"c", "d2"}}, 2, rng);
    REQUIRE(r.docs.size() == 2);
    CHECK_FALSE(r.shortfall);
    for (const auto* d : r.docs) {
      CHECK((d->doc_id == "d4" || d->doc_id == "d1"));
    }
  }

  SUBCASE("exclusion covering the whole pool flags a shortfall") {
    std::mt19937_64 rng(0);
    std::set<DocKey> all = {{"c", "d1"}, {"c", "d2"}, {"c", "d3"}, {"c", "d4"}, {"c", "d5"}};
    auto r = mixture.mine_negatives(q, 5, all, 2, rng);
    CHECK(r.docs.empty());
    CHECK(r.shortfall);
  }

  SUBCASE("depth below count is a contract violation") {
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(mixture.mine_negatives(q, 1, {}, 2, rng), std::invalid_argument);
  }

  SUBCASE("sampling is deterministic under a fixed generator state") {
    std::mt19937_64 r1(42), r2(42);
    auto a = mixture.mine_negatives(q, 5, {}, 3, r1);
    auto b = mixture.mine_negatives(q, 5, {}, 3, r2);
    REQUIRE(a.docs.size() == b.docs.size());
    for (std::size_t i = 0; i < a.docs.size(); ++i) CHECK(a.docs[i] == b.docs[i]);
  }

  SUBCASE("output is always disjoint from the exclude set") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      std::set<DocKey> exclude = {{"c", "d1"}, {"c", "d4"}};
      auto r = mixture.mine_negatives(q, 5, exclude, 2, rng);
      for (const auto* d : r.docs) CHECK_FALSE(exclude.count(d->key()));
    }
  }
}

TEST_CASE("attribution statistics") {
  auto embedder = std::make_shared<TableEmbedder>(
      1, std::map<std::string, std::vector<double>>{});
  MemoryMixture mixture(embedder);
  mixture.add_corpus(make_corpus("wiki", {"w1", "w2", "w3", "w4"}));
  mixture.add_corpus(make_corpus("mesh", {"m1", "m2", "m3", "m4", "m5", "m6"}));

  std::vector<double> q = {1.0};
  auto r = mixture.search(q, 10, SearchMode::exact);
  REQUIRE(r.hits.size() == 10);
  auto stats = memory::attribution_stats({r});
  CHECK(stats.counts.at("wiki") == 4);
  CHECK(stats.counts.at("mesh") == 6);
  CHECK(stats.ratios.at("wiki") == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(stats.ratios.at("mesh") == doctest::Approx(0.6).epsilon(1e-15));
  double total = 0;
  for (const auto& [cls, ratio] : stats.ratios) total += ratio;
  CHECK(std::abs(total - 1.0) < 1e-12);

  SUBCASE("single-corpus results give ratio one") {
    auto ronly = mixture.search(q, 4, SearchMode::exact, std::optional<std::string>("wiki"));
    auto s = memory::attribution_stats({ronly});
    CHECK(s.ratios.at("wiki") == 1.0);
  }

  SUBCASE("source split into relevant and other") {
    auto s = memory::attribution_stats({r}, "wiki", {{"w1", "w2"}});
    CHECK(s.counts.at("source-relevant") == 2);
    CHECK(s.counts.at("source-other") == 2);
    CHECK(s.counts.at("mesh") == 6);
  }
}

TEST_CASE("persistence round trip reproduces search results") {
  const int dim = 6;
  auto embedder = std::make_shared<ClusterEmbedder>(dim, 5);
  ApproxParams ap;
  ap.nlist = 8;
  ap.nprobe = 3;
  MemoryMixture mixture(embedder, ap);
  for (int c = 0; c < 2; ++c) {
    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back("c" + std::to_string(c) + "_" + std::to_string(i));
    mixture.add_corpus(make_corpus("corp" + std::to_string(c), ids));
  }
  auto dir = std::filesystem::temp_directory_path() / "moma_mixture_test";
  std::filesystem::remove_all(dir);
  mixture.save(dir);
  auto loaded = MemoryMixture::load(dir);
  CHECK(loaded.version_stamp() == mixture.version_stamp());
  CHECK(loaded.doc_count() == mixture.doc_count());

  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> q(dim);
    for (auto& x : q) x = dist(rng);
    for (auto mode : {SearchMode::exact, SearchMode::approx}) {
      auto a = mixture.search(q, 7, mode);
      auto b = loaded.search(q, 7, mode);
      CHECK(result_ids(a) == result_ids(b));
      REQUIRE(a.hits.size() == b.hits.size());
      for (std::size_t i = 0; i < a.hits.size(); ++i) CHECK(a.hits[i].score == b.hits[i].score);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("jsonl corpus ingestion") {
  auto dir = std::filesystem::temp_directory_path() / "moma_corpus_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "c.jsonl");
    out << R"({"_id": "doc1", "title": "Alpha", "text": "first document"})" << "\n";
    out << R"({"_id": "doc2", "text": "second document, no title"})" << "\n";
  }
  auto corpus = memory::load_corpus_jsonl(dir / "c.jsonl", "beir");
  REQUIRE(corpus.docs.size() == 2);
  CHECK(corpus.docs[0].doc_id == "doc1");
  CHECK(corpus.docs[0].title == "Alpha");
  CHECK(corpus.docs[1].title.empty());
  CHECK(corpus.docs[1].corpus_id == "beir");
  std::filesystem::remove_all(dir);
}
