#include "moma/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "moma/timing.hpp"

namespace moma::memory {

namespace {

double dot(std::span<const double> a, const double* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

struct Candidate {
  double score;
  const Document* doc;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.doc->corpus_id != b.doc->corpus_id) return a.doc->corpus_id < b.doc->corpus_id;
  return a.doc->doc_id < b.doc->doc_id;
}

SearchResult take_topk(std::vector<Candidate>& candidates, int k) {
  const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(k));
  std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                    candidate_less);
  SearchResult out;
  out.hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.hits.push_back({candidates[i].doc, candidates[i].score});
  }
  return out;
}

}  // namespace

MemoryMixture::MemoryMixture(std::shared_ptr<const DocumentEmbedder> embedder,
                             ApproxParams approx)
    : embedder_(std::move(embedder)), approx_(approx) {
  if (embedder_) dim_ = embedder_->dim();
}

void MemoryMixture::add_corpus(Corpus corpus) {
  corpus.validate();
  if (corpora_.count(corpus.corpus_id)) {
    throw std::invalid_argument("mixture: corpus '" + corpus.corpus_id + "' already present");
  }
  CorpusEntry entry;
  if (!corpus.docs.empty()) {
    if (!embedder_) throw std::logic_error("mixture: no embedder configured");
    auto timer = PhaseTimers::global().scope("corpus_encoding");
    entry.embeddings.reserve(corpus.docs.size() * static_cast<std::size_t>(dim_));
    for (const Document& d : corpus.docs) {
      std::vector<double> e = embedder_->embed(d);
      if (static_cast<int>(e.size()) != dim_) {
        throw std::logic_error("mixture: embedder dimension mismatch");
      }
      entry.embeddings.insert(entry.embeddings.end(), e.begin(), e.end());
    }
  }
  const std::string id = corpus.corpus_id;
  entry.corpus = std::move(corpus);
  corpora_.emplace(id, std::move(entry));
  ivf_.built = false;
}

void MemoryMixture::remove_corpus(const std::string& corpus_id) {
  auto it = corpora_.find(corpus_id);
  if (it == corpora_.end()) {
    throw std::invalid_argument("mixture: unknown corpus '" + corpus_id + "'");
  }
  corpora_.erase(it);
  ivf_.built = false;
}

bool MemoryMixture::has_corpus(const std::string& corpus_id) const {
  return corpora_.count(corpus_id) > 0;
}

std::vector<std::string> MemoryMixture::corpus_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, entry] : corpora_) out.push_back(id);
  return out;
}

const Corpus& MemoryMixture::corpus(const std::string& corpus_id) const {
  auto it = corpora_.find(corpus_id);
  if (it == corpora_.end()) {
    throw std::invalid_argument("mixture: unknown corpus '" + corpus_id + "'");
  }
  return it->second.corpus;
}

std::size_t MemoryMixture::doc_count() const {
  std::size_t n = 0;
  for (const auto& [id, entry] : corpora_) n += entry.corpus.docs.size();
  return n;
}

const Document* MemoryMixture::find(const DocKey& key) const {
  auto it = corpora_.find(key.corpus_id);
  if (it == corpora_.end()) return nullptr;
  for (const Document& d : it->second.corpus.docs) {
    if (d.doc_id == key.doc_id) return &d;
  }
  return nullptr;
}

void MemoryMixture::refresh_index(std::shared_ptr<const DocumentEmbedder> embedder) {
  if (!embedder) throw std::invalid_argument("mixture: refresh requires an embedder");
  auto timer = PhaseTimers::global().scope("corpus_encoding");
  embedder_ = std::move(embedder);
  dim_ = embedder_->dim();
  for (auto& [id, entry] : corpora_) {
    entry.embeddings.clear();
    entry.embeddings.reserve(entry.corpus.docs.size() * static_cast<std::size_t>(dim_));
    for (const Document& d : entry.corpus.docs) {
      std::vector<double> e = embedder_->embed(d);
      entry.embeddings.insert(entry.embeddings.end(), e.begin(), e.end());
    }
  }
  ++version_;
  ivf_.built = false;
}

std::string MemoryMixture::embedder_version() const {
  return embedder_ ? embedder_->version_tag() : "";
}

int MemoryMixture::dim() const { return dim_; }

std::span<const double> MemoryMixture::embedding_of(const DocKey& key) const {
  auto it = corpora_.find(key.corpus_id);
  if (it == corpora_.end()) throw std::invalid_argument("mixture: unknown corpus");
  const auto& docs = it->second.corpus.docs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].doc_id == key.doc_id) {
      return {it->second.embeddings.data() + i * static_cast<std::size_t>(dim_),
              static_cast<std::size_t>(dim_)};
    }
  }
  throw std::invalid_argument("mixture: unknown document " + key.doc_id);
}

void MemoryMixture::ensure_dim(std::span<const double> query_vec) const {
  if (dim_ > 0 && static_cast<int>(query_vec.size()) != dim_) {
    throw std::invalid_argument("mixture: query dimension mismatch");
  }
}

SearchResult MemoryMixture::scan_topk(std::span<const double> query_vec, int k,
                                      const std::optional<std::string>& corpus_filter) const {
  std::vector<Candidate> candidates;
  for (const auto& [id, entry] : corpora_) {
    if (corpus_filter && id != *corpus_filter) continue;
    const auto& docs = entry.corpus.docs;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const double s = dot(query_vec, entry.embeddings.data() + i * static_cast<std::size_t>(dim_));
      candidates.push_back({s, &docs[i]});
    }
  }
  return take_topk(candidates, k);
}

void MemoryMixture::build_ivf() const {
  ivf_.centroids.clear();
  ivf_.lists.clear();

  std::vector<std::pair<const CorpusEntry*, int>> rows;
  for (const auto& [id, entry] : corpora_) {
    for (std::size_t i = 0; i < entry.corpus.docs.size(); ++i) {
      rows.emplace_back(&entry, static_cast<int>(i));
    }
  }
  const std::size_t n = rows.size();
  if (n == 0) {
    ivf_.built = true;
    return;
  }
  auto timer = PhaseTimers::global().scope("index_build");
  int nlist = approx_.nlist;
  if (nlist <= 0) nlist = static_cast<int>(std::sqrt(static_cast<double>(n)));
  nlist = std::clamp<int>(nlist, 1, static_cast<int>(n));

  auto row_ptr = [&](std::size_t r) {
    return rows[r].first->embeddings.data() + static_cast<std::size_t>(rows[r].second) * dim_;
  };

  // k-means with seeded init; empty clusters keep their previous centroid.
  std::mt19937_64 rng(approx_.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  ivf_.centroids.assign(nlist, std::vector<double>(dim_, 0.0));
  for (int c = 0; c < nlist; ++c) {
    const double* src = row_ptr(order[c % n]);
    std::copy(src, src + dim_, ivf_.centroids[c].begin());
  }

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < approx_.kmeans_iters; ++iter) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = row_ptr(r);
      double best = std::numeric_limits<double>::max();
      int best_c = 0;
      for (int c = 0; c < nlist; ++c) {
        double d2 = 0.0;
        const auto& cen = ivf_.centroids[c];
        for (int j = 0; j < dim_; ++j) {
          const double diff = x[j] - cen[j];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      assignment[r] = best_c;
    }
    std::vector<std::vector<double>> sums(nlist, std::vector<double>(dim_, 0.0));
    std::vector<int> counts(nlist, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = row_ptr(r);
      auto& s = sums[assignment[r]];
      for (int j = 0; j < dim_; ++j) s[j] += x[j];
      ++counts[assignment[r]];
    }
    for (int c = 0; c < nlist; ++c) {
      if (counts[c] == 0) continue;
      for (int j = 0; j < dim_; ++j) ivf_.centroids[c][j] = sums[c][j] / counts[c];
    }
  }

  ivf_.lists.assign(nlist, {});
  for (std::size_t r = 0; r < n; ++r) ivf_.lists[assignment[r]].push_back(rows[r]);
  ivf_.built = true;
}

SearchResult MemoryMixture::approx_topk(std::span<const double> query_vec, int k,
                                        const std::optional<std::string>& corpus_filter) const {
  {
    std::lock_guard<std::mutex> lock(*ivf_mu_);
    if (!ivf_.built) build_ivf();
  }
  if (ivf_.centroids.empty()) return {};

  const int nlist = static_cast<int>(ivf_.centroids.size());
  int nprobe = approx_.nprobe;
  if (nprobe <= 0) nprobe = std::max(1, nlist / 4);
  nprobe = std::min(nprobe, nlist);

  // Rank lists by centroid inner product with the query.
  std::vector<std::pair<double, int>> ranked(nlist);
  for (int c = 0; c < nlist; ++c) {
    ranked[c] = {dot(query_vec, ivf_.centroids[c].data()), c};
  }
  std::partial_sort(ranked.begin(), ranked.begin() + nprobe, ranked.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });

  std::vector<Candidate> candidates;
  for (int p = 0; p < nprobe; ++p) {
    for (const auto& [entry, ordinal] : ivf_.lists[ranked[p].second]) {
      const Document& doc = entry->corpus.docs[ordinal];
      if (corpus_filter && doc.corpus_id != *corpus_filter) continue;
      const double s =
          dot(query_vec, entry->embeddings.data() + static_cast<std::size_t>(ordinal) * dim_);
      candidates.push_back({s, &doc});
    }
  }
  return take_topk(candidates, k);
}

SearchResult MemoryMixture::search(std::span<const double> query_vec, int k, SearchMode mode,
                                   const std::optional<std::string>& corpus_filter) const {
  if (k < 1) throw std::invalid_argument("search: k must be >= 1");
  if (doc_count() == 0) return {};
  ensure_dim(query_vec);
  auto timer = PhaseTimers::global().scope(mode == SearchMode::exact ? "exact_search"
                                                                     : "ann_search");
  return mode == SearchMode::exact ? scan_topk(query_vec, k, corpus_filter)
                                   : approx_topk(query_vec, k, corpus_filter);
}

MiningResult MemoryMixture::mine_negatives(std::span<const double> query_vec, int depth,
                                           const std::set<DocKey>& exclude, int count,
                                           std::mt19937_64& rng,
                                           const std::optional<std::string>& corpus_filter,
                                           SearchMode mode) const {
  if (count < 1) throw std::invalid_argument("mine_negatives: count must be >= 1");
  if (depth < count) throw std::invalid_argument("mine_negatives: depth must be >= count");
  auto timer = PhaseTimers::global().scope("negative_construction");
  SearchResult top = search(query_vec, depth, mode, corpus_filter);

  std::vector<const Document*> pool;
  pool.reserve(top.hits.size());
  for (const ScoredDoc& hit : top.hits) {
    if (!exclude.count(hit.doc->key())) pool.push_back(hit.doc);
  }

  MiningResult out;
  if (static_cast<int>(pool.size()) <= count) {
    out.docs = std::move(pool);
    out.shortfall = static_cast<int>(out.docs.size()) < count;
    return out;
  }
  // Partial Fisher-Yates: uniform sample of `count` without replacement.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.docs.push_back(pool[i]);
  }
  return out;
}

AttributionStats attribution_stats(const std::vector<SearchResult>& results) {
  AttributionStats stats;
  for (const SearchResult& r : results) {
    for (const ScoredDoc& hit : r.hits) {
      ++stats.counts[hit.doc->corpus_id];
      ++stats.total;
    }
  }
  for (const auto& [cls, n] : stats.counts) {
    stats.ratios[cls] = static_cast<double>(n) / stats.total;
  }
  return stats;
}

AttributionStats attribution_stats(const std::vector<SearchResult>& results,
                                   const std::string& source_corpus_id,
                                   const std::vector<std::set<std::string>>& relevant_ids) {
  if (relevant_ids.size() != results.size()) {
    throw std::invalid_argument("attribution_stats: relevant sets misaligned with results");
  }
  AttributionStats stats;
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (const ScoredDoc& hit : results[q].hits) {
      std::string cls = hit.doc->corpus_id;
      if (hit.doc->corpus_id == source_corpus_id) {
        cls = relevant_ids[q].count(hit.doc->doc_id) ? "source-relevant" : "source-other";
      }
      ++stats.counts[cls];
      ++stats.total;
    }
  }
  for (const auto& [cls, n] : stats.counts) {
    stats.ratios[cls] = static_cast<double>(n) / stats.total;
  }
  return stats;
}

Corpus load_corpus_jsonl(const std::filesystem::path& path, const std::string& corpus_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  Corpus corpus;
  corpus.corpus_id = corpus_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    Document d;
    d.doc_id = row.at("_id").is_string() ? row.at("_id").get<std::string>()
                                         : row.at("_id").dump();
    d.title = row.value("title", "");
    d.text = row.at("text").get<std::string>();
    d.corpus_id = corpus_id;
    corpus.docs.push_back(std::move(d));
  }
  corpus.validate();
  return corpus;
}

void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file " + path.string());
  for (const Document& d : corpus.docs) {
    nlohmann::ordered_json row;
    row["_id"] = d.doc_id;
    row["title"] = d.title;
    row["text"] = d.text;
    out << row.dump() << "\n";
  }
}

namespace {

void write_doubles(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_doubles(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<double> values(expected);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(expected * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(double)) {
    throw std::runtime_error("truncated embedding file " + path.string());
  }
  return values;
}

}  // namespace

void MemoryMixture::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["dim"] = dim_;
  manifest["version_stamp"] = version_;
  manifest["embedder_version"] = embedder_version();
  manifest["approx"] = {{"nlist", approx_.nlist},
                        {"nprobe", approx_.nprobe},
                        {"kmeans_iters", approx_.kmeans_iters},
                        {"seed", approx_.seed}};
  manifest["corpora"] = nlohmann::ordered_json::array();
  for (const auto& [id, entry] : corpora_) {
    manifest["corpora"].push_back(
        {{"corpus_id", id}, {"doc_count", entry.corpus.docs.size()}});
    save_corpus_jsonl(entry.corpus, dir / (id + ".docs.jsonl"));
    write_doubles(dir / (id + ".emb.bin"), entry.embeddings);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

MemoryMixture MemoryMixture::load(const std::filesystem::path& dir,
                                  std::shared_ptr<const DocumentEmbedder> embedder) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);

  MemoryMixture mixture;
  mixture.dim_ = manifest.at("dim").get<int>();
  mixture.version_ = manifest.at("version_stamp").get<std::uint64_t>();
  mixture.approx_.nlist = manifest.at("approx").at("nlist").get<int>();
  mixture.approx_.nprobe = manifest.at("approx").at("nprobe").get<int>();
  mixture.approx_.kmeans_iters = manifest.at("approx").at("kmeans_iters").get<int>();
  mixture.approx_.seed = manifest.at("approx").at("seed").get<std::uint64_t>();
  mixture.embedder_ = std::move(embedder);
  if (mixture.embedder_ && mixture.embedder_->dim() != mixture.dim_) {
    throw std::runtime_error("mixture: embedder dimension differs from stored index");
  }

  for (const auto& item : manifest.at("corpora")) {
    const std::string id = item.at("corpus_id").get<std::string>();
    const std::size_t count = item.at("doc_count").get<std::size_t>();
    CorpusEntry entry;
    entry.corpus = load_corpus_jsonl(dir / (id + ".docs.jsonl"), id);
    if (entry.corpus.docs.size() != count) {
      throw std::runtime_error("mixture: document count mismatch for corpus " + id);
    }
    entry.embeddings =
        read_doubles(dir / (id + ".emb.bin"), count * static_cast<std::size_t>(mixture.dim_));
    mixture.corpora_.emplace(id, std::move(entry));
  }
  return mixture;
}

}  // namespace moma::memory
