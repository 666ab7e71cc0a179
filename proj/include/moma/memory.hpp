#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "moma/docs.hpp"

namespace moma::memory {

// Produces the dense representation of a document. Implementations hold a
// read-only snapshot of whatever encoder they wrap.
class DocumentEmbedder {
 public:
  virtual ~DocumentEmbedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const Document& doc) const = 0;
  virtual std::string version_tag() const = 0;
};

enum class SearchMode { exact, approx };

struct ScoredDoc {
  const Document* doc = nullptr;
  double score = 0.0;
};

// Scores non-increasing; ties broken by (corpus_id, doc_id) ascending.
struct SearchResult {
  std::vector<ScoredDoc> hits;
};

struct ApproxParams {
  int nlist = 0;        // 0: ~sqrt(n), clamped to [1, n]
  int nprobe = 0;       // 0: max(1, nlist/4)
  int kmeans_iters = 8;
  std::uint64_t seed = 0x5eed;
};

struct MiningResult {
  std::vector<const Document*> docs;
  bool shortfall = false;
};

struct AttributionStats {
  std::map<std::string, int> counts;     // class name -> count
  std::map<std::string, double> ratios;  // sums to 1 when total > 0
  int total = 0;
};

// The mixture of memories: provenance-tagged corpora behind one vector
// index. Reads are concurrency-safe; mutations (add/remove/refresh) require
// exclusive access and present atomically.
class MemoryMixture {
 public:
  explicit MemoryMixture(std::shared_ptr<const DocumentEmbedder> embedder = nullptr,
                         ApproxParams approx = {});

  // Appends a corpus and embeds its documents; existing rows are untouched.
  // Throws on duplicate corpus_id.
  void add_corpus(Corpus corpus);
  void remove_corpus(const std::string& corpus_id);
  bool has_corpus(const std::string& corpus_id) const;
  std::vector<std::string> corpus_ids() const;
  const Corpus& corpus(const std::string& corpus_id) const;
  std::size_t doc_count() const;
  const Document* find(const DocKey& key) const;

  // Re-embeds every document with the given encoder and bumps the version.
  void refresh_index(std::shared_ptr<const DocumentEmbedder> embedder);
  std::uint64_t version_stamp() const { return version_; }
  std::string embedder_version() const;
  int dim() const;

  std::span<const double> embedding_of(const DocKey& key) const;

  SearchResult search(std::span<const double> query_vec, int k, SearchMode mode,
                      const std::optional<std::string>& corpus_filter = {}) const;

  // Top-`depth` retrieval minus `exclude`, then `count` sampled uniformly
  // without replacement from the remainder.
  MiningResult mine_negatives(std::span<const double> query_vec, int depth,
                              const std::set<DocKey>& exclude, int count,
                              std::mt19937_64& rng,
                              const std::optional<std::string>& corpus_filter = {},
                              SearchMode mode = SearchMode::exact) const;

  void save(const std::filesystem::path& dir) const;
  static MemoryMixture load(const std::filesystem::path& dir,
                            std::shared_ptr<const DocumentEmbedder> embedder = nullptr);

 private:
  struct CorpusEntry {
    Corpus corpus;
    std::vector<double> embeddings;  // row-major, docs x dim
  };

  std::shared_ptr<const DocumentEmbedder> embedder_;
  std::map<std::string, CorpusEntry> corpora_;  // sorted by corpus_id
  ApproxParams approx_;
  std::uint64_t version_ = 0;
  int dim_ = 0;

  // Coarse inverted-list index over all rows, rebuilt lazily after mutation.
  struct IvfIndex {
    std::vector<std::vector<double>> centroids;
    std::vector<std::vector<std::pair<const CorpusEntry*, int>>> lists;
    bool built = false;
  };
  mutable IvfIndex ivf_;
  std::unique_ptr<std::mutex> ivf_mu_ = std::make_unique<std::mutex>();

  void ensure_dim(std::span<const double> query_vec) const;
  void build_ivf() const;
  SearchResult scan_topk(std::span<const double> query_vec, int k,
                         const std::optional<std::string>& corpus_filter) const;
  SearchResult approx_topk(std::span<const double> query_vec, int k,
                           const std::optional<std::string>& corpus_filter) const;
};

// Per-corpus counts and ratios over result lists.
AttributionStats attribution_stats(const std::vector<SearchResult>& results);

// Splits the source corpus into source-relevant / source-other using the
// per-result relevant doc-id sets (aligned with `results`).
AttributionStats attribution_stats(const std::vector<SearchResult>& results,
                                   const std::string& source_corpus_id,
                                   const std::vector<std::set<std::string>>& relevant_ids);

// BEIR corpus format: one JSON object per line with "_id", "title", "text".
Corpus load_corpus_jsonl(const std::filesystem::path& path, const std::string& corpus_id);
void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace moma::memory
