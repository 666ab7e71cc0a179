#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "moma/docs.hpp"
#include "moma/memory.hpp"

namespace moma::lexical {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

// Okapi BM25 over an inverted index. Immutable after build; concurrent
// reads are safe.
class InvertedIndex {
 public:
  static InvertedIndex build(const Corpus& corpus, Bm25Params params = {});

  // IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5));
  // score(d) = sum_t IDF(t) * tf * (k1+1) / (tf + k1 * (1 - b + b * len/avglen)).
  // Duplicate query terms count once. Ties break by doc id ascending.
  memory::SearchResult search(const std::vector<std::string>& query_tokens, int k) const;

  // Top hits minus positives, first `count` kept in rank order.
  memory::MiningResult warmup_negatives(const std::vector<std::string>& query_tokens,
                                        const std::set<std::string>& positive_ids,
                                        int count) const;

  std::size_t doc_count() const { return doc_lengths_.size(); }
  double avg_doc_length() const { return avg_len_; }
  std::size_t document_frequency(const std::string& term) const;
  const Bm25Params& params() const { return params_; }

 private:
  struct Posting {
    int doc = 0;  // ordinal into the corpus
    int tf = 0;
  };
  Corpus corpus_;  // owned copy; results point into it
  std::map<std::string, std::vector<Posting>> postings_;  // sorted by doc ordinal
  std::vector<int> doc_lengths_;
  double avg_len_ = 0.0;
  Bm25Params params_;
};

}  // namespace moma::lexical
