#include "moma/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "moma/vocab.hpp"

namespace moma::lexical {

InvertedIndex InvertedIndex::build(const Corpus& corpus, Bm25Params params) {
  InvertedIndex index;
  index.corpus_ = corpus;
  index.corpus_.validate();
  index.params_ = params;
  index.doc_lengths_.reserve(corpus.docs.size());

  long total_len = 0;
  for (std::size_t d = 0; d < index.corpus_.docs.size(); ++d) {
    auto tokens = workbench::tokenize_words(workbench::doc_text(index.corpus_.docs[d]));
    index.doc_lengths_.push_back(static_cast<int>(tokens.size()));
    total_len += static_cast<long>(tokens.size());
    std::unordered_map<std::string, int> tf;
    for (auto& t : tokens) ++tf[std::move(t)];
    for (auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<int>(d), count});
    }
  }
  for (auto& [term, list] : index.postings_) {
    std::sort(list.begin(), list.end(),
              [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
  }
  index.avg_len_ = index.doc_lengths_.empty()
                       ? 0.0
                       : static_cast<double>(total_len) / index.doc_lengths_.size();
  return index;
}

std::size_t InvertedIndex::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

memory::SearchResult InvertedIndex::search(const std::vector<std::string>& query_tokens,
                                           int k) const {
  if (k < 1) throw std::invalid_argument("bm25: k must be >= 1");
  const double n_docs = static_cast<double>(doc_count());
  std::unordered_map<int, double> scores;

  std::set<std::string> unique_terms(query_tokens.begin(), query_tokens.end());
  for (const std::string& term : unique_terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const Posting& p : it->second) {
      const double tf = p.tf;
      const double norm =
          params_.k1 * (1.0 - params_.b + params_.b * doc_lengths_[p.doc] / avg_len_);
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
  }

  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(scores.size());
  for (const auto& [doc, s] : scores) ranked.emplace_back(s, doc);
  const std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end(),
                    [this](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return corpus_.docs[a.second].doc_id < corpus_.docs[b.second].doc_id;
                    });

  memory::SearchResult out;
  out.hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.hits.push_back({&corpus_.docs[ranked[i].second], ranked[i].first});
  }
  return out;
}

memory::MiningResult InvertedIndex::warmup_negatives(
    const std::vector<std::string>& query_tokens, const std::set<std::string>& positive_ids,
    int count) const {
  if (count < 1) throw std::invalid_argument("bm25: count must be >= 1");
  auto hits = search(query_tokens, static_cast<int>(doc_count()));
  memory::MiningResult out;
  for (const auto& hit : hits.hits) {
    if (static_cast<int>(out.docs.size()) >= count) break;
    if (positive_ids.count(hit.doc->doc_id)) continue;
    out.docs.push_back(hit.doc);
  }
  out.shortfall = static_cast<int>(out.docs.size()) < count;
  return out;
}

}  // namespace moma::lexical
