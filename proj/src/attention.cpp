#include "moma/attention.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace moma::attention {

double FidAttScores::total_mass() const {
  double total = query_mass;
  for (const auto& [doc, s] : scores) total += s;
  return total;
}

bool PseudoPositiveSet::contains(const DocKey& doc) const {
  return std::any_of(positives.begin(), positives.end(),
                     [&](const Entry& e) { return e.doc == doc; });
}

std::set<DocKey> PseudoPositiveSet::doc_set() const {
  std::set<DocKey> out;
  for (const Entry& e : positives) out.insert(e.doc);
  return out;
}

FidAttScores aggregate_fidatt(const model::CrossAttentionRecord& record) {
  bool has_doc = false;
  for (const auto& span : record.segments) has_doc = has_doc || !span.is_query;
  if (!has_doc) {
    throw std::invalid_argument("aggregate_fidatt: record has no document segment");
  }
  FidAttScores out;
  for (const auto& span : record.segments) {
    if (!span.is_query) out.scores[span.doc] = 0.0;
  }
  for (const auto& layer : record.rows) {
    for (const auto& row : layer) {
      for (const auto& span : record.segments) {
        double mass = 0.0;
        for (int p = span.begin; p < span.end; ++p) mass += row[p];
        if (span.is_query) {
          out.query_mass += mass;
        } else {
          out.scores[span.doc] += mass;
        }
      }
    }
  }
  return out;
}

PseudoPositiveSet select_pseudo_positives(const FidAttScores& scores,
                                          const std::set<DocKey>& source_positives,
                                          int n) {
  if (n < 1) throw std::invalid_argument("select_pseudo_positives: N must be >= 1");

  std::vector<std::pair<DocKey, double>> ranked(scores.scores.begin(), scores.scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::set<DocKey> selected = source_positives;
  const std::size_t take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  std::set<DocKey> by_attention;
  for (std::size_t i = 0; i < take; ++i) by_attention.insert(ranked[i].first);
  selected.insert(by_attention.begin(), by_attention.end());

  PseudoPositiveSet out;
  for (const DocKey& doc : selected) {
    Provenance p = source_positives.count(doc) ? Provenance::source_relevant
                                               : Provenance::attention_selected;
    out.positives.push_back({doc, p});
  }
  for (const auto& [doc, score] : scores.scores) {
    if (!selected.count(doc)) out.complement.push_back(doc);
  }
  return out;
}

void append_jsonl(std::ostream& out, const FidAttScores& scores) {
  for (const auto& [doc, s] : scores.scores) {
    nlohmann::ordered_json row;
    row["query_id"] = scores.query_id;
    row["episode"] = scores.episode;
    row["doc_id"] = doc.doc_id;
    row["corpus_id"] = doc.corpus_id;
    row["fidatt"] = s;
    out << row.dump() << "\n";
  }
}

}  // namespace moma::attention
