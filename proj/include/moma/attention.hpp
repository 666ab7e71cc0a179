#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "moma/docs.hpp"
#include "moma/model.hpp"

namespace moma::attention {

// Per-document attention mass summed over layers, heads and positions.
// Query-segment mass is kept separately for conservation checks but never
// competes for Top-N selection.
struct FidAttScores {
  std::string query_id;
  int episode = -1;
  std::map<DocKey, double> scores;
  double query_mass = 0.0;

  double total_mass() const;
};

enum class Provenance { source_relevant, attention_selected };

struct PseudoPositiveSet {
  struct Entry {
    DocKey doc;
    Provenance provenance;
  };
  std::vector<Entry> positives;  // sorted by doc key
  // Augmentation documents not selected; callers exclude `positives` when
  // mining negatives and may sample these freely.
  std::vector<DocKey> complement;

  bool contains(const DocKey& doc) const;
  std::set<DocKey> doc_set() const;
};

// Sums decoder->encoder attention per document segment. Throws if the record
// carries no document segment.
FidAttScores aggregate_fidatt(const model::CrossAttentionRecord& record);

// D^{a+} = source positives ∪ the N highest-scoring augmentation documents.
// Ties break toward the lower doc key; fewer than N scored docs selects all.
PseudoPositiveSet select_pseudo_positives(const FidAttScores& scores,
                                          const std::set<DocKey>& source_positives,
                                          int n);

// One JSONL row per document: {query_id, episode, doc_id, corpus_id, fidatt}.
void append_jsonl(std::ostream& out, const FidAttScores& scores);

}  // namespace moma::attention
