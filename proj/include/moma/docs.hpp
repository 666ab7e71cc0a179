#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace moma {

// Reserved token ids, fixed across every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReservedIds = 4;

// Globally unique document identity: (corpus_id, doc_id).
struct DocKey {
  std::string corpus_id;
  std::string doc_id;

  auto operator<=>(const DocKey&) const = default;
};

struct Document {
  std::string doc_id;
  std::string corpus_id;
  std::string title;
  std::string text;

  DocKey key() const { return {corpus_id, doc_id}; }
};

struct Corpus {
  std::string corpus_id;
  std::vector<Document> docs;

  // Throws on empty or duplicate doc ids; stamps corpus_id onto documents.
  void validate();
};

}  // namespace moma
