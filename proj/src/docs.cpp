#include "moma/docs.hpp"

#include <unordered_set>

namespace moma {

void Corpus::validate() {
  if (corpus_id.empty()) throw std::invalid_argument("corpus: empty corpus_id");
  std::unordered_set<std::string> seen;
  for (Document& d : docs) {
    if (d.doc_id.empty()) throw std::invalid_argument("corpus: empty doc_id");
    if (!seen.insert(d.doc_id).second) {
      throw std::invalid_argument("corpus '" + corpus_id + "': duplicate doc_id " + d.doc_id);
    }
    d.corpus_id = corpus_id;
  }
}

}  // namespace moma
