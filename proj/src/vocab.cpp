#include "moma/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace moma::workbench {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string doc_text(const Document& doc) {
  if (doc.title.empty()) return doc.text;
  return doc.title + " " + doc.text;
}

Vocabulary Vocabulary::build(const std::vector<const Corpus*>& corpora, std::size_t max_size) {
  if (corpora.empty()) throw std::invalid_argument("vocabulary: no corpora given");
  if (max_size <= kNumReservedIds) {
    throw std::invalid_argument("vocabulary: max_size must exceed the reserved ids");
  }
  std::unordered_map<std::string, long> freq;
  for (const Corpus* corpus : corpora) {
    for (const Document& d : corpus->docs) {
      for (std::string& tok : tokenize_words(doc_text(d))) ++freq[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumReservedIds);

  Vocabulary vocab;
  // Ids assigned alphabetically over the kept set so that the mapping does
  // not depend on frequency-order details beyond membership.
  std::vector<std::string> kept;
  kept.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) kept.push_back(ranked[i].first);
  std::sort(kept.begin(), kept.end());
  int next_id = kNumReservedIds;
  for (std::string& tok : kept) vocab.token_to_id_.emplace(std::move(tok), next_id++);
  return vocab;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["tokens"] = nlohmann::ordered_json::object();
  for (const auto& [tok, id] : token_to_id_) j["tokens"][tok] = id;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary to " + path.string());
  out << j.dump() << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  Vocabulary vocab;
  for (const auto& [tok, id] : j.at("tokens").items()) {
    vocab.token_to_id_[tok] = id.get<int>();
  }
  return vocab;
}

std::vector<int> tokenize(const Vocabulary& vocab, std::string_view text, int max_len) {
  if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be >= 1");
  std::vector<int> ids;
  ids.push_back(kClsId);
  for (const std::string& tok : tokenize_words(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id(tok));
  }
  return ids;
}

}  // namespace moma::workbench
