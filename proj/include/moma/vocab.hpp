#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "moma/docs.hpp"

namespace moma::workbench {

// Lowercase, split on non-alphanumeric runs.
std::vector<std::string> tokenize_words(std::string_view text);

// Title and body joined for indexing and encoding.
std::string doc_text(const Document& doc);

class Vocabulary {
 public:
  // Keeps the most frequent tokens up to max_size (reserved ids included);
  // frequency ties break lexicographically.
  static Vocabulary build(const std::vector<const Corpus*>& corpora, std::size_t max_size);

  int id(const std::string& token) const;  // kUnkId when absent
  std::size_t size() const { return token_to_id_.size() + kNumReservedIds; }
  const std::map<std::string, int>& entries() const { return token_to_id_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::map<std::string, int> token_to_id_;
};

// [CLS] + token ids, truncated to max_len.
std::vector<int> tokenize(const Vocabulary& vocab, std::string_view text, int max_len);

}  // namespace moma::workbench
