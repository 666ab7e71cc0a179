#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moma/docs.hpp"

namespace moma::workbench {

// Named random substream derived from the run seed. Every component draws
// from its own stream so parts of a run can be replayed independently.
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view name);

// Topic-clustered stand-in for the source/memory/target corpora. Each topic
// owns a disjoint token core: a shared slice (what queries sample from) plus
// one private slice per corpus. A document samples its corpus view of the
// topic core, with a noise-token rate on top. Relevance is topic identity.
struct SyntheticTaskParams {
  int num_topics = 12;
  int shared_tokens_per_topic = 8;
  int slice_tokens_per_topic = 6;
  int docs_per_topic_per_corpus = 20;
  int doc_len = 12;
  int query_len = 3;
  int train_queries_per_topic = 6;
  int test_queries_per_topic = 3;
  double noise_rate = 0.1;
  int noise_vocab = 150;
  std::vector<std::string> memory_corpora = {"wiki", "mesh"};

  void validate() const;
};

struct QueryRecord {
  std::string id;
  std::string text;
};

using Qrels = std::map<std::string, std::map<std::string, int>>;

struct SyntheticTask {
  SyntheticTaskParams params;
  std::uint64_t seed = 0;
  Corpus source;
  std::vector<Corpus> memories;
  Corpus target;
  std::vector<QueryRecord> train_queries;
  std::vector<QueryRecord> test_queries;
  Qrels train_qrels;  // relevance within the source corpus
  Qrels test_qrels;   // relevance within the target corpus
};

SyntheticTask generate_synthetic_task(const SyntheticTaskParams& params, std::uint64_t seed);

// Standard on-disk layout: <corpus>.jsonl per corpus, queries as JSONL
// ({"_id","text"}), qrels as TSV with a header row.
void write_task(const SyntheticTask& task, const std::filesystem::path& dir);

void write_queries_jsonl(const std::vector<QueryRecord>& queries,
                         const std::filesystem::path& path);
std::vector<QueryRecord> load_queries_jsonl(const std::filesystem::path& path);

void write_qrels_tsv(const Qrels& qrels, const std::filesystem::path& path);
Qrels load_qrels_tsv(const std::filesystem::path& path);

}  // namespace moma::workbench
