#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moma/docs.hpp"
#include "moma/tensor.hpp"

namespace moma::model {

enum class Role { query, document };

struct ModelConfig {
  int vocab_size = 8192;
  int model_dim = 64;
  int num_layers = 2;  // encoder and decoder each
  int num_heads = 4;
  int feedforward_dim = 128;
  int max_query_len = 32;
  int max_doc_len = 128;
  int k_default = 10;  // grounding documents

  void validate() const;
  int max_len(Role role) const {
    return role == Role::query ? max_query_len : max_doc_len;
  }
  int head_dim() const { return model_dim / num_heads; }
};

struct Norm {
  nn::Tensor gain, bias;
};

struct AttentionBlock {
  nn::Tensor wq, wk, wv, wo;
};

struct FeedForward {
  nn::Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  Norm ln_attn;
  AttentionBlock self_attn;
  Norm ln_ff;
  FeedForward ff;
};

struct DecoderLayer {
  Norm ln_self;
  AttentionBlock self_attn;
  Norm ln_cross;
  AttentionBlock cross_attn;
  Norm ln_ff;
  FeedForward ff;
};

// All weights of one retriever. The end retriever and the augmenter hold two
// independent instances; clone() never shares storage.
class ModelParams {
 public:
  ModelParams() = default;
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams clone() const;

  // Deterministic traversal order; the same order every call.
  std::vector<std::pair<std::string, nn::Tensor>> named() const;
  std::vector<nn::Tensor> all() const;

  void set_requires_grad(bool v);
  void zero_grads();
  std::uint64_t checksum() const;

  nn::Tensor token_embedding;     // [vocab, dim]
  nn::Tensor position_embedding;  // [max_len, dim]
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  Norm encoder_norm;
  Norm decoder_norm;

 private:
  ModelConfig cfg_;
};

struct EncodedSegment {
  bool is_query = false;
  DocKey doc;                  // meaningful when !is_query
  std::vector<int> token_ids;  // after truncation
  nn::Tensor encoded;          // [len, model_dim]
};

struct SegmentSpan {
  int begin = 0;
  int end = 0;  // half-open
  bool is_query = false;
  DocKey doc;
};

// Decoder [CLS] attention over the concatenated encoder positions,
// post-softmax, one row per (layer, head). Immutable value after return.
struct CrossAttentionRecord {
  std::vector<SegmentSpan> segments;
  std::vector<std::vector<std::vector<double>>> rows;  // [layer][head][position]

  int total_positions() const {
    return segments.empty() ? 0 : segments.back().end;
  }
};

struct AugDocTokens {
  DocKey doc;
  std::vector<int> token_ids;
};

struct FusedEmbedding {
  nn::Tensor embedding;  // [model_dim]
  CrossAttentionRecord attention;
  std::vector<EncodedSegment> segments;
};

// Encoder forward over one segment. Overlong input is truncated to the
// role's maximum length; empty input is an error.
EncodedSegment encode(nn::Tape& tape, const ModelParams& params,
                      std::vector<int> token_ids, Role role);

// g(x) = Dec(Enc(x)): decoder output at the [CLS] position, shape [model_dim].
nn::Tensor embed_text(nn::Tape& tape, const ModelParams& params,
                      const std::vector<int>& token_ids, Role role);

// Fusion-in-decoder query embedding over at most k_default augmentation
// documents. Each document list is prefixed with [SEP] and truncated before
// encoding; with no documents the result equals embed_text exactly.
FusedEmbedding embed_query_fused(nn::Tape& tape, const ModelParams& params,
                                 const std::vector<int>& query_ids,
                                 const std::vector<AugDocTokens>& aug_docs);

}  // namespace moma::model
