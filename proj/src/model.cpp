#include "moma/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

namespace moma::model {

using nn::Tape;
using nn::Tensor;

void ModelConfig::validate() const {
  if (vocab_size <= kNumReservedIds) throw std::invalid_argument("config: vocab_size too small");
  if (model_dim <= 0 || num_layers <= 0 || num_heads <= 0 || feedforward_dim <= 0) {
    throw std::invalid_argument("config: dimensions must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("config: model_dim must be divisible by num_heads");
  }
  if (max_query_len < 2 || max_doc_len < 2) {
    throw std::invalid_argument("config: max lengths must be at least 2");
  }
  if (k_default < 0) throw std::invalid_argument("config: k_default must be nonnegative");
}

namespace {

Tensor init_weight(std::vector<int> shape, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Norm init_norm(int dim) {
  return {Tensor::from_data({dim}, std::vector<double>(dim, 1.0), true),
          Tensor::from_data({dim}, std::vector<double>(dim, 0.0), true)};
}

AttentionBlock init_attention(int dim, std::mt19937_64& rng, double sigma) {
  return {init_weight({dim, dim}, rng, sigma), init_weight({dim, dim}, rng, sigma),
          init_weight({dim, dim}, rng, sigma), init_weight({dim, dim}, rng, sigma)};
}

FeedForward init_ff(int dim, int hidden, std::mt19937_64& rng, double sigma) {
  return {init_weight({dim, hidden}, rng, sigma),
          Tensor::from_data({hidden}, std::vector<double>(hidden, 0.0), true),
          init_weight({hidden, dim}, rng, sigma),
          Tensor::from_data({dim}, std::vector<double>(dim, 0.0), true)};
}

void collect_norm(std::vector<std::pair<std::string, Tensor>>& out,
                  const std::string& prefix, const Norm& n) {
  out.emplace_back(prefix + ".gain", n.gain);
  out.emplace_back(prefix + ".bias", n.bias);
}

void collect_attention(std::vector<std::pair<std::string, Tensor>>& out,
                       const std::string& prefix, const AttentionBlock& a) {
  out.emplace_back(prefix + ".wq", a.wq);
  out.emplace_back(prefix + ".wk", a.wk);
  out.emplace_back(prefix + ".wv", a.wv);
  out.emplace_back(prefix + ".wo", a.wo);
}

void collect_ff(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& prefix, const FeedForward& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg_ = cfg;
  std::mt19937_64 rng(seed);
  const double sigma = 0.08;
  const int max_len = std::max(cfg.max_query_len, cfg.max_doc_len);
  p.token_embedding = init_weight({cfg.vocab_size, cfg.model_dim}, rng, sigma);
  p.position_embedding = init_weight({max_len, cfg.model_dim}, rng, sigma);
  for (int l = 0; l < cfg.num_layers; ++l) {
    EncoderLayer enc;
    enc.ln_attn = init_norm(cfg.model_dim);
    enc.self_attn = init_attention(cfg.model_dim, rng, sigma);
    enc.ln_ff = init_norm(cfg.model_dim);
    enc.ff = init_ff(cfg.model_dim, cfg.feedforward_dim, rng, sigma);
    p.encoder.push_back(std::move(enc));

    DecoderLayer dec;
    dec.ln_self = init_norm(cfg.model_dim);
    dec.self_attn = init_attention(cfg.model_dim, rng, sigma);
    dec.ln_cross = init_norm(cfg.model_dim);
    dec.cross_attn = init_attention(cfg.model_dim, rng, sigma);
    dec.ln_ff = init_norm(cfg.model_dim);
    dec.ff = init_ff(cfg.model_dim, cfg.feedforward_dim, rng, sigma);
    p.decoder.push_back(std::move(dec));
  }
  p.encoder_norm = init_norm(cfg.model_dim);
  p.decoder_norm = init_norm(cfg.model_dim);
  return p;
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.cfg_ = cfg_;
  auto clone_norm = [](const Norm& n) { return Norm{n.gain.clone(), n.bias.clone()}; };
  auto clone_attn = [](const AttentionBlock& a) {
    return AttentionBlock{a.wq.clone(), a.wk.clone(), a.wv.clone(), a.wo.clone()};
  };
  auto clone_ff = [](const FeedForward& f) {
    return FeedForward{f.w1.clone(), f.b1.clone(), f.w2.clone(), f.b2.clone()};
  };
  copy.token_embedding = token_embedding.clone();
  copy.position_embedding = position_embedding.clone();
  for (const auto& l : encoder) {
    copy.encoder.push_back(
        {clone_norm(l.ln_attn), clone_attn(l.self_attn), clone_norm(l.ln_ff), clone_ff(l.ff)});
  }
  for (const auto& l : decoder) {
    copy.decoder.push_back({clone_norm(l.ln_self), clone_attn(l.self_attn),
                            clone_norm(l.ln_cross), clone_attn(l.cross_attn),
                            clone_norm(l.ln_ff), clone_ff(l.ff)});
  }
  copy.encoder_norm = clone_norm(encoder_norm);
  copy.decoder_norm = clone_norm(decoder_norm);
  return copy;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("token_embedding", token_embedding);
  out.emplace_back("position_embedding", position_embedding);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    collect_norm(out, p + ".ln_attn", encoder[l].ln_attn);
    collect_attention(out, p + ".self_attn", encoder[l].self_attn);
    collect_norm(out, p + ".ln_ff", encoder[l].ln_ff);
    collect_ff(out, p + ".ff", encoder[l].ff);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l);
    collect_norm(out, p + ".ln_self", decoder[l].ln_self);
    collect_attention(out, p + ".self_attn", decoder[l].self_attn);
    collect_norm(out, p + ".ln_cross", decoder[l].ln_cross);
    collect_attention(out, p + ".cross_attn", decoder[l].cross_attn);
    collect_norm(out, p + ".ln_ff", decoder[l].ln_ff);
    collect_ff(out, p + ".ff", decoder[l].ff);
  }
  collect_norm(out, "encoder_norm", encoder_norm);
  collect_norm(out, "decoder_norm", decoder_norm);
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void ModelParams::set_requires_grad(bool v) {
  for (auto& t : all()) t.set_requires_grad(v);
}

void ModelParams::zero_grads() {
  for (auto& t : all()) t.zero_grad();
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](std::uint64_t bits) {
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& t : all()) {
    for (double v : t.values()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      mix(bits);
    }
  }
  return h;
}

namespace {

// Multi-head attention. Query rows come from `queries`, keys/values from
// `context`; per-head post-softmax rows are appended to `probs_out` when
// it is non-null (used for the decoder cross-attention record).
Tensor multi_head_attention(Tape& tape, const ModelConfig& cfg, const AttentionBlock& block,
                            const Tensor& queries, const Tensor& context,
                            std::vector<std::vector<double>>* probs_out = nullptr) {
  const int hd = cfg.head_dim();
  Tensor q = tape.matmul(queries, block.wq);
  Tensor k = tape.matmul(context, block.wk);
  Tensor v = tape.matmul(context, block.wv);
  std::vector<Tensor> heads;
  heads.reserve(cfg.num_heads);
  for (int h = 0; h < cfg.num_heads; ++h) {
    Tensor qh = tape.slice_cols(q, h * hd, (h + 1) * hd);
    Tensor kh = tape.slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = tape.slice_cols(v, h * hd, (h + 1) * hd);
    Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(hd));
    Tensor probs = tape.softmax(scores, 1);
    if (probs_out) probs_out->push_back(probs.values());
    heads.push_back(tape.matmul(probs, vh));
  }
  return tape.matmul(tape.concat_cols(heads), block.wo);
}

Tensor feed_forward(Tape& tape, const FeedForward& ff, const Tensor& x) {
  Tensor h = tape.relu(tape.add_bias(tape.matmul(x, ff.w1), ff.b1));
  return tape.add_bias(tape.matmul(h, ff.w2), ff.b2);
}

Tensor norm(Tape& tape, const Norm& n, const Tensor& x) {
  return tape.layer_norm(x, n.gain, n.bias, 1e-6);
}

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// Pre-LN decoder over a single [CLS] position, cross-attending to `context`.
Tensor decode_cls(Tape& tape, const ModelParams& params, const Tensor& context,
                  std::vector<std::vector<std::vector<double>>>* record_rows) {
  const ModelConfig& cfg = params.config();
  Tensor x = tape.add(tape.embed_rows(params.token_embedding, {kClsId}),
                      tape.embed_rows(params.position_embedding, {0}));
  for (const DecoderLayer& layer : params.decoder) {
    Tensor a = norm(tape, layer.ln_self, x);
    x = tape.add(x, multi_head_attention(tape, cfg, layer.self_attn, a, a));
    Tensor c = norm(tape, layer.ln_cross, x);
    std::vector<std::vector<double>> head_rows;
    Tensor attended = multi_head_attention(tape, cfg, layer.cross_attn, c, context,
                                           record_rows ? &head_rows : nullptr);
    if (record_rows) record_rows->push_back(std::move(head_rows));
    x = tape.add(x, attended);
    x = tape.add(x, feed_forward(tape, layer.ff, norm(tape, layer.ln_ff, x)));
  }
  x = norm(tape, params.decoder_norm, x);
  return tape.reshape(x, {cfg.model_dim});
}

}  // namespace

EncodedSegment encode(Tape& tape, const ModelParams& params, std::vector<int> token_ids,
                      Role role) {
  const ModelConfig& cfg = params.config();
  if (token_ids.empty()) throw std::invalid_argument("encode: empty input");
  const int cap = cfg.max_len(role);
  if (static_cast<int>(token_ids.size()) > cap) token_ids.resize(cap);
  for (int id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("encode: id out of range");
  }
  const int len = static_cast<int>(token_ids.size());
  Tensor x = tape.add(tape.embed_rows(params.token_embedding, token_ids),
                      tape.embed_rows(params.position_embedding, iota_ids(len)));
  for (const EncoderLayer& layer : params.encoder) {
    Tensor a = norm(tape, layer.ln_attn, x);
    x = tape.add(x, multi_head_attention(tape, cfg, layer.self_attn, a, a));
    x = tape.add(x, feed_forward(tape, layer.ff, norm(tape, layer.ln_ff, x)));
  }
  x = norm(tape, params.encoder_norm, x);
  EncodedSegment seg;
  seg.is_query = role == Role::query;
  seg.token_ids = std::move(token_ids);
  seg.encoded = x;
  return seg;
}

Tensor embed_text(Tape& tape, const ModelParams& params, const std::vector<int>& token_ids,
                  Role role) {
  EncodedSegment seg = encode(tape, params, token_ids, role);
  Tensor context = tape.concat_rows({seg.encoded});
  return decode_cls(tape, params, context, nullptr);
}

FusedEmbedding embed_query_fused(Tape& tape, const ModelParams& params,
                                 const std::vector<int>& query_ids,
                                 const std::vector<AugDocTokens>& aug_docs) {
  const ModelConfig& cfg = params.config();
  if (static_cast<int>(aug_docs.size()) > cfg.k_default) {
    throw std::invalid_argument("embed_query_fused: more documents than K");
  }
  FusedEmbedding out;
  out.segments.push_back(encode(tape, params, query_ids, Role::query));

  for (const AugDocTokens& doc : aug_docs) {
    std::vector<int> ids;
    ids.reserve(doc.token_ids.size() + 1);
    ids.push_back(kSepId);
    ids.insert(ids.end(), doc.token_ids.begin(), doc.token_ids.end());
    EncodedSegment seg = encode(tape, params, std::move(ids), Role::document);
    seg.doc = doc.doc;
    out.segments.push_back(std::move(seg));
  }

  std::vector<Tensor> parts;
  int offset = 0;
  for (const EncodedSegment& seg : out.segments) {
    SegmentSpan span;
    span.begin = offset;
    span.end = offset + seg.encoded.rows();
    span.is_query = seg.is_query;
    span.doc = seg.doc;
    out.attention.segments.push_back(span);
    offset = span.end;
    parts.push_back(seg.encoded);
  }
  Tensor context = tape.concat_rows(parts);
  out.embedding = decode_cls(tape, params, context, &out.attention.rows);
  return out;
}

}  // namespace moma::model
