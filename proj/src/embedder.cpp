#include "moma/embedder.hpp"

#include <cstdio>

#include "moma/timing.hpp"

namespace moma::model {

namespace {

std::string checksum_hex(const ModelParams& params) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(params.checksum()));
  return buf;
}

}  // namespace

TextEmbedder::TextEmbedder(const ModelParams& params,
                           std::shared_ptr<const workbench::Vocabulary> vocab,
                           std::string name)
    : params_(params.clone()), vocab_(std::move(vocab)) {
  params_.set_requires_grad(false);
  version_ = name + "@" + checksum_hex(params_);
}

std::vector<double> TextEmbedder::embed(const Document& doc) const {
  nn::Tape tape(false);
  auto ids = workbench::tokenize(*vocab_, workbench::doc_text(doc),
                                 params_.config().max_doc_len);
  return embed_text(tape, params_, ids, Role::document).values();
}

std::vector<double> embed_query_vec(const ModelParams& params,
                                    const workbench::Vocabulary& vocab,
                                    const std::string& text) {
  nn::Tape tape(false);
  auto timer = PhaseTimers::global().scope("query_encoding");
  auto ids = workbench::tokenize(vocab, text, params.config().max_query_len);
  return embed_text(tape, params, ids, Role::query).values();
}

}  // namespace moma::model
