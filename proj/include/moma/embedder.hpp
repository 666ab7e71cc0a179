#pragma once

#include <memory>
#include <string>

#include "moma/memory.hpp"
#include "moma/model.hpp"
#include "moma/vocab.hpp"

namespace moma::model {

// Bridges a retriever's document encoder g(d) into the memory module. Holds
// a deep snapshot of the parameters, so later training steps never leak into
// an index built from this embedder.
class TextEmbedder : public memory::DocumentEmbedder {
 public:
  TextEmbedder(const ModelParams& params, std::shared_ptr<const workbench::Vocabulary> vocab,
               std::string name);

  int dim() const override { return params_.config().model_dim; }
  std::vector<double> embed(const Document& doc) const override;
  std::string version_tag() const override { return version_; }

 private:
  ModelParams params_;
  std::shared_ptr<const workbench::Vocabulary> vocab_;
  std::string version_;
};

// Plain query embedding q = g(q) with the given parameters.
std::vector<double> embed_query_vec(const ModelParams& params,
                                    const workbench::Vocabulary& vocab,
                                    const std::string& text);

}  // namespace moma::model
