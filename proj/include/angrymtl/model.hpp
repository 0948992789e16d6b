#pragma once

#include <string>
#include <vector>

#include "angrymtl/datasets.hpp"
#include "angrymtl/encoders.hpp"
#include "angrymtl/fusion.hpp"
#include "angrymtl/losses.hpp"
#include "angrymtl/params.hpp"

namespace angrymtl {

struct ModelConfig {
  std::vector<TaskSpec> tasks;  // exactly one primary; order fixes loss-weight indices
  TransformerDims dims;
  int static_dim = 300;
  int recurrent_hidden = 384;  // per direction; 2*recurrent_hidden must equal dims.d
  HeadConfig head;

  void validate() const;
  int primary_index() const;
};

struct TokenizedExample {
  std::vector<int> ctx_ids;   // shared-encoder subword ids, [CLS] ... [SEP]
  std::vector<int> word_ids;  // static-table ids, one per surface token
};

// Owns every parameter tensor. Naming: "shared.*" for the shared encoder,
// "task.<id>.{lstm,gate,head}.*" per task, "loss.logits" for the combination
// weights, "static.embed" for the frozen word-vector table.
class MultitaskModel {
 public:
  MultitaskModel(ModelConfig cfg, const StaticVectors& vectors, ContextualTokenizer tokenizer);
  MultitaskModel(const MultitaskModel&) = delete;
  MultitaskModel& operator=(const MultitaskModel&) = delete;

  // Seeds every trainable tensor; the static table keeps its loaded values
  // and the loss-weight logits stay zero (equal weights).
  void init_params(uint64_t seed);

  TokenizedExample tokenize(const std::string& text) const;

  // Full forward for one example on one task. dropout_rng == nullptr means
  // inference mode.
  ag::Expr logits(ag::Graph& g, const std::string& task_id, const TokenizedExample& ex,
                  Rng* dropout_rng);
  // Split form for running several heads off one shared encoding.
  ag::Expr shared_out(ag::Graph& g, const TokenizedExample& ex);
  ag::Expr task_logits_from_shared(ag::Graph& g, const std::string& task_id,
                                   const TokenizedExample& ex, ag::Expr shared,
                                   Rng* dropout_rng);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TaskSpec>& tasks() const { return cfg_.tasks; }
  const TaskSpec& task(const std::string& task_id) const;
  int task_index(const std::string& task_id) const;  // UnknownTask when absent

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ContextualTokenizer& tokenizer() const { return tok_; }
  const StaticVocabulary& static_vocab() const { return static_vocab_; }
  const LossWeights& loss_weights() const { return loss_weights_; }
  const SharedEncoderParams& shared_encoder() const { return shared_; }

 private:
  struct TaskComponents {
    PrivateEncoderParams lstm;
    GateParams gate;
    HeadParams head;
  };

  ModelConfig cfg_;
  ContextualTokenizer tok_;
  StaticVocabulary static_vocab_;
  ParamStore store_;
  SharedEncoderParams shared_;
  std::vector<TaskComponents> components_;
  LossWeights loss_weights_;
  Tensor* static_embed_ = nullptr;
};

}  // namespace angrymtl
