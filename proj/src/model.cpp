#include "angrymtl/model.hpp"

#include "angrymtl/errors.hpp"

namespace angrymtl {

void ModelConfig::validate() const {
  if (tasks.empty()) throw ConfigError("model needs at least one task");
  int primaries = 0;
  for (const TaskSpec& t : tasks) {
    t.validate();
    if (t.role == TaskRole::primary) ++primaries;
  }
  if (primaries != 1) {
    throw ConfigError("exactly one primary task required, got " + std::to_string(primaries));
  }
  for (size_t i = 0; i < tasks.size(); ++i) {
    for (size_t j = i + 1; j < tasks.size(); ++j) {
      if (tasks[i].task_id == tasks[j].task_id) {
        throw ConfigError("duplicate task id: " + tasks[i].task_id);
      }
    }
  }
  if (static_dim <= 0) throw ConfigError("static_dim must be positive");
  if (recurrent_hidden <= 0) throw ConfigError("recurrent_hidden must be positive");
  if (2 * recurrent_hidden != dims.d) {
    throw ConfigError("2*recurrent_hidden must equal encoder width d (" +
                      std::to_string(2 * recurrent_hidden) + " vs " + std::to_string(dims.d) +
                      ")");
  }
}

int ModelConfig::primary_index() const {
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].role == TaskRole::primary) return static_cast<int>(i);
  }
  throw ConfigError("no primary task");
}

MultitaskModel::MultitaskModel(ModelConfig cfg, const StaticVectors& vectors,
                               ContextualTokenizer tokenizer)
    : cfg_(std::move(cfg)), tok_(std::move(tokenizer)), static_vocab_(vectors.vocab) {
  cfg_.validate();
  if (vectors.table.cols() != cfg_.static_dim) {
    throw ConfigError("static vector width " + std::to_string(vectors.table.cols()) +
                      " does not match static_dim " + std::to_string(cfg_.static_dim));
  }
  if (vectors.table.rows() != vectors.vocab.size) {
    throw ConfigError("static vector table rows do not match vocabulary size");
  }

  shared_ = add_shared_encoder(store_, cfg_.dims);
  for (const TaskSpec& t : cfg_.tasks) {
    TaskComponents tc;
    tc.lstm = add_private_encoder(store_, t.task_id, cfg_.static_dim, cfg_.recurrent_hidden);
    tc.gate = add_gate(store_, t.task_id, cfg_.dims.d);
    tc.head = add_head(store_, t.task_id, cfg_.dims.d, cfg_.head, t.class_count());
    components_.push_back(tc);
  }
  loss_weights_ = add_loss_weights(store_, static_cast<int>(cfg_.tasks.size()));
  static_embed_ = &store_.add("static.embed", vectors.table.rows(), vectors.table.cols(),
                              /*trainable=*/false);
  static_embed_->value = vectors.table;
}

void MultitaskModel::init_params(uint64_t seed) {
  init_shared_encoder(shared_, seed);
  for (const TaskComponents& tc : components_) {
    init_private_encoder(tc.lstm, seed);
    init_gate(tc.gate, seed);
    init_head(tc.head, seed);
  }
  loss_weights_.logits->value.setZero();
}

TokenizedExample MultitaskModel::tokenize(const std::string& text) const {
  TokenizedExample ex;
  ex.ctx_ids = tok_.encode(text, cfg_.dims.max_len);
  ex.word_ids = static_vocab_.encode(text);
  return ex;
}

int MultitaskModel::task_index(const std::string& task_id) const {
  for (size_t i = 0; i < cfg_.tasks.size(); ++i) {
    if (cfg_.tasks[i].task_id == task_id) return static_cast<int>(i);
  }
  throw UnknownTask("unknown task: " + task_id);
}

const TaskSpec& MultitaskModel::task(const std::string& task_id) const {
  return cfg_.tasks[static_cast<size_t>(task_index(task_id))];
}

ag::Expr MultitaskModel::shared_out(ag::Graph& g, const TokenizedExample& ex) {
  return shared_encode(g, shared_, ex.ctx_ids);
}

ag::Expr MultitaskModel::task_logits_from_shared(ag::Graph& g, const std::string& task_id,
                                                 const TokenizedExample& ex, ag::Expr shared,
                                                 Rng* dropout_rng) {
  const TaskComponents& tc = components_[static_cast<size_t>(task_index(task_id))];
  ag::Expr embedded = g.lookup(*static_embed_, ex.word_ids);
  ag::Expr h_private = private_encode(g, tc.lstm, embedded);
  GateFusion fused = gate_fuse(g, tc.gate, h_private, shared);
  return head_logits(g, tc.head, cfg_.head, fused.joint, dropout_rng);
}

ag::Expr MultitaskModel::logits(ag::Graph& g, const std::string& task_id,
                                const TokenizedExample& ex, Rng* dropout_rng) {
  return task_logits_from_shared(g, task_id, ex, shared_out(g, ex), dropout_rng);
}

}  // namespace angrymtl
