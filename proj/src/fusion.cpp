#include "angrymtl/fusion.hpp"

#include <cmath>

#include "angrymtl/errors.hpp"

namespace angrymtl {

GateParams add_gate(ParamStore& store, const std::string& task_id, int d) {
  if (d <= 0) throw ConfigError("gate width must be positive");
  GateParams p;
  const std::string base = "task." + task_id + ".gate.";
  p.w_l = &store.add(base + "w_l", d, d);
  p.w_b = &store.add(base + "w_b", d, d);
  p.b = &store.add(base + "b", d, 1);
  return p;
}

void init_gate(const GateParams& p, uint64_t seed) {
  fill_xavier(*p.w_l, seed);
  fill_xavier(*p.w_b, seed);
}

GateFusion gate_fuse(ag::Graph& g, const GateParams& p, ag::Expr h_private, ag::Expr o_shared) {
  if (h_private.cols() != 1 || o_shared.cols() != 1 || h_private.rows() != o_shared.rows()) {
    throw DimensionMismatch("gate inputs must be equal-length column vectors");
  }
  if (h_private.rows() != p.w_l->value.rows()) {
    throw DimensionMismatch("gate width " + std::to_string(p.w_l->value.rows()) +
                            " does not match input length " + std::to_string(h_private.rows()));
  }
  GateFusion f;
  f.alpha = ag::sigmoid(ag::matmul(g.param(*p.w_l), h_private) +
                        ag::matmul(g.param(*p.w_b), o_shared) + g.param(*p.b));
  f.joint = f.alpha * h_private + ag::ones_minus(f.alpha) * o_shared;
  return f;
}

HeadParams add_head(ParamStore& store, const std::string& task_id, int input_dim,
                    const HeadConfig& cfg, int classes) {
  if (cfg.hidden <= 0 || classes <= 0 || input_dim <= 0) {
    throw ConfigError("head dims must be positive");
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("head dropout must be in [0, 1)");
  HeadParams p;
  const std::string base = "task." + task_id + ".head.";
  p.w_f = &store.add(base + "w_f", cfg.hidden, input_dim);
  p.b_f = &store.add(base + "b_f", cfg.hidden, 1);
  p.w_e = &store.add(base + "w_e", classes, cfg.hidden);
  p.b_e = &store.add(base + "b_e", classes, 1);
  return p;
}

void init_head(const HeadParams& p, uint64_t seed) {
  fill_xavier(*p.w_f, seed);
  fill_xavier(*p.w_e, seed);
}

ag::Expr head_logits(ag::Graph& g, const HeadParams& p, const HeadConfig& cfg, ag::Expr joint,
                     Rng* dropout_rng) {
  ag::Expr h = ag::relu(ag::matmul(g.param(*p.w_f), joint) + g.param(*p.b_f));
  if (cfg.layer_norm) {
    h = ag::transpose(ag::layer_norm_rows(ag::transpose(h)));
  }
  if (dropout_rng != nullptr && cfg.dropout > 0.0) {
    h = ag::dropout(h, cfg.dropout, *dropout_rng);
  }
  return ag::matmul(g.param(*p.w_e), h) + g.param(*p.b_e);
}

Prediction classify(const Vec& logits, LabelMode mode) {
  Prediction out;
  out.mode = mode;
  out.scores.resize(static_cast<size_t>(logits.size()));
  if (mode == LabelMode::single_label) {
    double zmax = logits.maxCoeff();
    double denom = 0.0;
    for (long j = 0; j < logits.size(); ++j) denom += std::exp(logits(j) - zmax);
    for (long j = 0; j < logits.size(); ++j) {
      out.scores[static_cast<size_t>(j)] = std::exp(logits(j) - zmax) / denom;
    }
  } else {
    for (long j = 0; j < logits.size(); ++j) {
      double z = logits(j);
      out.scores[static_cast<size_t>(j)] =
          z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  }
  return out;
}

std::set<int> predict_labels(const Prediction& p) {
  std::set<int> out;
  if (p.scores.empty()) return out;
  if (p.mode == LabelMode::single_label) {
    size_t best = 0;
    for (size_t j = 1; j < p.scores.size(); ++j) {
      if (p.scores[j] > p.scores[best]) best = j;
    }
    out.insert(static_cast<int>(best));
  } else {
    for (size_t j = 0; j < p.scores.size(); ++j) {
      if (p.scores[j] >= 0.5) out.insert(static_cast<int>(j));
    }
  }
  return out;
}

}  // namespace angrymtl
