#pragma once

#include <set>
#include <string>
#include <vector>

#include "angrymtl/datasets.hpp"
#include "angrymtl/graph.hpp"
#include "angrymtl/params.hpp"

namespace angrymtl {

// alpha = sigmoid(w_l * h_private + w_b * o_shared + b)
// joint = alpha .* h_private + (1 - alpha) .* o_shared
struct GateParams {
  Tensor* w_l;  // d x d
  Tensor* w_b;  // d x d
  Tensor* b;    // d x 1
};

GateParams add_gate(ParamStore& store, const std::string& task_id, int d);
void init_gate(const GateParams& p, uint64_t seed);

struct GateFusion {
  ag::Expr alpha;
  ag::Expr joint;
};

GateFusion gate_fuse(ag::Graph& g, const GateParams& p, ag::Expr h_private, ag::Expr o_shared);

// Classification head: linear -> relu -> optional non-affine layer norm ->
// dropout (training only) -> linear to class logits.
struct HeadConfig {
  int hidden = 256;
  double dropout = 0.1;
  bool layer_norm = true;
};

struct HeadParams {
  Tensor* w_f;  // hidden x input_dim
  Tensor* b_f;  // hidden x 1
  Tensor* w_e;  // classes x hidden
  Tensor* b_e;  // classes x 1
};

HeadParams add_head(ParamStore& store, const std::string& task_id, int input_dim,
                    const HeadConfig& cfg, int classes);
void init_head(const HeadParams& p, uint64_t seed);

// dropout_rng == nullptr means inference mode (no dropout).
ag::Expr head_logits(ag::Graph& g, const HeadParams& p, const HeadConfig& cfg, ag::Expr joint,
                     Rng* dropout_rng);

// Per-class scores on the probability scale: softmax over classes in
// single-label mode, independent sigmoids in multi-label mode.
struct Prediction {
  LabelMode mode = LabelMode::single_label;
  std::vector<double> scores;
};

Prediction classify(const Vec& logits, LabelMode mode);
// argmax in single-label mode; score >= 0.5 in multi-label mode.
std::set<int> predict_labels(const Prediction& p);

}  // namespace angrymtl
