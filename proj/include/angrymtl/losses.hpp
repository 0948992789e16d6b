#pragma once

#include <set>
#include <utility>
#include <vector>

#include "angrymtl/datasets.hpp"
#include "angrymtl/graph.hpp"
#include "angrymtl/params.hpp"

namespace angrymtl {

// Per-example classification loss from logits (a column vector):
//  single_label: negative log softmax probability of the one gold class
//  multi_label: mean over classes of binary cross-entropy against the
//  indicator vector of the gold set
ag::Expr task_loss(ag::Graph& g, ag::Expr logits, const std::set<int>& gold, LabelMode mode);
double task_loss_value(const Vec& logits, const std::set<int>& gold, LabelMode mode);

// Learned combination weights: beta = softmax(logits) over all K tasks.
struct LossWeights {
  Tensor* logits = nullptr;  // K x 1
  int task_count() const { return logits == nullptr ? 0 : static_cast<int>(logits->value.rows()); }
};

LossWeights add_loss_weights(ParamStore& store, int task_count);
Vec beta_values(const LossWeights& lw);

// Phi = sum over the given (task index, loss) pairs of beta_i * M_i. beta is
// the softmax over all K logits even when only a subset of tasks contributes.
ag::Expr multitask_loss(ag::Graph& g, const LossWeights& lw,
                        const std::vector<std::pair<int, ag::Expr>>& task_losses);
double multitask_loss_value(const Vec& weight_logits,
                            const std::vector<std::pair<int, double>>& task_losses);

}  // namespace angrymtl
