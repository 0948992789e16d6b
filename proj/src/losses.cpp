#include "angrymtl/losses.hpp"

#include <cmath>

#include "angrymtl/errors.hpp"

namespace angrymtl {

ag::Expr task_loss(ag::Graph& g, ag::Expr logits, const std::set<int>& gold, LabelMode mode) {
  (void)g;
  if (mode == LabelMode::single_label) {
    if (gold.size() != 1) {
      throw InvalidGold("single-label loss needs exactly one gold class, got " +
                        std::to_string(gold.size()));
    }
    return ag::cross_entropy_logits(logits, *gold.begin());
  }
  return ag::bce_mean_logits(logits, gold);
}

double task_loss_value(const Vec& logits, const std::set<int>& gold, LabelMode mode) {
  const long m = logits.size();
  for (int gidx : gold) {
    if (gidx < 0 || gidx >= m) throw InvalidGold("gold class out of range");
  }
  if (mode == LabelMode::single_label) {
    if (gold.size() != 1) {
      throw InvalidGold("single-label loss needs exactly one gold class, got " +
                        std::to_string(gold.size()));
    }
    double zmax = logits.maxCoeff();
    double lse = 0.0;
    for (long j = 0; j < m; ++j) lse += std::exp(logits(j) - zmax);
    return std::log(lse) + zmax - logits(*gold.begin());
  }
  double total = 0.0;
  for (long j = 0; j < m; ++j) {
    double y = gold.count(static_cast<int>(j)) > 0 ? 1.0 : 0.0;
    total += std::max(logits(j), 0.0) - logits(j) * y + std::log1p(std::exp(-std::abs(logits(j))));
  }
  return total / static_cast<double>(m);
}

LossWeights add_loss_weights(ParamStore& store, int task_count) {
  if (task_count < 1) throw ConfigError("need at least one task");
  LossWeights lw;
  lw.logits = &store.add("loss.logits", task_count, 1);
  return lw;
}

Vec beta_values(const LossWeights& lw) {
  const Vec& z = lw.logits->value.col(0);
  double zmax = z.maxCoeff();
  Vec e = (z.array() - zmax).exp();
  return e / e.sum();
}

ag::Expr multitask_loss(ag::Graph& g, const LossWeights& lw,
                        const std::vector<std::pair<int, ag::Expr>>& task_losses) {
  if (task_losses.empty()) throw LengthMismatch("multitask loss needs at least one task loss");
  const int k = lw.task_count();
  ag::Expr beta = ag::softmax_vec(g.param(*lw.logits));
  bool have = false;
  ag::Expr phi;
  for (const auto& [idx, loss] : task_losses) {
    if (idx < 0 || idx >= k) throw LengthMismatch("task index out of range for loss weights");
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw DimensionMismatch("task loss must be scalar");
    }
    ag::Expr term = ag::slice_rows(beta, idx, 1) * loss;
    phi = have ? phi + term : term;
    have = true;
  }
  return phi;
}

double multitask_loss_value(const Vec& weight_logits,
                            const std::vector<std::pair<int, double>>& task_losses) {
  if (task_losses.empty()) throw LengthMismatch("multitask loss needs at least one task loss");
  double zmax = weight_logits.maxCoeff();
  Vec e = (weight_logits.array() - zmax).exp();
  Vec beta = e / e.sum();
  double phi = 0.0;
  for (const auto& [idx, loss] : task_losses) {
    if (idx < 0 || idx >= weight_logits.size()) {
      throw LengthMismatch("task index out of range for loss weights");
    }
    phi += beta(idx) * loss;
  }
  return phi;
}

}  // namespace angrymtl
