#include "angrymtl/training.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include <nlohmann/json.hpp>

#include "angrymtl/errors.hpp"
#include "angrymtl/losses.hpp"
#include "angrymtl/optim.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate_shared <= 0.0 || learning_rate_other <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  if (optimizer != "adam_type") throw ConfigError("unknown optimizer: " + optimizer);
  if (grad_clip_norm.has_value() && *grad_clip_norm <= 0.0) {
    throw ConfigError("grad_clip_norm must be positive when set");
  }
}

std::vector<Batch> schedule_batches(const std::vector<TaskData>& data, const TrainConfig& cfg,
                                    int epoch) {
  cfg.validate();
  std::vector<Batch> combined;
  for (const TaskData& td : data) {
    if (td.examples.empty()) throw EmptyTask("task has no training examples: " + td.task_id);
    for (size_t at = 0; at < td.examples.size(); at += static_cast<size_t>(cfg.batch_size)) {
      Batch b;
      b.task_id = td.task_id;
      const size_t end = std::min(td.examples.size(), at + static_cast<size_t>(cfg.batch_size));
      for (size_t i = at; i < end; ++i) b.examples.push_back(&td.examples[i]);
      combined.push_back(std::move(b));
    }
  }
  Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
  rng.shuffle(combined);
  return combined;
}

TrainResult train(MultitaskModel& model, const std::vector<TaskData>& data, const TrainConfig& cfg,
                  std::ostream* log_stream, const StepCallback& on_step) {
  cfg.validate();
  for (const TaskData& td : data) model.task_index(td.task_id);  // UnknownTask early

  Adam opt(cfg.learning_rate_shared, cfg.learning_rate_other);
  Rng dropout_rng(mix_seed(cfg.seed, fnv1a("dropout")));

  TrainResult result;
  long global_step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Batch> schedule = schedule_batches(data, cfg, epoch);

    // Per-task queues in schedule order; windows pop one batch per live task.
    std::vector<std::deque<const Batch*>> queues(data.size());
    for (const Batch& b : schedule) {
      for (size_t t = 0; t < data.size(); ++t) {
        if (data[t].task_id == b.task_id) {
          queues[t].push_back(&b);
          break;
        }
      }
    }

    std::vector<double> loss_sum(data.size(), 0.0);
    std::vector<long> loss_count(data.size(), 0);

    bool remaining = true;
    while (remaining) {
      remaining = false;
      std::vector<std::pair<size_t, const Batch*>> window;
      for (size_t t = 0; t < queues.size(); ++t) {
        if (queues[t].empty()) continue;
        window.emplace_back(t, queues[t].front());
        queues[t].pop_front();
        if (!queues[t].empty()) remaining = true;
      }
      if (window.empty()) break;

      ag::Graph g;
      std::vector<std::pair<int, ag::Expr>> window_losses;
      for (const auto& [t, batch] : window) {
        const std::string& task_id = batch->task_id;
        const LabelMode mode = model.task(task_id).label_mode;
        bool have = false;
        ag::Expr batch_loss;
        for (const LabeledExample* ex : batch->examples) {
          TokenizedExample tok = model.tokenize(ex->text);
          ag::Expr lg = model.logits(g, task_id, tok, &dropout_rng);
          ag::Expr l = task_loss(g, lg, ex->labels, mode);
          batch_loss = have ? batch_loss + l : l;
          have = true;
        }
        window_losses.emplace_back(model.task_index(task_id), batch_loss);
        loss_sum[t] += batch_loss.scalar();
        loss_count[t] += static_cast<long>(batch->examples.size());
      }

      ag::Expr phi = multitask_loss(g, model.loss_weights(), window_losses);
      const double phi_value = phi.scalar();
      if (!std::isfinite(phi_value)) {
        std::ostringstream msg;
        msg << "non-finite combined loss at step " << global_step << " (epoch " << epoch << ")";
        for (const auto& [idx, l] : window_losses) {
          msg << "; task[" << idx << "] loss " << l.scalar();
        }
        throw NonFiniteLoss(msg.str(), global_step);
      }

      model.params().zero_grads();
      g.backward(phi);
      if (cfg.grad_clip_norm.has_value()) {
        model.params().clip_grad_norm(*cfg.grad_clip_norm);
      }
      opt.step(model.params());
      ++global_step;
      if (on_step) on_step(global_step, beta_values(model.loss_weights()), phi_value);
    }

    EpochLog log;
    log.epoch = epoch;
    for (size_t t = 0; t < data.size(); ++t) {
      const double mean =
          loss_count[t] > 0 ? loss_sum[t] / static_cast<double>(loss_count[t]) : 0.0;
      log.per_task_loss.emplace_back(data[t].task_id, mean);
    }
    const Vec beta = beta_values(model.loss_weights());
    log.beta.assign(beta.data(), beta.data() + beta.size());
    log.lr_shared = cfg.learning_rate_shared;
    log.lr_other = cfg.learning_rate_other;
    result.epochs.push_back(log);

    if (log_stream != nullptr) {
      nlohmann::ordered_json line;
      line["epoch"] = log.epoch;
      nlohmann::ordered_json ptl = nlohmann::ordered_json::object();
      for (const auto& [task_id, v] : log.per_task_loss) ptl[task_id] = v;
      line["per_task_loss"] = std::move(ptl);
      line["beta"] = log.beta;
      line["lr"] = {{"shared", log.lr_shared}, {"other", log.lr_other}};
      (*log_stream) << line.dump() << '\n';
    }
  }

  result.steps = global_step;
  return result;
}

}  // namespace angrymtl
