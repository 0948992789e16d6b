#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "angrymtl/datasets.hpp"
#include "angrymtl/model.hpp"

namespace angrymtl {

struct TrainConfig {
  int epochs = 1;  // 0 trains nothing and leaves the initialization untouched
  int batch_size = 8;
  double learning_rate_shared = 2e-5;
  double learning_rate_other = 1e-3;
  uint64_t seed = 0;
  std::string optimizer = "adam_type";
  std::optional<double> grad_clip_norm = 1.0;  // nullopt disables clipping

  void validate() const;
};

// One task's training split, in the order batches are chunked from.
struct TaskData {
  std::string task_id;
  std::vector<LabeledExample> examples;
};

struct Batch {
  std::string task_id;
  std::vector<const LabeledExample*> examples;
};

// Chunks each task's examples into ceil(n/batch_size) batches, then shuffles
// the combined batch list with a (seed, epoch)-derived generator. Pointers
// alias into `data`, which must outlive the schedule.
std::vector<Batch> schedule_batches(const std::vector<TaskData>& data, const TrainConfig& cfg,
                                    int epoch);

struct EpochLog {
  int epoch = 0;
  std::vector<std::pair<std::string, double>> per_task_loss;  // mean per instance
  std::vector<double> beta;
  double lr_shared = 0.0;
  double lr_other = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  long steps = 0;
};

using StepCallback = std::function<void(long step, const Vec& beta, double phi)>;

// One optimizer step consumes a window holding one batch from every task that
// still has batches this epoch; per-task window losses are summed over the
// batch and combined with the learned weights. Throws NonFiniteLoss with the
// failing step index. Writes one JSON line per epoch to log_stream when set.
TrainResult train(MultitaskModel& model, const std::vector<TaskData>& data,
                  const TrainConfig& cfg, std::ostream* log_stream = nullptr,
                  const StepCallback& on_step = nullptr);

}  // namespace angrymtl
