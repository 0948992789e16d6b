#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "angrymtl/evaluation.hpp"
#include "angrymtl/training.hpp"

namespace angrymtl {

// One JSON file drives every subcommand. The schema is strict: any key the
// parser does not know, at any level, is a ConfigError.
struct RunConfig {
  std::vector<TaskSpec> tasks;

  // encoder
  int d = 768;
  int recurrent_hidden = 384;
  int static_dim = 300;
  int max_len = 128;
  std::string shared_variant = "tiny_random";  // or "pretrained"

  HeadConfig head;
  TrainConfig train;

  int eval_k = 5;
  uint64_t eval_seed = 0;

  std::string checkpoint_dir = ".";
  std::string output_dir = ".";
  std::string static_vectors;         // empty: seeded random fallback table
  std::string pretrained_checkpoint;  // directory; required for "pretrained"

  int primary_index() const;
  void validate() const;

  nlohmann::ordered_json snapshot() const;  // stored in checkpoints
};

RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::string& path);

// Resolves the tokenizer, static table, dims, and any pretrained weights.
ModelFactory build_factory(const RunConfig& rc);

// Loads every task's dataset in task order, applying dedup where flagged.
// The raw bundles (with rejects and counts) go to bundles_out when non-null.
std::vector<TaskData> load_task_data(const RunConfig& rc,
                                     std::vector<DatasetBundle>* bundles_out = nullptr);

}  // namespace angrymtl
