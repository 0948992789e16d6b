#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "angrymtl/checkpoint.hpp"
#include "angrymtl/model.hpp"
#include "angrymtl/training.hpp"

namespace angrymtl {

// Pooled micro counts over all classes and instances.
struct MetricsTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long support = 0;  // tp + fn: total gold labels
};

MetricsTriple micro_prf(const std::vector<std::set<int>>& preds,
                        const std::vector<std::set<int>>& golds);

// Aggregate over folds: precision/recall/f1 are the unweighted fold means,
// the counts are fold sums.
struct MetricsReport {
  std::string task;
  MetricsTriple mean;
  std::vector<MetricsTriple> per_fold;
};

// Builds a freshly initialized model; used once per fold and per ablation
// subset so every run starts from the same seed-derived state.
struct ModelFactory {
  ModelConfig cfg;
  StaticVectors vectors;
  ContextualTokenizer tokenizer;
  std::optional<Checkpoint> pretrained_shared;

  std::unique_ptr<MultitaskModel> build(uint64_t seed) const;
  // Same factory restricted to the primary task plus the given secondaries.
  ModelFactory with_secondary(const std::vector<std::string>& secondary_ids) const;
};

// data must hold one entry per factory task, in factory task order; fold_of
// assigns each primary example to a fold (parallel to the primary entry).
// Each fold trains on out-of-fold primary data plus all secondary data with
// seed mix(train seed, fold) and evaluates primary micro metrics on the fold.
MetricsReport cross_validate(const ModelFactory& factory, const std::vector<TaskData>& data,
                             const std::vector<int>& fold_of, int k, const TrainConfig& tcfg,
                             int jobs = 1);

struct AblationRow {
  std::vector<std::string> secondary;  // sorted ids; empty = single-task baseline
  MetricsReport report;
};

// One cross_validate per subset, same folds and seeds throughout.
std::vector<AblationRow> ablation_sweep(const ModelFactory& factory,
                                        const std::vector<TaskData>& data,
                                        const std::vector<int>& fold_of, int k,
                                        const TrainConfig& tcfg,
                                        const std::vector<std::vector<std::string>>& subsets,
                                        int jobs = 1);

// All 2^n subsets of the given ids, in bitmask order over the sorted ids.
std::vector<std::vector<std::string>> all_subsets(std::vector<std::string> ids);
// "+"-joined sorted ids; "-" for the empty subset.
std::string subset_label(const std::vector<std::string>& ids);

struct CaseRecord {
  std::string example_id;
  std::string text;
  std::set<int> gold_idx;
  std::set<int> primary_idx;
  std::vector<std::string> gold;     // class names, index order
  std::vector<std::string> primary;  // predicted class names
  std::vector<std::pair<std::string, std::vector<std::string>>> secondary;
  bool correct = false;
};

// Copies every model tensor out of the checkpoint; a missing head raises
// MissingHead(task_id), any other absence or shape disagreement ShapeMismatch.
// Extra checkpoint tensors are ignored.
void apply_prediction_checkpoint(MultitaskModel& model, const Checkpoint& ckpt);

// One shared-encoder pass per example, then every task's private path and
// head. Records follow the input order.
std::vector<CaseRecord> export_case_studies(MultitaskModel& model,
                                            const std::vector<LabeledExample>& examples);

void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
void write_case_jsonl(const std::vector<CaseRecord>& records, std::ostream& out);
void write_case_jsonl_file(const std::vector<CaseRecord>& records, const std::string& path);

}  // namespace angrymtl
