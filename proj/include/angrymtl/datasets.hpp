#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace angrymtl {

enum class TaskRole { primary, secondary };
enum class LabelMode { single_label, multi_label };

// Identity, role, and label space of one classification task. Class order is
// fixed: the class index is the position in `classes`.
struct TaskSpec {
  std::string task_id;
  TaskRole role = TaskRole::secondary;
  LabelMode label_mode = LabelMode::single_label;
  std::vector<std::string> classes;
  std::string dataset_path;
  bool dedup = false;

  int class_count() const { return static_cast<int>(classes.size()); }
  // -1 when the name is not a known class
  int class_index(const std::string& name) const;
  void validate() const;
};

struct LabeledExample {
  std::string example_id;
  std::string text;
  std::set<int> labels;  // class indices, ordered
  std::string task_id;
};

enum class RejectReason { unknown_label, malformed_row, empty_text };
const char* to_string(RejectReason r);

struct RejectedRow {
  long row = 0;  // 1-based row number in the file, header = row 1
  RejectReason reason = RejectReason::malformed_row;
  std::string detail;
};

struct DatasetBundle {
  TaskSpec task;
  std::vector<LabeledExample> examples;
  std::map<std::string, long> class_counts;
  std::vector<RejectedRow> rejects;

  long reject_count() const { return static_cast<long>(rejects.size()); }
  long example_count() const { return static_cast<long>(examples.size()); }
};

// Counts gold labels per class name over `examples`.
std::map<std::string, long> count_classes(const TaskSpec& task,
                                          const std::vector<LabeledExample>& examples);

// Reads the canonical 3-column CSV (`id,text,label`). Multi-label cells join
// class names with '|'. Bad rows are rejected and recorded in the bundle,
// never coerced. Input row order is preserved.
DatasetBundle load_dataset(const std::string& path, const TaskSpec& task);
DatasetBundle load_dataset(std::istream& in, const TaskSpec& task);

// Same 3-column format for prediction input; the label cell may be empty
// (unlabeled) or '|'-joined class names. Bad rows throw DataError instead of
// being dropped so output rows stay one-to-one with input rows.
std::vector<LabeledExample> load_prediction_rows(const std::string& path, const TaskSpec& task);

/// Normalization used to detect reposted near-duplicates: strip one leading
// "RT " marker, drop @mentions, fold whitespace runs, lowercase (ASCII).
std::string normalize_for_dedup(const std::string& text);

// Keeps the first example (input order) of every normalized-text group.
DatasetBundle dedup_retweets(const DatasetBundle& bundle);

struct FoldAssignment {
  int k = 5;
  uint64_t seed = 0;
  std::map<std::string, int> fold_of;  // example_id -> fold in [0, k)
};

// Deterministic stratified k-fold split. Single-label tasks stratify on the
// gold class; multi-label tasks stratify on the first (lowest) label index,
// with label-free examples forming their own stratum. Per-class fold counts
// differ by at most 1.
FoldAssignment make_folds(const DatasetBundle& bundle, int k, uint64_t seed);

void write_folds_json(const FoldAssignment& folds, std::ostream& out);
FoldAssignment read_folds_json(std::istream& in);

// Per-example fold ids in `examples` order; every id must be assigned.
std::vector<int> fold_vector(const FoldAssignment& folds,
                             const std::vector<LabeledExample>& examples);

}  // namespace angrymtl
