#include "angrymtl/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "angrymtl/csv.hpp"
#include "angrymtl/errors.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int TaskSpec::class_index(const std::string& name) const {
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void TaskSpec::validate() const {
  if (task_id.empty()) throw ConfigError("task_id must be non-empty");
  if (classes.empty()) throw ConfigError("task " + task_id + ": classes must be non-empty");
  std::unordered_set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty()) throw ConfigError("task " + task_id + ": empty class name");
    if (!seen.insert(c).second) {
      throw ConfigError("task " + task_id + ": duplicate class name '" + c + "'");
    }
  }
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::unknown_label: return "unknown_label";
    case RejectReason::malformed_row: return "malformed_row";
    case RejectReason::empty_text: return "empty_text";
  }
  return "?";
}

std::map<std::string, long> count_classes(const TaskSpec& task,
                                          const std::vector<LabeledExample>& examples) {
  std::map<std::string, long> counts;
  for (const auto& c : task.classes) counts[c] = 0;
  for (const auto& ex : examples) {
    for (int idx : ex.labels) counts[task.classes.at(static_cast<size_t>(idx))]++;
  }
  return counts;
}

DatasetBundle load_dataset(std::istream& in, const TaskSpec& task) {
  task.validate();
  DatasetBundle bundle;
  bundle.task = task;

  auto rows = read_csv(in);
  if (rows.empty()) throw DataError("task " + task.task_id + ": file has no header row");
  const std::vector<std::string> expected = {"id", "text", "label"};
  if (rows[0] != expected) {
    throw DataError("task " + task.task_id + ": header must be exactly 'id,text,label'");
  }

  std::unordered_set<std::string> seen_ids;
  for (size_t r = 1; r < rows.size(); ++r) {
    const long row_no = static_cast<long>(r + 1);
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // blank trailing line
    if (row.size() != 3) {
      bundle.rejects.push_back({row_no, RejectReason::malformed_row,
                                "expected 3 fields, got " + std::to_string(row.size())});
      continue;
    }
    const std::string& id = row[0];
    const std::string text = row[1];
    const std::string& label_cell = row[2];
    if (id.empty()) {
      bundle.rejects.push_back({row_no, RejectReason::malformed_row, "empty id"});
      continue;
    }
    if (!seen_ids.insert(id).second) {
      bundle.rejects.push_back({row_no, RejectReason::malformed_row, "duplicate id '" + id + "'"});
      continue;
    }
    if (trim(text).empty()) {
      bundle.rejects.push_back({row_no, RejectReason::empty_text, "empty text"});
      continue;
    }

    std::set<int> labels;
    bool ok = true;
    if (task.label_mode == LabelMode::single_label) {
      int idx = task.class_index(label_cell);
      if (idx < 0) {
        bundle.rejects.push_back({row_no, RejectReason::unknown_label, "'" + label_cell + "'"});
        ok = false;
      } else {
        labels.insert(idx);
      }
    } else if (!label_cell.empty()) {  // multi-label: empty cell means no labels
      for (const auto& tok : split(label_cell, '|')) {
        int idx = task.class_index(tok);
        if (idx < 0) {
          bundle.rejects.push_back({row_no, RejectReason::unknown_label, "'" + tok + "'"});
          ok = false;
          break;
        }
        labels.insert(idx);
      }
    }
    if (!ok) continue;

    bundle.examples.push_back({id, text, std::move(labels), task.task_id});
  }

  bundle.class_counts = count_classes(task, bundle.examples);
  return bundle;
}

DatasetBundle load_dataset(const std::string& path, const TaskSpec& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  return load_dataset(in, task);
}

std::vector<LabeledExample> load_prediction_rows(const std::string& path, const TaskSpec& task) {
  task.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file: " + path);

  auto rows = read_csv(in);
  if (rows.empty()) throw DataError("input file has no header row: " + path);
  const std::vector<std::string> expected = {"id", "text", "label"};
  if (rows[0] != expected) {
    throw DataError("input header must be exactly 'id,text,label': " + path);
  }

  std::vector<LabeledExample> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    const long row_no = static_cast<long>(r + 1);
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 3) {
      throw DataError("input row " + std::to_string(row_no) + ": expected 3 fields, got " +
                      std::to_string(row.size()));
    }
    if (row[0].empty()) throw DataError("input row " + std::to_string(row_no) + ": empty id");
    if (trim(row[1]).empty()) {
      throw DataError("input row " + std::to_string(row_no) + ": empty text");
    }
    // gold labels are optional for prediction input
    std::set<int> labels;
    if (!row[2].empty()) {
      for (const auto& tok : split(row[2], '|')) {
        int idx = task.class_index(tok);
        if (idx < 0) {
          throw DataError("input row " + std::to_string(row_no) + ": unknown label '" + tok +
                          "'");
        }
        labels.insert(idx);
      }
    }
    out.push_back({row[0], row[1], std::move(labels), task.task_id});
  }
  return out;
}

std::string normalize_for_dedup(const std::string& text) {
  std::string s = trim(text);
  if (s.size() >= 3 && (s[0] == 'R' || s[0] == 'r') && (s[1] == 'T' || s[1] == 't') &&
      (s[2] == ' ' || s[2] == '\t')) {
    s = s.substr(3);
  }
  // Drop @mentions; whitespace folding below cleans up the gap they leave.
  std::string no_mentions;
  for (size_t i = 0; i < s.size();) {
    if (s[i] == '@') {
      size_t j = i + 1;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      if (j > i + 1) {
        i = j;
        continue;
      }
    }
    no_mentions.push_back(s[i]);
    ++i;
  }
  std::string out;
  bool pending_space = false;
  for (char c : no_mentions) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

DatasetBundle dedup_retweets(const DatasetBundle& bundle) {
  DatasetBundle out;
  out.task = bundle.task;
  out.rejects = bundle.rejects;
  std::unordered_set<std::string> seen;
  for (const auto& ex : bundle.examples) {
    if (seen.insert(normalize_for_dedup(ex.text)).second) {
      out.examples.push_back(ex);
    }
  }
  out.class_counts = count_classes(out.task, out.examples);
  return out;
}

FoldAssignment make_folds(const DatasetBundle& bundle, int k, uint64_t seed) {
  if (k < 2) throw TooFewExamples("make_folds: k must be >= 2");
  const long n = bundle.example_count();
  if (n < k) {
    throw TooFewExamples("make_folds: need at least k=" + std::to_string(k) + " examples, have " +
                         std::to_string(n));
  }

  // stratum key: gold class index (first label for multi-label), -1 if none
  std::map<int, std::vector<size_t>> strata;
  for (size_t i = 0; i < bundle.examples.size(); ++i) {
    const auto& labels = bundle.examples[i].labels;
    int key = labels.empty() ? -1 : *labels.begin();
    strata[key].push_back(i);
  }

  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;

  Rng rng(seed);
  // Round-robin within each stratum; the offset rolls across strata so the
  // overall fold sizes stay balanced too.
  int offset = 0;
  for (auto& [key, members] : strata) {
    (void)key;
    rng.shuffle(members);
    for (size_t i = 0; i < members.size(); ++i) {
      int fold = static_cast<int>((offset + i) % static_cast<size_t>(k));
      folds.fold_of[bundle.examples[members[i]].example_id] = fold;
    }
    offset = static_cast<int>((offset + members.size()) % static_cast<size_t>(k));
  }
  return folds;
}

void write_folds_json(const FoldAssignment& folds, std::ostream& out) {
  nlohmann::ordered_json j;
  j["k"] = folds.k;
  j["seed"] = folds.seed;
  j["fold_of"] = nlohmann::ordered_json::object();
  for (const auto& [id, f] : folds.fold_of) j["fold_of"][id] = f;
  out << j.dump(2) << '\n';
}

FoldAssignment read_folds_json(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in);
  FoldAssignment folds;
  folds.k = j.at("k").get<int>();
  folds.seed = j.at("seed").get<uint64_t>();
  for (const auto& [id, f] : j.at("fold_of").items()) {
    folds.fold_of[id] = f.get<int>();
  }
  return folds;
}

std::vector<int> fold_vector(const FoldAssignment& folds,
                             const std::vector<LabeledExample>& examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const LabeledExample& ex : examples) {
    auto it = folds.fold_of.find(ex.example_id);
    if (it == folds.fold_of.end()) {
      throw DataError("no fold assigned to example " + ex.example_id);
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace angrymtl
