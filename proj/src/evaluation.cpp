#include "angrymtl/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "angrymtl/errors.hpp"
#include "angrymtl/fusion.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string> names_for(const TaskSpec& spec, const std::set<int>& idx) {
  std::vector<std::string> out;
  for (int i : idx) {
    if (i < 0 || i >= spec.class_count()) {
      throw InvalidGold("label index " + std::to_string(i) + " out of range for task " +
                        spec.task_id);
    }
    out.push_back(spec.classes[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace

MetricsTriple micro_prf(const std::vector<std::set<int>>& preds,
                        const std::vector<std::set<int>>& golds) {
  if (preds.size() != golds.size()) {
    throw LengthMismatch("micro_prf: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " golds");
  }
  MetricsTriple m;
  for (size_t i = 0; i < preds.size(); ++i) {
    long overlap = 0;
    for (int p : preds[i]) {
      if (golds[i].count(p) > 0) ++overlap;
    }
    m.tp += overlap;
    m.fp += static_cast<long>(preds[i].size()) - overlap;
    m.fn += static_cast<long>(golds[i].size()) - overlap;
  }
  m.support = m.tp + m.fn;
  m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp)
                                  : 0.0;
  m.recall =
      (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

std::unique_ptr<MultitaskModel> ModelFactory::build(uint64_t seed) const {
  auto model = std::make_unique<MultitaskModel>(cfg, vectors, tokenizer);
  model->init_params(seed);
  if (pretrained_shared.has_value()) {
    pretrained_shared->apply_to(model->params(), /*strict=*/false);
  }
  return model;
}

ModelFactory ModelFactory::with_secondary(const std::vector<std::string>& secondary_ids) const {
  ModelFactory out;
  out.vectors = vectors;
  out.tokenizer = tokenizer;
  out.pretrained_shared = pretrained_shared;
  out.cfg = cfg;
  out.cfg.tasks.clear();
  for (const TaskSpec& t : cfg.tasks) {
    const bool keep =
        t.role == TaskRole::primary ||
        std::find(secondary_ids.begin(), secondary_ids.end(), t.task_id) != secondary_ids.end();
    if (keep) out.cfg.tasks.push_back(t);
  }
  for (const std::string& id : secondary_ids) {
    bool found = false;
    for (const TaskSpec& t : out.cfg.tasks) found = found || t.task_id == id;
    if (!found) throw UnknownTask("subset names task not in the configuration: " + id);
  }
  return out;
}

namespace {

MetricsTriple run_fold(const ModelFactory& factory, const std::vector<TaskData>& data,
                       const std::vector<int>& fold_of, int fold, const TrainConfig& tcfg,
                       size_t primary_pos) {
  const uint64_t fold_seed = mix_seed(tcfg.seed, static_cast<uint64_t>(fold));

  std::vector<TaskData> split;
  std::vector<const LabeledExample*> heldout;
  for (size_t t = 0; t < data.size(); ++t) {
    TaskData td;
    td.task_id = data[t].task_id;
    if (t == primary_pos) {
      for (size_t i = 0; i < data[t].examples.size(); ++i) {
        if (fold_of[i] == fold) {
          heldout.push_back(&data[t].examples[i]);
        } else {
          td.examples.push_back(data[t].examples[i]);
        }
      }
    } else {
      td.examples = data[t].examples;
    }
    split.push_back(std::move(td));
  }

  std::unique_ptr<MultitaskModel> model = factory.build(fold_seed);
  TrainConfig fold_cfg = tcfg;
  fold_cfg.seed = fold_seed;
  train(*model, split, fold_cfg);

  const std::string& primary_id = data[primary_pos].task_id;
  const LabelMode mode = model->task(primary_id).label_mode;
  std::vector<std::set<int>> preds;
  std::vector<std::set<int>> golds;
  for (const LabeledExample* ex : heldout) {
    ag::Graph g;
    TokenizedExample tok = model->tokenize(ex->text);
    ag::Expr lg = model->logits(g, primary_id, tok, nullptr);
    preds.push_back(predict_labels(classify(lg.value().col(0), mode)));
    golds.push_back(ex->labels);
  }
  return micro_prf(preds, golds);
}

}  // namespace

MetricsReport cross_validate(const ModelFactory& factory, const std::vector<TaskData>& data,
                             const std::vector<int>& fold_of, int k, const TrainConfig& tcfg,
                             int jobs) {
  if (k < 2) throw TooFewExamples("cross-validation needs k >= 2");
  if (data.size() != factory.cfg.tasks.size()) {
    throw LengthMismatch("expected one data entry per task");
  }
  for (size_t t = 0; t < data.size(); ++t) {
    if (data[t].task_id != factory.cfg.tasks[t].task_id) {
      throw UnknownTask("data order must match task order: " + data[t].task_id);
    }
  }
  const size_t primary_pos = static_cast<size_t>(factory.cfg.primary_index());
  if (fold_of.size() != data[primary_pos].examples.size()) {
    throw LengthMismatch("fold assignment does not match the primary dataset size");
  }
  for (int f : fold_of) {
    if (f < 0 || f >= k) throw LengthMismatch("fold id out of range");
  }

  MetricsReport report;
  report.task = data[primary_pos].task_id;
  report.per_fold.assign(static_cast<size_t>(k), MetricsTriple{});

  if (jobs <= 1) {
    for (int f = 0; f < k; ++f) {
      report.per_fold[static_cast<size_t>(f)] =
          run_fold(factory, data, fold_of, f, tcfg, primary_pos);
    }
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(k));
    std::atomic<int> next{0};
    const int spawn = std::min(jobs, k);
    for (int w = 0; w < spawn; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          const int f = next.fetch_add(1);
          if (f >= k) return;
          try {
            report.per_fold[static_cast<size_t>(f)] =
                run_fold(factory, data, fold_of, f, tcfg, primary_pos);
          } catch (...) {
            errors[static_cast<size_t>(f)] = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : workers) t.join();
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // fixed fold-order reduction keeps parallel runs identical to serial ones
  for (const MetricsTriple& m : report.per_fold) {
    report.mean.precision += m.precision;
    report.mean.recall += m.recall;
    report.mean.f1 += m.f1;
    report.mean.tp += m.tp;
    report.mean.fp += m.fp;
    report.mean.fn += m.fn;
    report.mean.support += m.support;
  }
  report.mean.precision /= static_cast<double>(k);
  report.mean.recall /= static_cast<double>(k);
  report.mean.f1 /= static_cast<double>(k);
  return report;
}

std::vector<std::vector<std::string>> all_subsets(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::vector<std::vector<std::string>> out;
  const size_t n = ids.size();
  for (size_t mask = 0; mask < (size_t{1} << n); ++mask) {
    std::vector<std::string> subset;
    for (size_t i = 0; i < n; ++i) {
      if (mask & (size_t{1} << i)) subset.push_back(ids[i]);
    }
    out.push_back(std::move(subset));
  }
  return out;
}

std::string subset_label(const std::vector<std::string>& ids) {
  if (ids.empty()) return "-";
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0) out += '+';
    out += sorted[i];
  }
  return out;
}

std::vector<AblationRow> ablation_sweep(const ModelFactory& factory,
                                        const std::vector<TaskData>& data,
                                        const std::vector<int>& fold_of, int k,
                                        const TrainConfig& tcfg,
                                        const std::vector<std::vector<std::string>>& subsets,
                                        int jobs) {
  std::vector<AblationRow> rows;
  for (const std::vector<std::string>& subset : subsets) {
    ModelFactory sub_factory = factory.with_secondary(subset);
    std::vector<TaskData> sub_data;
    for (const TaskSpec& t : sub_factory.cfg.tasks) {
      bool found = false;
      for (const TaskData& td : data) {
        if (td.task_id == t.task_id) {
          sub_data.push_back(td);
          found = true;
          break;
        }
      }
      if (!found) throw UnknownTask("no data for task " + t.task_id);
    }
    AblationRow row;
    row.secondary = subset;
    std::sort(row.secondary.begin(), row.secondary.end());
    row.report = cross_validate(sub_factory, sub_data, fold_of, k, tcfg, jobs);
    rows.push_back(std::move(row));
  }
  return rows;
}

void apply_prediction_checkpoint(MultitaskModel& model, const Checkpoint& ckpt) {
  for (const auto& tp : model.params().tensors()) {
    if (ckpt.find(tp->name) != nullptr) continue;
    if (tp->name.rfind("task.", 0) == 0) {
      const size_t dot = tp->name.find('.', 5);
      const std::string task_id = tp->name.substr(5, dot - 5);
      throw MissingHead("checkpoint has no parameters for task " + task_id);
    }
    throw ShapeMismatch("checkpoint is missing tensor " + tp->name);
  }
  Checkpoint trimmed;
  trimmed.epoch = ckpt.epoch;
  for (const CheckpointTensor& t : ckpt.tensors) {
    if (model.params().has(t.name)) trimmed.tensors.push_back(t);
  }
  trimmed.apply_to(model.params(), /*strict=*/false);
}

std::vector<CaseRecord> export_case_studies(MultitaskModel& model,
                                            const std::vector<LabeledExample>& examples) {
  const std::vector<TaskSpec>& tasks = model.tasks();
  const size_t primary_pos = static_cast<size_t>(model.config().primary_index());
  const TaskSpec& primary = tasks[primary_pos];

  std::vector<CaseRecord> records;
  for (const LabeledExample& ex : examples) {
    ag::Graph g;
    TokenizedExample tok = model.tokenize(ex.text);
    ag::Expr shared = model.shared_out(g, tok);

    CaseRecord rec;
    rec.example_id = ex.example_id;
    rec.text = ex.text;
    rec.gold_idx = ex.labels;
    rec.gold = names_for(primary, ex.labels);

    for (size_t t = 0; t < tasks.size(); ++t) {
      const TaskSpec& spec = tasks[t];
      ag::Expr lg = model.task_logits_from_shared(g, spec.task_id, tok, shared, nullptr);
      std::set<int> pred = predict_labels(classify(lg.value().col(0), spec.label_mode));
      if (t == primary_pos) {
        rec.primary_idx = pred;
        rec.primary = names_for(spec, pred);
      } else {
        rec.secondary.emplace_back(spec.task_id, names_for(spec, pred));
      }
    }
    rec.correct = rec.primary_idx == rec.gold_idx;
    records.push_back(std::move(rec));
  }
  return records;
}

void write_metrics_json(const MetricsReport& report, const std::string& path) {
  json j;
  j["task"] = report.task;
  j["micro_precision"] = report.mean.precision;
  j["micro_recall"] = report.mean.recall;
  j["micro_f1"] = report.mean.f1;
  j["support"] = report.mean.support;
  json folds = json::array();
  for (const MetricsTriple& m : report.per_fold) {
    folds.push_back(json{{"micro_precision", m.precision},
                         {"micro_recall", m.recall},
                         {"micro_f1", m.f1},
                         {"support", m.support}});
  }
  j["per_fold"] = std::move(folds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << j.dump(2) << '\n';
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ablation grid: " + path);
  out << "subset,precision,recall,f1\n";
  char buf[64];
  for (const AblationRow& row : rows) {
    out << subset_label(row.secondary);
    for (double v : {row.report.mean.precision, row.report.mean.recall, row.report.mean.f1}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_case_jsonl(const std::vector<CaseRecord>& records, std::ostream& out) {
  for (const CaseRecord& rec : records) {
    json j;
    j["example_id"] = rec.example_id;
    j["text"] = rec.text;
    j["gold"] = rec.gold;
    j["primary"] = rec.primary;
    json sec = json::object();
    for (const auto& [task_id, names] : rec.secondary) sec[task_id] = names;
    j["secondary"] = std::move(sec);
    j["correct"] = rec.correct;
    out << j.dump() << '\n';
  }
}

void write_case_jsonl_file(const std::vector<CaseRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write case records: " + path);
  write_case_jsonl(records, out);
}

}  // namespace angrymtl
