#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "angrymtl/checkpoint.hpp"
#include "angrymtl/config.hpp"
#include "angrymtl/errors.hpp"
#include "angrymtl/evaluation.hpp"
#include "angrymtl/training.hpp"

namespace {

using namespace angrymtl;

// precedence: --seed flag > ANGRYMTL_SEED > config
void apply_seed_override(RunConfig& rc, const std::optional<uint64_t>& flag_seed) {
  std::optional<uint64_t> seed = flag_seed;
  if (!seed.has_value()) {
    if (const char* env = std::getenv("ANGRYMTL_SEED")) {
      std::string s(env);
      if (s.empty()) throw ConfigError("ANGRYMTL_SEED is empty");
      char* end = nullptr;
      errno = 0;
      unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (errno != 0 || end == nullptr || *end != '\0' || s[0] == '-') {
        throw ConfigError("ANGRYMTL_SEED must be a non-negative integer, got '" + s + "'");
      }
      seed = static_cast<uint64_t>(v);
    }
  }
  if (seed.has_value()) {
    rc.train.seed = *seed;
    rc.eval_seed = *seed;
  }
}

std::string seed_tag(uint64_t seed) { return "seed" + std::to_string(seed); }

int cmd_ingest(const RunConfig& rc, const std::string& task_id, bool allow_rejects) {
  const TaskSpec* spec = nullptr;
  for (const TaskSpec& t : rc.tasks) {
    if (t.task_id == task_id) spec = &t;
  }
  if (spec == nullptr) throw UnknownTask("no task named '" + task_id + "' in the config");

  DatasetBundle bundle = load_dataset(spec->dataset_path, *spec);
  long before_dedup = bundle.example_count();
  if (spec->dedup) bundle = dedup_retweets(bundle);

  std::cout << "task " << spec->task_id << " ("
            << (spec->role == TaskRole::primary ? "primary" : "secondary") << ", "
            << (spec->label_mode == LabelMode::single_label ? "single_label" : "multi_label")
            << ")\n";
  if (spec->dedup) {
    std::cout << "  dedup: " << before_dedup << " -> " << bundle.example_count()
              << " examples\n";
  }
  std::cout << "  class counts:\n";
  for (const std::string& c : spec->classes) {
    std::cout << "    " << c << " " << bundle.class_counts.at(c) << "\n";
  }
  std::cout << "  examples " << bundle.example_count() << "\n";
  std::cout << "  rejects " << bundle.reject_count() << "\n";
  for (const RejectedRow& r : bundle.rejects) {
    std::cout << "    row " << r.row << ": " << to_string(r.reason) << " " << r.detail << "\n";
  }
  if (bundle.reject_count() > 0 && !allow_rejects) {
    std::cerr << "error: " << bundle.reject_count()
              << " rejected rows (pass --allow-rejects to proceed)\n";
    return 3;
  }
  return 0;
}

int cmd_train(const RunConfig& rc) {
  ModelFactory factory = build_factory(rc);
  std::vector<TaskData> data = load_task_data(rc);
  std::unique_ptr<MultitaskModel> model = factory.build(rc.train.seed);

  std::filesystem::create_directories(rc.checkpoint_dir);
  const std::string tag = seed_tag(rc.train.seed);
  const std::string log_path = rc.checkpoint_dir + "/train_log_" + tag + ".jsonl";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw DataError("cannot write training log: " + log_path);

  TrainResult result = train(*model, data, rc.train, &log);

  const std::string ckpt_path = rc.checkpoint_dir + "/model_" + tag + ".ckpt";
  Checkpoint ckpt = Checkpoint::from_model(*model, rc.train.epochs, rc.snapshot());
  save_checkpoint(ckpt, ckpt_path);

  std::cout << "trained " << result.steps << " steps over " << result.epochs.size()
            << " epochs\n";
  if (!result.epochs.empty()) {
    std::cout << "final per-task loss:";
    for (const auto& [task_id, loss] : result.epochs.back().per_task_loss) {
      std::cout << " " << task_id << "=" << loss;
    }
    std::cout << "\n";
  }
  std::cout << "checkpoint " << ckpt_path << "\n";
  std::cout << "log " << log_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc, int k, int jobs, const std::string& export_folds_path) {
  ModelFactory factory = build_factory(rc);
  std::vector<DatasetBundle> bundles;
  std::vector<TaskData> data = load_task_data(rc, &bundles);

  const size_t primary_pos = static_cast<size_t>(rc.primary_index());
  FoldAssignment folds = make_folds(bundles[primary_pos], k, rc.eval_seed);
  if (!export_folds_path.empty()) {
    std::ofstream out(export_folds_path, std::ios::binary);
    if (!out) throw DataError("cannot write folds: " + export_folds_path);
    write_folds_json(folds, out);
  }
  std::vector<int> fold_of = fold_vector(folds, data[primary_pos].examples);

  MetricsReport report = cross_validate(factory, data, fold_of, k, rc.train, jobs);

  std::filesystem::create_directories(rc.output_dir);
  const std::string out_path = rc.output_dir + "/metrics.json";
  write_metrics_json(report, out_path);

  std::cout << "task " << report.task << " micro"
            << " P=" << report.mean.precision << " R=" << report.mean.recall
            << " F1=" << report.mean.f1 << " over " << k << " folds\n";
  std::cout << "metrics " << out_path << "\n";
  return 0;
}

std::vector<std::vector<std::string>> parse_subsets(const RunConfig& rc,
                                                    const std::string& arg) {
  std::vector<std::string> secondary_ids;
  for (const TaskSpec& t : rc.tasks) {
    if (t.role == TaskRole::secondary) secondary_ids.push_back(t.task_id);
  }
  if (arg == "all") return all_subsets(secondary_ids);

  std::vector<std::vector<std::string>> subsets;
  std::string cur;
  std::vector<std::string> labels;
  for (char c : arg) {
    if (c == ',') {
      labels.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  labels.push_back(cur);
  for (const std::string& label : labels) {
    if (label.empty()) throw ConfigError("empty subset entry in --subsets");
    if (label == "-") {
      subsets.push_back({});
      continue;
    }
    std::vector<std::string> ids;
    std::string id;
    for (char c : label) {
      if (c == '+') {
        ids.push_back(id);
        id.clear();
      } else {
        id.push_back(c);
      }
    }
    ids.push_back(id);
    subsets.push_back(std::move(ids));
  }
  return subsets;
}

int cmd_ablate(const RunConfig& rc, const std::string& subsets_arg, int jobs) {
  ModelFactory factory = build_factory(rc);
  std::vector<DatasetBundle> bundles;
  std::vector<TaskData> data = load_task_data(rc, &bundles);

  const size_t primary_pos = static_cast<size_t>(rc.primary_index());
  FoldAssignment folds = make_folds(bundles[primary_pos], rc.eval_k, rc.eval_seed);
  std::vector<int> fold_of = fold_vector(folds, data[primary_pos].examples);

  std::vector<std::vector<std::string>> subsets = parse_subsets(rc, subsets_arg);
  std::vector<AblationRow> rows =
      ablation_sweep(factory, data, fold_of, rc.eval_k, rc.train, subsets, jobs);

  std::filesystem::create_directories(rc.output_dir);
  const std::string out_path = rc.output_dir + "/ablation.csv";
  write_ablation_csv(rows, out_path);

  for (const AblationRow& row : rows) {
    std::cout << subset_label(row.secondary) << " P=" << row.report.mean.precision
              << " R=" << row.report.mean.recall << " F1=" << row.report.mean.f1 << "\n";
  }
  std::cout << "grid " << out_path << "\n";
  return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& ckpt_path, const std::string& input_path,
                std::string output_path) {
  ModelFactory factory = build_factory(rc);
  std::unique_ptr<MultitaskModel> model = factory.build(rc.train.seed);

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  apply_prediction_checkpoint(*model, ckpt);

  const TaskSpec& primary = rc.tasks[static_cast<size_t>(rc.primary_index())];
  std::vector<LabeledExample> rows = load_prediction_rows(input_path, primary);
  std::vector<CaseRecord> records = export_case_studies(*model, rows);

  if (output_path.empty()) {
    std::filesystem::create_directories(rc.output_dir);
    output_path = rc.output_dir + "/cases.jsonl";
  }
  write_case_jsonl_file(records, output_path);

  long labeled = 0;
  long correct = 0;
  for (const CaseRecord& r : records) {
    if (!r.gold_idx.empty()) {
      ++labeled;
      if (r.correct) ++correct;
    }
  }
  std::cout << "wrote " << records.size() << " case records to " << output_path << "\n";
  if (labeled > 0) {
    std::cout << "primary accuracy on labeled rows: " << correct << "/" << labeled << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multitask text classification: ingest, train, evaluate, ablate, predict"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> flag_seed;
  std::string task_id;
  bool allow_rejects = false;
  int folds = 0;  // 0: use config
  int jobs = 1;
  std::string export_folds_path;
  std::string subsets_arg = "all";
  std::string ckpt_path;
  std::string input_path;
  std::string output_path;
  std::string checkpoint_dir_override;
  std::string output_dir_override;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", flag_seed, "override train/eval seed (also: ANGRYMTL_SEED)");
    sub->add_option("--checkpoint-dir", checkpoint_dir_override, "override paths.checkpoint_dir");
    sub->add_option("--output-dir", output_dir_override, "override paths.output_dir");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "load one task's dataset and report counts");
  add_common(ingest);
  ingest->add_option("--task", task_id, "task id from the config")->required();
  ingest->add_flag("--allow-rejects", allow_rejects, "exit 0 even when rows were rejected");

  CLI::App* train_cmd = app.add_subcommand("train", "train and write checkpoint + log");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "cross-validate the primary task");
  add_common(eval_cmd);
  eval_cmd->add_option("--folds", folds, "fold count (default: eval.k from config)");
  eval_cmd->add_option("--jobs", jobs, "parallel fold workers");
  eval_cmd->add_option("--export-folds", export_folds_path, "write the fold assignment JSON");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep secondary-task subsets");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--subsets", subsets_arg,
                         "'all' or comma-separated '+'-joined id lists ('-' = none)");
  ablate_cmd->add_option("--jobs", jobs, "parallel fold workers");

  CLI::App* predict_cmd = app.add_subcommand("predict", "export per-task case records");
  add_common(predict_cmd);
  predict_cmd->add_option("--checkpoint", ckpt_path, "trained checkpoint file")->required();
  predict_cmd->add_option("--input", input_path, "CSV of rows to classify")->required();
  predict_cmd->add_option("--output", output_path, "output JSONL path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig rc = load_run_config(config_path);
    apply_seed_override(rc, flag_seed);
    if (!checkpoint_dir_override.empty()) rc.checkpoint_dir = checkpoint_dir_override;
    if (!output_dir_override.empty()) rc.output_dir = output_dir_override;

    if (*ingest) return cmd_ingest(rc, task_id, allow_rejects);
    if (*train_cmd) return cmd_train(rc);
    if (*eval_cmd) return cmd_eval(rc, folds > 0 ? folds : rc.eval_k, jobs, export_folds_path);
    if (*ablate_cmd) return cmd_ablate(rc, subsets_arg, jobs);
    if (*predict_cmd) return cmd_predict(rc, ckpt_path, input_path, output_path);
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownTask& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyTask& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TooFewExamples& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    // data, checkpoint, and shape problems
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
