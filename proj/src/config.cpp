#include "angrymtl/config.hpp"

#include <fstream>

#include "angrymtl/errors.hpp"

namespace angrymtl {

namespace {

using json = nlohmann::ordered_json;

void reject_unknown_keys(const json& obj, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

int get_int(const json& obj, const std::string& where, const char* key, int def) {
  const json* v = find(obj, key);
  if (v == nullptr) return def;
  if (!v->is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return v->get<int>();
}

double get_real(const json& obj, const std::string& where, const char* key, double def) {
  const json* v = find(obj, key);
  if (v == nullptr) return def;
  if (!v->is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v->get<double>();
}

uint64_t get_seed(const json& obj, const std::string& where, const char* key, uint64_t def) {
  const json* v = find(obj, key);
  if (v == nullptr) return def;
  if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                  v->get<int64_t>() < 0)) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  return v->get<uint64_t>();
}

std::string get_string(const json& obj, const std::string& where, const char* key,
                       const std::string& def, bool required = false) {
  const json* v = find(obj, key);
  if (v == nullptr) {
    if (required) throw ConfigError(where + "." + key + " is required");
    return def;
  }
  if (!v->is_string()) throw ConfigError(where + "." + key + " must be a string");
  return v->get<std::string>();
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool def) {
  const json* v = find(obj, key);
  if (v == nullptr) return def;
  if (!v->is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  return v->get<bool>();
}

TaskSpec parse_task(const json& j, size_t pos) {
  const std::string where = "tasks[" + std::to_string(pos) + "]";
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  reject_unknown_keys(j, where,
                      {"task_id", "role", "label_mode", "classes", "dataset_path", "dedup"});
  TaskSpec t;
  t.task_id = get_string(j, where, "task_id", "", /*required=*/true);
  const std::string role = get_string(j, where, "role", "", /*required=*/true);
  if (role == "primary") {
    t.role = TaskRole::primary;
  } else if (role == "secondary") {
    t.role = TaskRole::secondary;
  } else {
    throw ConfigError(where + ".role must be \"primary\" or \"secondary\"");
  }
  const std::string mode = get_string(j, where, "label_mode", "", /*required=*/true);
  if (mode == "single_label") {
    t.label_mode = LabelMode::single_label;
  } else if (mode == "multi_label") {
    t.label_mode = LabelMode::multi_label;
  } else {
    throw ConfigError(where + ".label_mode must be \"single_label\" or \"multi_label\"");
  }
  const json* classes = find(j, "classes");
  if (classes == nullptr || !classes->is_array() || classes->empty()) {
    throw ConfigError(where + ".classes must be a nonempty array of names");
  }
  for (const json& c : *classes) {
    if (!c.is_string()) throw ConfigError(where + ".classes entries must be strings");
    t.classes.push_back(c.get<std::string>());
  }
  t.dataset_path = get_string(j, where, "dataset_path", "", /*required=*/true);
  t.dedup = get_bool(j, where, "dedup", false);
  t.validate();
  return t;
}

}  // namespace

int RunConfig::primary_index() const {
  int found = -1;
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].role == TaskRole::primary) {
      if (found >= 0) throw ConfigError("more than one primary task");
      found = static_cast<int>(i);
    }
  }
  if (found < 0) throw ConfigError("no primary task configured");
  return found;
}

void RunConfig::validate() const {
  if (tasks.empty()) throw ConfigError("tasks must not be empty");
  primary_index();
  for (size_t i = 0; i < tasks.size(); ++i) {
    for (size_t j = i + 1; j < tasks.size(); ++j) {
      if (tasks[i].task_id == tasks[j].task_id) {
        throw ConfigError("duplicate task id: " + tasks[i].task_id);
      }
    }
  }
  if (d <= 0 || recurrent_hidden <= 0 || static_dim <= 0 || max_len < 3) {
    throw ConfigError("encoder dimensions must be positive (max_len >= 3)");
  }
  if (2 * recurrent_hidden != d) {
    throw ConfigError("encoder.d must equal 2*recurrent_hidden");
  }
  if (shared_variant != "tiny_random" && shared_variant != "pretrained") {
    throw ConfigError("encoder.shared_variant must be \"tiny_random\" or \"pretrained\"");
  }
  if (shared_variant == "pretrained" && pretrained_checkpoint.empty()) {
    throw ConfigError("paths.pretrained_checkpoint is required for the pretrained variant");
  }
  if (head.hidden <= 0) throw ConfigError("head.hidden must be positive");
  if (head.dropout < 0.0 || head.dropout >= 1.0) throw ConfigError("head.dropout must be in [0, 1)");
  train.validate();
  if (eval_k < 2) throw ConfigError("eval.k must be >= 2");
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(j, "config", {"tasks", "encoder", "head", "train", "eval", "paths"});

  RunConfig rc;

  const json* tasks = find(j, "tasks");
  if (tasks == nullptr || !tasks->is_array()) {
    throw ConfigError("config.tasks must be an array");
  }
  for (size_t i = 0; i < tasks->size(); ++i) rc.tasks.push_back(parse_task((*tasks)[i], i));

  const json* enc = find(j, "encoder");
  if (enc == nullptr || !enc->is_object()) throw ConfigError("config.encoder must be an object");
  reject_unknown_keys(*enc, "encoder",
                      {"d", "recurrent_hidden", "static_dim", "max_len", "shared_variant"});
  rc.d = get_int(*enc, "encoder", "d", rc.d);
  rc.recurrent_hidden = get_int(*enc, "encoder", "recurrent_hidden", rc.recurrent_hidden);
  rc.static_dim = get_int(*enc, "encoder", "static_dim", rc.static_dim);
  rc.max_len = get_int(*enc, "encoder", "max_len", rc.max_len);
  rc.shared_variant = get_string(*enc, "encoder", "shared_variant", rc.shared_variant);

  if (const json* head = find(j, "head")) {
    if (!head->is_object()) throw ConfigError("config.head must be an object");
    reject_unknown_keys(*head, "head", {"hidden", "dropout", "norm"});
    rc.head.hidden = get_int(*head, "head", "hidden", rc.head.hidden);
    rc.head.dropout = get_real(*head, "head", "dropout", rc.head.dropout);
    const std::string norm = get_string(*head, "head", "norm", "layer_norm");
    if (norm == "layer_norm") {
      rc.head.layer_norm = true;
    } else if (norm == "none") {
      rc.head.layer_norm = false;
    } else {
      throw ConfigError("head.norm must be \"layer_norm\" or \"none\"");
    }
  }

  const json* train = find(j, "train");
  if (train == nullptr || !train->is_object()) throw ConfigError("config.train must be an object");
  reject_unknown_keys(*train, "train",
                      {"epochs", "batch_size", "learning_rate_shared", "learning_rate_other",
                       "seed", "optimizer", "grad_clip_norm"});
  rc.train.epochs = get_int(*train, "train", "epochs", rc.train.epochs);
  rc.train.batch_size = get_int(*train, "train", "batch_size", rc.train.batch_size);
  rc.train.learning_rate_shared =
      get_real(*train, "train", "learning_rate_shared", rc.train.learning_rate_shared);
  rc.train.learning_rate_other =
      get_real(*train, "train", "learning_rate_other", rc.train.learning_rate_other);
  rc.train.seed = get_seed(*train, "train", "seed", rc.train.seed);
  rc.train.optimizer = get_string(*train, "train", "optimizer", rc.train.optimizer);
  if (const json* clip = find(*train, "grad_clip_norm")) {
    if (clip->is_null()) {
      rc.train.grad_clip_norm.reset();
    } else if (clip->is_number()) {
      rc.train.grad_clip_norm = clip->get<double>();
    } else {
      throw ConfigError("train.grad_clip_norm must be a number or null");
    }
  }

  const json* eval = find(j, "eval");
  if (eval == nullptr || !eval->is_object()) throw ConfigError("config.eval must be an object");
  reject_unknown_keys(*eval, "eval", {"k", "seed"});
  rc.eval_k = get_int(*eval, "eval", "k", rc.eval_k);
  rc.eval_seed = get_seed(*eval, "eval", "seed", rc.eval_seed);

  const json* paths = find(j, "paths");
  if (paths == nullptr || !paths->is_object()) throw ConfigError("config.paths must be an object");
  reject_unknown_keys(*paths, "paths",
                      {"checkpoint_dir", "output_dir", "static_vectors", "pretrained_checkpoint"});
  rc.checkpoint_dir = get_string(*paths, "paths", "checkpoint_dir", rc.checkpoint_dir);
  rc.output_dir = get_string(*paths, "paths", "output_dir", rc.output_dir);
  rc.static_vectors = get_string(*paths, "paths", "static_vectors", rc.static_vectors);
  rc.pretrained_checkpoint =
      get_string(*paths, "paths", "pretrained_checkpoint", rc.pretrained_checkpoint);

  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(j);
}

nlohmann::ordered_json RunConfig::snapshot() const {
  json tasks_json = json::array();
  for (const TaskSpec& t : tasks) {
    tasks_json.push_back(json{
        {"task_id", t.task_id},
        {"role", t.role == TaskRole::primary ? "primary" : "secondary"},
        {"label_mode", t.label_mode == LabelMode::single_label ? "single_label" : "multi_label"},
        {"classes", t.classes},
        {"dataset_path", t.dataset_path},
        {"dedup", t.dedup}});
  }
  json j;
  j["tasks"] = std::move(tasks_json);
  j["encoder"] = {{"d", d},
                  {"recurrent_hidden", recurrent_hidden},
                  {"static_dim", static_dim},
                  {"max_len", max_len},
                  {"shared_variant", shared_variant}};
  j["head"] = {{"hidden", head.hidden},
               {"dropout", head.dropout},
               {"norm", head.layer_norm ? "layer_norm" : "none"}};
  json train_json = {{"epochs", train.epochs},
                     {"batch_size", train.batch_size},
                     {"learning_rate_shared", train.learning_rate_shared},
                     {"learning_rate_other", train.learning_rate_other},
                     {"seed", train.seed},
                     {"optimizer", train.optimizer}};
  if (train.grad_clip_norm.has_value()) {
    train_json["grad_clip_norm"] = *train.grad_clip_norm;
  } else {
    train_json["grad_clip_norm"] = nullptr;
  }
  j["train"] = std::move(train_json);
  j["eval"] = {{"k", eval_k}, {"seed", eval_seed}};
  j["paths"] = {{"checkpoint_dir", checkpoint_dir},
                {"output_dir", output_dir},
                {"static_vectors", static_vectors},
                {"pretrained_checkpoint", pretrained_checkpoint}};
  return j;
}

ModelFactory build_factory(const RunConfig& rc) {
  rc.validate();
  ModelFactory f;
  if (rc.shared_variant == "tiny_random") {
    f.tokenizer = ContextualTokenizer::hashed(1024);
    f.cfg.dims = TransformerDims{rc.d, 2, 2, 1024, rc.max_len, 4};
  } else {
    PretrainedEncoder pe = load_pretrained_dir(rc.pretrained_checkpoint);
    if (pe.dims.d != rc.d) {
      throw ShapeMismatch("pretrained encoder width " + std::to_string(pe.dims.d) +
                          " does not match encoder.d " + std::to_string(rc.d));
    }
    if (pe.dims.max_len != rc.max_len) {
      throw ShapeMismatch("pretrained encoder max_len " + std::to_string(pe.dims.max_len) +
                          " does not match encoder.max_len " + std::to_string(rc.max_len));
    }
    f.tokenizer = std::move(pe.tokenizer);
    f.cfg.dims = pe.dims;
    f.pretrained_shared = std::move(pe.weights);
  }

  if (!rc.static_vectors.empty()) {
    f.vectors = load_static_vectors(rc.static_vectors, rc.static_dim);
  } else {
    f.vectors = random_static_vectors(4096, rc.static_dim, rc.train.seed);
  }

  f.cfg.tasks = rc.tasks;
  f.cfg.static_dim = rc.static_dim;
  f.cfg.recurrent_hidden = rc.recurrent_hidden;
  f.cfg.head = rc.head;
  return f;
}

std::vector<TaskData> load_task_data(const RunConfig& rc,
                                     std::vector<DatasetBundle>* bundles_out) {
  std::vector<TaskData> out;
  for (const TaskSpec& t : rc.tasks) {
    DatasetBundle bundle = load_dataset(t.dataset_path, t);
    if (t.dedup) bundle = dedup_retweets(bundle);
    if (bundles_out != nullptr) bundles_out->push_back(bundle);
    TaskData td;
    td.task_id = t.task_id;
    td.examples = std::move(bundle.examples);
    out.push_back(std::move(td));
  }
  return out;
}

}  // namespace angrymtl
