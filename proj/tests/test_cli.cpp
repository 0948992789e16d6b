#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "angrymtl/datasets.hpp"
#include "test_support.hpp"

using namespace angrymtl;
using nlohmann::ordered_json;
using testsupport::CliResult;
using testsupport::read_file;
using testsupport::run_cli;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

std::string synth_csv(const testsupport::SynthTask& st) {
  std::ostringstream out;
  out << "id,text,label\n";
  for (const auto& ex : st.examples) {
    out << ex.example_id << "," << ex.text << ",";
    bool first = true;
    for (int idx : ex.labels) {
      if (!first) out << "|";
      out << st.spec.classes[static_cast<size_t>(idx)];
      first = false;
    }
    out << "\n";
  }
  return out.str();
}

// Writes datasets plus a ready-to-run config into `tmp` and returns the
// config path. The fixture has a 15-example primary and an 8-example helper.
struct CliFixture {
  TempDir tmp;
  std::string config_path;
  std::string checkpoint_dir;
  std::string output_dir;
  ordered_json config;

  CliFixture() {
    auto prim = testsupport::make_synth_task("a", TaskRole::primary, 3, 15, 900);
    auto sec = testsupport::make_synth_task("b", TaskRole::secondary, 2, 8, 901);
    write_file(tmp.file("a.csv"), synth_csv(prim));
    write_file(tmp.file("b.csv"), synth_csv(sec));
    checkpoint_dir = tmp.file("ckpts");
    output_dir = tmp.file("out");

    config = ordered_json{
        {"tasks",
         ordered_json::array(
             {ordered_json{{"task_id", "a"},
                           {"role", "primary"},
                           {"label_mode", "single_label"},
                           {"classes", {"c0", "c1", "c2"}},
                           {"dataset_path", tmp.file("a.csv")},
                           {"dedup", true}},
              ordered_json{{"task_id", "b"},
                           {"role", "secondary"},
                           {"label_mode", "single_label"},
                           {"classes", {"c0", "c1"}},
                           {"dataset_path", tmp.file("b.csv")},
                           {"dedup", false}}})},
        {"encoder",
         ordered_json{{"d", 16},
                      {"recurrent_hidden", 8},
                      {"static_dim", 5},
                      {"max_len", 12},
                      {"shared_variant", "tiny_random"}}},
        {"head", ordered_json{{"hidden", 6}, {"dropout", 0.0}, {"norm", "layer_norm"}}},
        {"train", ordered_json{{"epochs", 1},
                               {"batch_size", 4},
                               {"learning_rate_shared", 1e-3},
                               {"learning_rate_other", 1e-2},
                               {"seed", 7},
                               {"optimizer", "adam_type"},
                               {"grad_clip_norm", 1.0}}},
        {"eval", ordered_json{{"k", 5}, {"seed", 3}}},
        {"paths", ordered_json{{"checkpoint_dir", checkpoint_dir},
                               {"output_dir", output_dir},
                               {"static_vectors", ""},
                               {"pretrained_checkpoint", ""}}}};
    config_path = tmp.file("run.json");
    rewrite();
  }

  void rewrite() { write_file(config_path, config.dump(2)); }
};

}  // namespace

TEST_CASE("cli help and usage errors") {
  CHECK(run_cli({"--help"}).exit_code == 0);
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"dance"}).exit_code == 2);
  CliFixture fx;
  CHECK(run_cli({"ingest", fx.config_path}).exit_code == 2);  // --task required
}

TEST_CASE("cli ingest") {
  CliFixture fx;
  SUBCASE("clean dataset reports counts") {
    CliResult r = run_cli({"ingest", fx.config_path, "--task", "a"});
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("task a (primary, single_label)") != std::string::npos);
    CHECK(r.out.find("c0 5") != std::string::npos);
    CHECK(r.out.find("examples 15") != std::string::npos);
    CHECK(r.out.find("rejects 0") != std::string::npos);
  }
  SUBCASE("unknown task exits 2") {
    CHECK(run_cli({"ingest", fx.config_path, "--task", "zzz"}).exit_code == 2);
  }
  SUBCASE("rejected rows exit 3 unless allowed") {
    std::string csv = read_file(fx.tmp.file("a.csv"));
    csv += "r1,weird label,c9\n";
    write_file(fx.tmp.file("a.csv"), csv);
    CliResult r = run_cli({"ingest", fx.config_path, "--task", "a"});
    CHECK(r.exit_code == 3);
    CHECK(r.out.find("rejects 1") != std::string::npos);
    CHECK(r.out.find("unknown_label") != std::string::npos);
    CliResult r2 = run_cli({"ingest", fx.config_path, "--task", "a", "--allow-rejects"});
    CHECK(r2.exit_code == 0);
  }
  SUBCASE("missing dataset file exits 3") {
    fx.config["tasks"][0]["dataset_path"] = fx.tmp.file("gone.csv");
    fx.rewrite();
    CHECK(run_cli({"ingest", fx.config_path, "--task", "a"}).exit_code == 3);
  }
}

TEST_CASE("cli config validation") {
  CliFixture fx;
  SUBCASE("unknown key exits 2") {
    fx.config["mystery"] = 1;
    fx.rewrite();
    CHECK(run_cli({"train", fx.config_path}).exit_code == 2);
  }
  SUBCASE("nested unknown key exits 2") {
    fx.config["train"]["warmup"] = 10;
    fx.rewrite();
    CHECK(run_cli({"train", fx.config_path}).exit_code == 2);
  }
  SUBCASE("missing config file exits 3") {
    CHECK(run_cli({"train", fx.tmp.file("absent.json")}).exit_code == 3);
  }
  SUBCASE("structurally invalid config exits 2") {
    fx.config["eval"]["k"] = 1;
    fx.rewrite();
    CHECK(run_cli({"eval", fx.config_path}).exit_code == 2);
  }
}

TEST_CASE("cli train writes artifacts") {
  CliFixture fx;
  SUBCASE("checkpoint and log appear under the seed tag") {
    CliResult r = run_cli({"train", fx.config_path});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(fx.checkpoint_dir + "/model_seed7.ckpt"));
    CHECK(std::filesystem::exists(fx.checkpoint_dir + "/train_log_seed7.jsonl"));
    const std::string log = read_file(fx.checkpoint_dir + "/train_log_seed7.jsonl");
    std::istringstream in(log);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      nlohmann::json j = nlohmann::json::parse(line);
      CHECK(j.contains("per_task_loss"));
      ++lines;
    }
    CHECK(lines == 1);
  }
  SUBCASE("zero epochs still snapshots the initialization") {
    fx.config["train"]["epochs"] = 0;
    fx.rewrite();
    CliResult r = run_cli({"train", fx.config_path});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(fx.checkpoint_dir + "/model_seed7.ckpt"));
    CHECK(read_file(fx.checkpoint_dir + "/train_log_seed7.jsonl").empty());
  }
  SUBCASE("environment seed renames artifacts") {
    CliResult r = run_cli({"train", fx.config_path}, {{"ANGRYMTL_SEED", "99"}});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(fx.checkpoint_dir + "/model_seed99.ckpt"));
    CHECK_FALSE(std::filesystem::exists(fx.checkpoint_dir + "/model_seed7.ckpt"));
  }
  SUBCASE("seed flag beats the environment") {
    CliResult r =
        run_cli({"train", fx.config_path, "--seed", "123"}, {{"ANGRYMTL_SEED", "99"}});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(fx.checkpoint_dir + "/model_seed123.ckpt"));
    CHECK_FALSE(std::filesystem::exists(fx.checkpoint_dir + "/model_seed99.ckpt"));
  }
  SUBCASE("garbage environment seed exits 2") {
    CHECK(run_cli({"train", fx.config_path}, {{"ANGRYMTL_SEED", "banana"}}).exit_code == 2);
    CHECK(run_cli({"train", fx.config_path}, {{"ANGRYMTL_SEED", "-4"}}).exit_code == 2);
  }
  SUBCASE("exploding learning rate exits 4") {
    fx.config["train"]["learning_rate_other"] = 1e308;
    fx.config["train"]["grad_clip_norm"] = nullptr;
    fx.config["head"]["norm"] = "none";
    fx.config["train"]["epochs"] = 3;
    fx.rewrite();
    CliResult r = run_cli({"train", fx.config_path});
    CHECK(r.exit_code == 4);
    CHECK(r.err.find("numeric failure") != std::string::npos);
  }
}

TEST_CASE("cli eval") {
  CliFixture fx;
  SUBCASE("metrics json with one entry per fold") {
    CliResult r = run_cli({"eval", fx.config_path});
    CHECK(r.exit_code == 0);
    const std::string path = fx.output_dir + "/metrics.json";
    REQUIRE(std::filesystem::exists(path));
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    CHECK(j.at("task") == "a");
    CHECK(j.at("per_fold").size() == 5);
    CHECK(j.at("support").get<long>() == 15);
  }
  SUBCASE("fold count flag wins over the config") {
    CliResult r = run_cli({"eval", fx.config_path, "--folds", "3"});
    CHECK(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(read_file(fx.output_dir + "/metrics.json"));
    CHECK(j.at("per_fold").size() == 3);
  }
  SUBCASE("two runs produce byte-identical metrics") {
    CliResult r1 = run_cli({"eval", fx.config_path, "--output-dir", fx.tmp.file("o1")});
    CliResult r2 = run_cli({"eval", fx.config_path, "--output-dir", fx.tmp.file("o2")});
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    const std::string m1 = read_file(fx.tmp.file("o1") + "/metrics.json");
    const std::string m2 = read_file(fx.tmp.file("o2") + "/metrics.json");
    CHECK(m1 == m2);
    CHECK_FALSE(m1.empty());
  }
  SUBCASE("parallel jobs do not change the bytes") {
    CliResult r1 = run_cli({"eval", fx.config_path, "--output-dir", fx.tmp.file("o1")});
    CliResult r2 = run_cli(
        {"eval", fx.config_path, "--jobs", "4", "--output-dir", fx.tmp.file("o2")});
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(read_file(fx.tmp.file("o1") + "/metrics.json") ==
          read_file(fx.tmp.file("o2") + "/metrics.json"));
  }
  SUBCASE("fold export") {
    const std::string folds_path = fx.tmp.file("folds.json");
    CliResult r = run_cli({"eval", fx.config_path, "--export-folds", folds_path});
    CHECK(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(read_file(folds_path));
    CHECK(j.at("k") == 5);
    CHECK(j.at("fold_of").size() == 15);
  }
}

TEST_CASE("cli ablate") {
  CliFixture fx;
  fx.config["train"]["epochs"] = 1;
  fx.config["eval"]["k"] = 3;
  fx.rewrite();

  SUBCASE("all subsets of one secondary give two rows") {
    CliResult r = run_cli({"ablate", fx.config_path});
    CHECK(r.exit_code == 0);
    const std::string csv = read_file(fx.output_dir + "/ablation.csv");
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "subset,precision,recall,f1");
    CHECK(lines[1].rfind("-,", 0) == 0);
    CHECK(lines[2].rfind("b,", 0) == 0);
  }
  SUBCASE("explicit subset list") {
    CliResult r = run_cli({"ablate", fx.config_path, "--subsets", "b"});
    CHECK(r.exit_code == 0);
    const std::string csv = read_file(fx.output_dir + "/ablation.csv");
    std::istringstream in(csv);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 2);
  }
  SUBCASE("unknown subset id exits 2") {
    CHECK(run_cli({"ablate", fx.config_path, "--subsets", "zzz"}).exit_code == 2);
  }
}

TEST_CASE("cli predict") {
  CliFixture fx;
  REQUIRE(run_cli({"train", fx.config_path}).exit_code == 0);
  const std::string ckpt = fx.checkpoint_dir + "/model_seed7.ckpt";

  SUBCASE("one output line per input row") {
    write_file(fx.tmp.file("in.csv"),
               "id,text,label\n"
               "q1,am0w0 am0w1 am0w2 pad0,c0\n"
               "q2,am1w0 am1w1 am1w3 pad1,\n"
               "q3,am2w0 am2w2 am2w3 pad0,c2\n");
    CliResult r = run_cli({"predict", fx.config_path, "--checkpoint", ckpt, "--input",
                           fx.tmp.file("in.csv")});
    CHECK(r.exit_code == 0);
    const std::string out = read_file(fx.output_dir + "/cases.jsonl");
    std::istringstream in(out);
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].at("example_id") == "q1");
    CHECK(rows[1].at("example_id") == "q2");
    CHECK(rows[0].at("primary").is_array());
    CHECK(rows[0].at("secondary").contains("b"));
  }
  SUBCASE("explicit output path") {
    write_file(fx.tmp.file("in.csv"), "id,text,label\nq1,am0w0 pad0,c0\n");
    const std::string out_path = fx.tmp.file("my_cases.jsonl");
    CliResult r = run_cli({"predict", fx.config_path, "--checkpoint", ckpt, "--input",
                           fx.tmp.file("in.csv"), "--output", out_path});
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(out_path));
  }
  SUBCASE("missing checkpoint exits 3") {
    write_file(fx.tmp.file("in.csv"), "id,text,label\nq1,am0w0 pad0,c0\n");
    CliResult r = run_cli({"predict", fx.config_path, "--checkpoint",
                           fx.tmp.file("nope.ckpt"), "--input", fx.tmp.file("in.csv")});
    CHECK(r.exit_code == 3);
  }
  SUBCASE("malformed input row exits 3") {
    write_file(fx.tmp.file("in.csv"), "id,text,label\nq1,,c0\n");
    CliResult r = run_cli({"predict", fx.config_path, "--checkpoint", ckpt, "--input",
                           fx.tmp.file("in.csv")});
    CHECK(r.exit_code == 3);
  }
}
