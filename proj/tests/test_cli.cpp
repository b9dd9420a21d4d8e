#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBinary = COC_BINARY;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd =
      std::string(kBinary) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_work") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json base_config() {
  return json{
      {"synthetic",
       {{"k", 3},
        {"d_e", 8},
        {"cases", 40},
        {"seed", 4},
        {"signal_to_noise", 5.0},
        {"prevalence", 0.5},
        {"violation_given_allegation", 0.6}}},
      {"network",
       {{"k", 3},
        {"d_e", 8},
        {"d_att_tok", 6},
        {"d_gru", 6},
        {"d_att_sent", 6},
        {"heads", 2},
        {"d_cls", 6},
        {"dropout", 0.1},
        {"dependency_mode", "full"}}},
      {"train",
       {{"batch_size", 8}, {"max_epochs", 2}, {"patience", 5}, {"seed", 7}}}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << "\n";
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("gen-data writes a deterministic corpus plus manifest") {
  const fs::path dir = fresh_dir("gen");
  write_json(dir / "cfg.json", base_config());

  RunResult r1 = run("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                         (dir / "a.jsonl").string(),
                     dir);
  CHECK(r1.code == 0);
  REQUIRE(fs::exists(dir / "a.jsonl"));
  CHECK(count_lines(slurp(dir / "a.jsonl")) == 40);

  REQUIRE(fs::exists(dir / "a.jsonl.manifest.json"));
  json manifest = json::parse(slurp(dir / "a.jsonl.manifest.json"));
  CHECK(manifest.at("command") == "gen-data");
  CHECK(manifest.at("seed") == 4);
  CHECK(manifest.at("config").contains("synthetic"));
  CHECK(manifest.at("outputs").at("corpus") == (dir / "a.jsonl").string());

  RunResult r2 = run("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                         (dir / "b.jsonl").string(),
                     dir);
  CHECK(r2.code == 0);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
}

TEST_CASE("gen-data error paths use exit code 2") {
  const fs::path dir = fresh_dir("gen_err");
  RunResult missing = run("gen-data --config " + (dir / "nope.json").string() + " --out " +
                              (dir / "x.jsonl").string(),
                          dir);
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.json") != std::string::npos);

  json bad = base_config();
  bad["synthetic"]["typo_knob"] = 1;
  write_json(dir / "bad.json", bad);
  RunResult unknown = run("gen-data --config " + (dir / "bad.json").string() + " --out " +
                              (dir / "x.jsonl").string(),
                          dir);
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("typo_knob") != std::string::npos);

  RunResult flag = run("gen-data --bogus 1", dir);
  CHECK(flag.code == 2);
  RunResult sub = run("frobnicate", dir);
  CHECK(sub.code == 2);
}

TEST_CASE("train, eval, and report round trip") {
  const fs::path dir = fresh_dir("train");
  write_json(dir / "cfg.json", base_config());
  REQUIRE(run("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "data.jsonl").string(),
              dir)
              .code == 0);
  const std::string corpus_bytes = slurp(dir / "data.jsonl");

  RunResult tr = run("train --data " + (dir / "data.jsonl").string() + " --config " +
                         (dir / "cfg.json").string() + " --out-checkpoint " +
                         (dir / "model.json").string() + " --history " +
                         (dir / "hist.csv").string(),
                     dir);
  CHECK(tr.code == 0);
  CHECK(tr.out.find("best epoch") != std::string::npos);
  REQUIRE(fs::exists(dir / "model.json"));
  REQUIRE(fs::exists(dir / "model.json.config.json"));
  const std::string hist = slurp(dir / "hist.csv");
  CHECK(hist.rfind("epoch,train_total,", 0) == 0);
  CHECK(count_lines(hist) == 3);  // header + 2 epochs
  REQUIRE(fs::exists(dir / "model.json.manifest.json"));
  json manifest = json::parse(slurp(dir / "model.json.manifest.json"));
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("seed") == 7);

  // inputs unchanged by training
  CHECK(slurp(dir / "data.jsonl") == corpus_bytes);

  // a second identical run is byte-identical
  RunResult tr2 = run("train --data " + (dir / "data.jsonl").string() + " --config " +
                          (dir / "cfg.json").string() + " --out-checkpoint " +
                          (dir / "model2.json").string() + " --history " +
                          (dir / "hist2.csv").string(),
                      dir);
  CHECK(tr2.code == 0);
  CHECK(slurp(dir / "model.json") == slurp(dir / "model2.json"));
  CHECK(slurp(dir / "hist.csv") == slurp(dir / "hist2.csv"));

  RunResult ev = run("eval --checkpoint " + (dir / "model.json").string() + " --data " +
                         (dir / "data.jsonl").string() + " --report " +
                         (dir / "report.json").string() + " --table " + (dir / "row.csv").string() +
                         " --name myrun",
                     dir);
  CHECK(ev.code == 0);
  json rep = json::parse(slurp(dir / "report.json"));
  CHECK(rep.at("task_a").at("micro_f1").get<double>() >= 0.0);
  CHECK(rep.at("task_a").at("micro_f1").get<double>() <= 1.0);
  CHECK(rep.at("task_a").contains("hard_macro_f1"));
  CHECK_FALSE(rep.at("task_b").contains("hard_macro_f1"));
  CHECK(rep.at("task_b").at("per_article_f1").size() == 3);
  const std::string row = slurp(dir / "row.csv");
  CHECK(row.find("myrun,") != std::string::npos);
  CHECK(ev.out.find("myrun") != std::string::npos);

  // eval against a corpus with a different k: exit 2, both values named
  json cfg2 = base_config();
  cfg2["synthetic"]["k"] = 2;
  write_json(dir / "cfg2.json", cfg2);
  REQUIRE(run("gen-data --config " + (dir / "cfg2.json").string() + " --out " +
                  (dir / "k2.jsonl").string(),
              dir)
              .code == 0);
  RunResult bad = run("eval --checkpoint " + (dir / "model.json").string() + " --data " +
                          (dir / "k2.jsonl").string(),
                      dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("k=2") != std::string::npos);
  CHECK(bad.err.find("k=3") != std::string::npos);

  // merge the eval row with itself via report
  RunResult rep2 = run("report --inputs " + (dir / "row.csv").string() + " " +
                           (dir / "row.csv").string() + " --format csv --out " +
                           (dir / "merged.csv").string(),
                       dir);
  CHECK(rep2.code == 0);
  CHECK(count_lines(slurp(dir / "merged.csv")) == 3);

  RunResult rep3 = run("report --inputs " + (dir / "row.csv").string() +
                           " --format text --include-reference",
                       dir);
  CHECK(rep3.code == 0);
  CHECK(rep3.out.find("reference/full") != std::string::npos);
  CHECK(count_lines(rep3.out) == 1 + 1 + 13);  // header + own row + reference block
}

TEST_CASE("ablate subset emits the blank-column pattern") {
  const fs::path dir = fresh_dir("ablate");
  json cfg = base_config();
  cfg["train"]["max_epochs"] = 1;
  write_json(dir / "cfg.json", cfg);
  REQUIRE(run("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "data.jsonl").string(),
              dir)
              .code == 0);

  RunResult ab = run("ablate --data " + (dir / "data.jsonl").string() + " --config " +
                         (dir / "cfg.json").string() + " --out-table " +
                         (dir / "table.csv").string() + " --only task_b_only,multi_task",
                     dir);
  CHECK(ab.code == 0);
  const std::string table = slurp(dir / "table.csv");
  CHECK(count_lines(table) == 3);
  std::istringstream ss(table);
  std::string header, row1, row2;
  std::getline(ss, header);
  std::getline(ss, row1);
  std::getline(ss, row2);
  CHECK(header == "condition,b_micro_f1,b_macro_f1,a_micro_f1,a_macro_f1,a_hard_macro_f1");
  CHECK(row1.rfind("task_b_only,", 0) == 0);
  CHECK(row1.substr(row1.size() - 3) == ",,,");  // Task A columns blank
  CHECK(row2.rfind("multi_task,", 0) == 0);
  CHECK(row2.substr(row2.size() - 3) != ",,,");
  REQUIRE(fs::exists(dir / "table.csv.manifest.json"));

  RunResult bad = run("ablate --data " + (dir / "data.jsonl").string() + " --config " +
                          (dir / "cfg.json").string() + " --out-table " +
                          (dir / "t2.csv").string() + " --only no_such_condition",
                      dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("no_such_condition") != std::string::npos);
}

TEST_CASE("gradcheck reports sub-tolerance error and exits 0") {
  const fs::path dir = fresh_dir("gradcheck");
  RunResult r = run("gradcheck --seed 3", dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("max relative error") != std::string::npos);
}
