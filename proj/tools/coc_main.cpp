// Command-line front end: data generation, training, evaluation, the
// ablation suite, gradient checking, and report merging. Exit codes: 0 on
// success, 1 when a check fails, 2 for configuration or I/O problems.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coc/config_io.hpp"
#include "coc/corpus.hpp"
#include "coc/errors.hpp"
#include "coc/gradcheck.hpp"
#include "coc/metrics.hpp"
#include "coc/network.hpp"
#include "coc/training.hpp"

namespace {

using coc::ConfigError;
using coc::IoError;
using nlohmann::json;

// One config file serves every command: top-level sections "synthetic",
// "network", "train", each optional here and demanded by the command that
// needs it.
struct RunConfig {
  json raw;
  std::optional<coc::SyntheticConfig> synthetic;
  std::optional<coc::NetworkConfig> network;
  std::optional<coc::TrainConfig> train;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  rc.raw = coc::read_json_file(path);
  if (!rc.raw.is_object()) throw ConfigError(path + ": expected a JSON object");
  for (const auto& [key, value] : rc.raw.items()) {
    if (key == "synthetic") {
      rc.synthetic = coc::synthetic_config_from_json(value);
    } else if (key == "network") {
      rc.network = coc::network_config_from_json(value);
    } else if (key == "train") {
      rc.train = coc::train_config_from_json(value);
    } else {
      throw ConfigError(path + ": unknown section '" + key + "'");
    }
  }
  return rc;
}

template <typename T>
const T& need(const std::optional<T>& opt, const char* command, const char* section) {
  if (!opt) {
    throw ConfigError(std::string(command) + ": config needs a '" + section + "' section");
  }
  return *opt;
}

void write_manifest(const std::string& path, const std::string& command, const json& config,
                    uint64_t seed, const json& inputs, const json& outputs) {
  coc::write_json_file(json{{"command", command},
                            {"config", config},
                            {"seed", seed},
                            {"inputs", inputs},
                            {"outputs", outputs}},
                       path);
}

std::string default_manifest(const std::string& primary_out) {
  return primary_out + ".manifest.json";
}

coc::SplitCorpora load_and_split(const std::string& data_path, double train_frac,
                                 double dev_frac) {
  coc::Corpus corpus = coc::load_jsonl(data_path);
  return coc::chronological_split(corpus, train_frac, dev_frac);
}

json report_to_json(const coc::MetricsReport& r) {
  json j{{"task", r.task},
         {"micro_f1", r.micro_f1},
         {"macro_f1", r.macro_f1},
         {"per_article_f1", r.per_article_f1}};
  if (r.has_hard) j["hard_macro_f1"] = r.hard_macro_f1;
  return j;
}

// Parses a result-table CSV produced by `ablate` / `eval --table` back into
// rows so `report` can merge several runs.
std::vector<coc::ResultRow> parse_result_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty table");
  const std::string header = "condition,b_micro_f1,b_macro_f1,a_micro_f1,a_macro_f1,a_hard_macro_f1";
  if (line != header) throw ConfigError(path + ": unexpected table header");
  std::vector<coc::ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(6);
    coc::ResultRow r;
    r.condition = cells[0];
    if (!cells[1].empty()) {
      r.has_b = true;
      r.b_micro = std::stod(cells[1]);
      r.b_macro = std::stod(cells[2]);
    }
    if (!cells[3].empty()) {
      r.has_a = true;
      r.a_micro = std::stod(cells[3]);
      r.a_macro = std::stod(cells[4]);
      r.a_hard = std::stod(cells[5]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("failed writing: " + path);
}

int workers_from_env() {
  const char* env = std::getenv("COC_WORKERS");
  if (env == nullptr) return 1;
  const int w = std::atoi(env);
  return w >= 1 ? w : 1;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path,
                 const std::string& manifest) {
  RunConfig rc = load_run_config(config_path);
  const coc::SyntheticConfig& sc = need(rc.synthetic, "gen-data", "synthetic");
  coc::Corpus corpus = coc::generate_synthetic(sc);
  coc::write_jsonl(corpus, out_path);
  write_manifest(manifest.empty() ? default_manifest(out_path) : manifest, "gen-data", rc.raw,
                 sc.seed, json{{"config", config_path}}, json{{"corpus", out_path}});
  std::printf("gen-data: wrote %zu cases (k=%d, d_e=%d) to %s\n", corpus.cases.size(), corpus.k,
              corpus.d_e, out_path.c_str());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& checkpoint_path, const std::string& history_path,
              double train_frac, double dev_frac, const std::string& manifest) {
  RunConfig rc = load_run_config(config_path);
  const coc::NetworkConfig& net = need(rc.network, "train", "network");
  const coc::TrainConfig& tc = need(rc.train, "train", "train");
  coc::SplitCorpora splits = load_and_split(data_path, train_frac, dev_frac);
  coc::TrainResult result = coc::train(splits, net, tc);
  coc::save_network(result.params, net, checkpoint_path);
  if (!history_path.empty()) write_text_file(history_path, coc::history_csv(result.history));
  write_manifest(manifest.empty() ? default_manifest(checkpoint_path) : manifest, "train", rc.raw,
                 tc.seed, json{{"config", config_path}, {"data", data_path}},
                 json{{"checkpoint", checkpoint_path}, {"history", history_path}});
  const auto& best = result.history.epochs.at(static_cast<size_t>(result.history.best_epoch));
  std::printf("train: %zu epochs (%s), best epoch %d, dev selection %.4f\n",
              result.history.epochs.size(), result.history.stop_reason.c_str(),
              result.history.best_epoch, best.selection);
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& report_path, const std::string& table_path,
             const std::string& name, const std::string& manifest) {
  auto [params, net] = coc::load_network(checkpoint_path);
  coc::Corpus corpus = coc::load_jsonl(data_path);
  auto [ra, rb] = coc::evaluate_reports(corpus, params, net);
  if (!report_path.empty()) {
    coc::write_json_file(json{{"task_a", report_to_json(ra)}, {"task_b", report_to_json(rb)}},
                         report_path);
  }
  coc::ResultRow row = coc::make_result_row(name, &ra, &rb);
  if (!table_path.empty()) write_text_file(table_path, coc::result_table_csv({row}));
  const std::string primary = !report_path.empty() ? report_path : data_path + ".eval";
  write_manifest(manifest.empty() ? default_manifest(primary) : manifest, "eval", json::object(),
                 0, json{{"checkpoint", checkpoint_path}, {"data", data_path}},
                 json{{"report", report_path}, {"table", table_path}});
  std::fputs(coc::result_table_text({row}).c_str(), stdout);
  return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& config_path,
               const std::string& table_path, const std::string& only, double train_frac,
               double dev_frac, const std::string& manifest) {
  RunConfig rc = load_run_config(config_path);
  const coc::NetworkConfig& net = need(rc.network, "ablate", "network");
  const coc::TrainConfig& tc = need(rc.train, "ablate", "train");
  coc::SplitCorpora splits = load_and_split(data_path, train_frac, dev_frac);
  std::vector<std::string> names = split_csv_list(only);
  const int workers = workers_from_env();
  std::vector<coc::AblationOutcome> outcomes =
      coc::run_ablations(splits, net, tc, names, workers);
  std::vector<coc::ResultRow> rows;
  for (const auto& o : outcomes) rows.push_back(o.row);
  write_text_file(table_path, coc::result_table_csv(rows));
  write_manifest(manifest.empty() ? default_manifest(table_path) : manifest, "ablate", rc.raw,
                 tc.seed, json{{"config", config_path}, {"data", data_path}},
                 json{{"table", table_path}});
  std::fputs(coc::result_table_text(rows).c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const std::string& config_path, uint64_t seed, double step) {
  // Tiny end-to-end model: every parameter feeds a composite loss over two
  // synthetic cases; analytic gradients against central differences.
  coc::NetworkConfig net;
  net.k = 3;
  net.d_e = 8;
  net.d_att_tok = 6;
  net.d_gru = 5;
  net.d_att_sent = 6;
  net.heads = 2;
  net.d_cls = 4;
  net.dropout = 0.0;
  net.dependency_mode = coc::DependencyMode::full;
  coc::TrainConfig tc;
  tc.batch_size = 2;
  if (!config_path.empty()) {
    RunConfig rc = load_run_config(config_path);
    if (rc.network) net = *rc.network;
    if (rc.train) tc = *rc.train;
  }

  coc::SyntheticConfig sc;
  sc.k = net.k;
  sc.d_e = net.d_e;
  sc.cases = 2;
  sc.sentences_min = 2;
  sc.sentences_max = 3;
  sc.tokens_min = 3;
  sc.tokens_max = 4;
  sc.prevalence = {0.6};
  sc.seed = seed;
  coc::Corpus corpus = coc::generate_synthetic(sc);

  coc::ParamStore params = coc::init_params(net, seed);
  coc::MemoryBank bank_b(32), bank_a(32);
  const bool gold = net.dependency_mode == coc::DependencyMode::gold_labels ||
                    net.dependency_mode == coc::DependencyMode::gold_labels_plus_features;

  std::vector<std::pair<std::string, coc::Tensor*>> leaves;
  for (auto& [pname, tensor] : params.items()) leaves.push_back({pname, &tensor});
  auto build = [&](coc::Tape& tape) {
    coc::NetworkRun run(tape, params, net);
    std::vector<coc::ForwardOutput> outs;
    std::vector<const coc::CaseDocument*> docs;
    for (const auto& doc : corpus.cases) {
      outs.push_back(
          run.forward_case(doc, false, nullptr, gold ? &doc.labels.alleged : nullptr));
      docs.push_back(&doc);
    }
    return coc::composite_loss(tape, outs, docs, bank_b, bank_a, tc, nullptr);
  };
  coc::GradCheckResult res = coc::grad_check(build, leaves, step, 4);
  std::printf("gradcheck: max relative error %.3e over %d checked entries\n", res.max_rel_err,
              res.checked);
  std::printf("gradcheck: worst %s[%d]: analytic %.9e vs numeric %.9e\n", res.worst.param.c_str(),
              res.worst.index, res.worst.analytic, res.worst.numeric);
  return res.max_rel_err < 1e-4 ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format,
               const std::string& out_path, bool include_reference) {
  std::vector<coc::ResultRow> rows;
  for (const std::string& path : inputs) {
    for (auto& row : parse_result_csv(path)) rows.push_back(std::move(row));
  }
  if (include_reference) {
    for (auto& row : coc::reference_rows()) {
      row.condition = "reference/" + row.condition;
      rows.push_back(std::move(row));
    }
  }
  const std::string rendered =
      format == "csv" ? coc::result_table_csv(rows) : coc::result_table_text(rows);
  if (!out_path.empty()) {
    write_text_file(out_path, rendered);
    write_manifest(default_manifest(out_path), "report", json::object(), 0,
                   json{{"inputs", inputs}}, json{{"table", out_path}});
  }
  std::fputs(rendered.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"case outcome classification: training and evaluation pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, checkpoint_path, history_path, report_path;
  std::string table_path, only, manifest, name = "eval", format = "text";
  std::vector<std::string> inputs;
  double train_frac = 0.8, dev_frac = 0.1;
  uint64_t seed = 0;
  bool include_reference = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "JSON config with a 'synthetic' section")->required();
  gen->add_option("--out", out_path, "output JSONL path")->required();
  gen->add_option("--manifest", manifest, "manifest path (default <out>.manifest.json)");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", data_path, "JSONL corpus")->required();
  train->add_option("--config", config_path, "JSON config with 'network' and 'train'")->required();
  train->add_option("--out-checkpoint", checkpoint_path, "checkpoint path")->required();
  train->add_option("--history", history_path, "training history CSV path");
  train->add_option("--train-frac", train_frac, "chronological train fraction");
  train->add_option("--dev-frac", dev_frac, "chronological dev fraction");
  train->add_option("--manifest", manifest, "manifest path");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  eval->add_option("--data", data_path, "JSONL corpus")->required();
  eval->add_option("--report", report_path, "metrics JSON output path");
  eval->add_option("--table", table_path, "one-row result CSV output path");
  eval->add_option("--name", name, "condition name for the table row");
  eval->add_option("--manifest", manifest, "manifest path");

  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation suite");
  ablate->add_option("--data", data_path, "JSONL corpus")->required();
  ablate->add_option("--config", config_path, "JSON config with 'network' and 'train'")
      ->required();
  ablate->add_option("--out-table", table_path, "result table CSV path")->required();
  ablate->add_option("--only", only, "comma-separated subset of condition names");
  ablate->add_option("--train-frac", train_frac, "chronological train fraction");
  ablate->add_option("--dev-frac", dev_frac, "chronological dev fraction");
  ablate->add_option("--manifest", manifest, "manifest path");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--config", config_path, "optional JSON config override");
  gradcheck->add_option("--seed", seed, "seed for the random model and case");
  double fd_step = 1e-4;
  gradcheck->add_option("--step", fd_step, "central-difference step size");

  CLI::App* report = app.add_subcommand("report", "merge result tables");
  report->add_option("--inputs", inputs, "result CSV paths")->required()->expected(-1);
  report->add_option("--format", format, "csv or text")
      ->check(CLI::IsMember({"csv", "text"}));
  report->add_option("--out", out_path, "write the merged table here");
  report->add_flag("--include-reference", include_reference,
                   "append the stored reference scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, manifest);
    if (train->parsed()) {
      return cmd_train(data_path, config_path, checkpoint_path, history_path, train_frac,
                       dev_frac, manifest);
    }
    if (eval->parsed()) {
      return cmd_eval(checkpoint_path, data_path, report_path, table_path, name, manifest);
    }
    if (ablate->parsed()) {
      return cmd_ablate(data_path, config_path, table_path, only, train_frac, dev_frac, manifest);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(config_path, seed, fd_step);
    if (report->parsed()) return cmd_report(inputs, format, out_path, include_reference);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
