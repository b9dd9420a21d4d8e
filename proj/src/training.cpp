#include "coc/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include "coc/errors.hpp"
#include "coc/rng.hpp"

namespace coc {

namespace {

bool is_gold_mode(DependencyMode m) {
  return m == DependencyMode::gold_labels || m == DependencyMode::gold_labels_plus_features;
}

void check_compat(const Corpus& data, const NetworkConfig& cfg, const char* what) {
  if (data.k != cfg.k) {
    throw ConfigError(std::string(what) + ": corpus has k=" + std::to_string(data.k) +
                      " but the network config has k=" + std::to_string(cfg.k));
  }
  if (data.d_e != cfg.d_e) {
    throw ConfigError(std::string(what) + ": corpus has d_e=" + std::to_string(data.d_e) +
                      " but the network config has d_e=" + std::to_string(cfg.d_e));
  }
}

std::vector<double> flat_targets(const std::vector<const CaseDocument*>& docs, bool alleged) {
  std::vector<double> t;
  for (const CaseDocument* d : docs) {
    const auto& v = alleged ? d->labels.alleged : d->labels.violated;
    for (int8_t x : v) t.push_back(static_cast<double>(x));
  }
  return t;
}

std::vector<std::vector<int8_t>> outcome_rows(const std::vector<const CaseDocument*>& docs,
                                              bool alleged) {
  std::vector<std::vector<int8_t>> out;
  for (const CaseDocument* d : docs) out.push_back(alleged ? d->labels.alleged : d->labels.violated);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (mask.any_contrastive() && batch_size < 2) {
    throw ConfigError("train: batch_size must be >= 2 when a contrastive term is active");
  }
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (lr_grid.empty()) throw ConfigError("train: lr_grid must be nonempty");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw ConfigError("train: lr_grid entries must be > 0");
  }
  if (!(beta >= 0.0)) throw ConfigError("train: beta must be >= 0");
  if (!mask.any()) throw ConfigError("train: all loss terms are masked");
  if (!mask.bce_b && !mask.bce_a) {
    throw ConfigError("train: at least one BCE term must be active (selection metric)");
  }
  contrastive.validate();
}

Var composite_loss(Tape& tape, const std::vector<ForwardOutput>& outs,
                   const std::vector<const CaseDocument*>& docs, const MemoryBank& bank_b,
                   const MemoryBank& bank_a, const TrainConfig& cfg, LossComponents* out) {
  if (outs.empty()) throw ContractError("composite_loss: empty batch");
  if (outs.size() != docs.size()) {
    throw DimensionError("composite_loss: " + std::to_string(outs.size()) + " outputs vs " +
                         std::to_string(docs.size()) + " documents");
  }
  if (!cfg.mask.any()) throw ContractError("composite_loss: all loss terms masked");

  Var total;
  auto accumulate = [&](Var term) { total = total.valid() ? add(total, term) : term; };

  LossComponents comps;
  if (cfg.mask.bce_b) {
    std::vector<Var> ls;
    for (const auto& o : outs) ls.push_back(o.logits_b);
    Var bce = bce_with_logits(concat(ls, 0), flat_targets(docs, true));
    comps.bce_b = tape.scalar(bce);
    accumulate(bce);
  }
  if (cfg.mask.bce_a) {
    std::vector<Var> ls;
    for (const auto& o : outs) ls.push_back(o.logits_a);
    Var bce = bce_with_logits(concat(ls, 0), flat_targets(docs, false));
    comps.bce_a = tape.scalar(bce);
    accumulate(bce);
  }
  Var hc_sum;
  if (cfg.mask.hc_b) {
    std::vector<Var> views;
    for (const auto& o : outs) views.push_back(o.views_b);
    Var hc = batch_loss(tape, views, outcome_rows(docs, true), bank_b, cfg.contrastive, Task::B);
    comps.hc_b = tape.scalar(hc);
    hc_sum = hc;
  }
  if (cfg.mask.hc_a) {
    std::vector<Var> views;
    for (const auto& o : outs) views.push_back(o.views_a);
    Var hc = batch_loss(tape, views, outcome_rows(docs, false), bank_a, cfg.contrastive, Task::A);
    comps.hc_a = tape.scalar(hc);
    hc_sum = hc_sum.valid() ? add(hc_sum, hc) : hc;
  }
  if (hc_sum.valid()) accumulate(scale(hc_sum, cfg.beta));

  comps.total = tape.scalar(total);
  if (out != nullptr) *out = comps;
  return total;
}

EvalOutputs evaluate(const Corpus& data, ParamStore& params, const NetworkConfig& cfg) {
  check_compat(data, cfg, "evaluate");
  EvalOutputs out;
  const size_t chunk = 32;  // bounded tape size; leaves bound once per chunk
  for (size_t start = 0; start < data.cases.size(); start += chunk) {
    Tape tape;
    NetworkRun run(tape, params, cfg);
    const size_t stop = std::min(data.cases.size(), start + chunk);
    for (size_t c = start; c < stop; ++c) {
      const CaseDocument& doc = data.cases[c];
      const std::vector<int8_t>* gold =
          is_gold_mode(cfg.dependency_mode) ? &doc.labels.alleged : nullptr;
      ForwardOutput fo = run.forward_case(doc, false, nullptr, gold);
      const auto& lb = tape.value(fo.logits_b);
      const auto& la = tape.value(fo.logits_a);
      std::vector<int8_t> pb, pa;
      for (double v : lb) pb.push_back(static_cast<int8_t>(v > 0.0 ? 1 : 0));
      for (double v : la) pa.push_back(static_cast<int8_t>(v > 0.0 ? 1 : 0));
      out.preds_b.push_back(std::move(pb));
      out.preds_a.push_back(std::move(pa));
      out.golds_b.push_back(doc.labels.alleged);
      out.golds_a.push_back(doc.labels.violated);
    }
  }
  return out;
}

std::pair<MetricsReport, MetricsReport> evaluate_reports(const Corpus& data, ParamStore& params,
                                                         const NetworkConfig& cfg) {
  EvalOutputs e = evaluate(data, params, cfg);
  return report(e.preds_a, e.preds_b, e.golds_a, e.golds_b);
}

TrainResult train(const SplitCorpora& splits, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg) {
  net_cfg.validate();
  train_cfg.validate();
  if (splits.train.cases.empty() || splits.dev.cases.empty()) {
    throw ContractError("train: train and dev splits must be nonempty");
  }
  check_compat(splits.train, net_cfg, "train");
  check_compat(splits.dev, net_cfg, "train");

  ParamStore params = init_params(net_cfg, train_cfg.seed);
  Adam adam({train_cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(train_cfg.seed + 0x9E3779B97F4A7C15ull);
  MemoryBank bank_b(32), bank_a(32);
  const bool gold = is_gold_mode(net_cfg.dependency_mode);

  TrainHistory history;
  double best_sel = -1.0;
  int stale = 0;
  std::map<std::string, std::vector<double>> best_values;

  const size_t n = splits.train.cases.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    shuffle_indices(order, rng);
    LossComponents epoch_sum;
    int steps = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(train_cfg.batch_size)) {
      const size_t stop = std::min(n, start + static_cast<size_t>(train_cfg.batch_size));
      std::vector<const CaseDocument*> docs;
      for (size_t i = start; i < stop; ++i) docs.push_back(&splits.train.cases[order[i]]);

      Tape tape;
      NetworkRun run(tape, params, net_cfg);
      std::vector<ForwardOutput> outs;
      for (const CaseDocument* d : docs) {
        outs.push_back(run.forward_case(*d, true, &rng, gold ? &d->labels.alleged : nullptr));
      }
      LossComponents comps;
      Var loss = composite_loss(tape, outs, docs, bank_b, bank_a, train_cfg, &comps);
      if (!std::isfinite(comps.total)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(steps) + ": non-finite loss");
      }
      // Detach this step's representations before the parameters move.
      std::vector<RepRecord> recs_b, recs_a;
      if (train_cfg.mask.hc_b) {
        std::vector<Var> views;
        for (const auto& o : outs) views.push_back(o.views_b);
        recs_b = detach_records(tape, views, outcome_rows(docs, true), Task::B);
      }
      if (train_cfg.mask.hc_a) {
        std::vector<Var> views;
        for (const auto& o : outs) views.push_back(o.views_a);
        recs_a = detach_records(tape, views, outcome_rows(docs, false), Task::A);
      }
      tape.backward(loss);
      adam.step(params);
      bank_update(bank_b, recs_b);
      bank_update(bank_a, recs_a);

      epoch_sum.bce_b += comps.bce_b;
      epoch_sum.bce_a += comps.bce_a;
      epoch_sum.hc_b += comps.hc_b;
      epoch_sum.hc_a += comps.hc_a;
      epoch_sum.total += comps.total;
      ++steps;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss.bce_b = epoch_sum.bce_b / steps;
    stats.train_loss.bce_a = epoch_sum.bce_a / steps;
    stats.train_loss.hc_b = epoch_sum.hc_b / steps;
    stats.train_loss.hc_a = epoch_sum.hc_a / steps;
    stats.train_loss.total = epoch_sum.total / steps;

    auto [ra, rb] = evaluate_reports(splits.dev, params, net_cfg);
    stats.dev_b_micro = rb.micro_f1;
    stats.dev_b_macro = rb.macro_f1;
    stats.dev_a_micro = ra.micro_f1;
    stats.dev_a_macro = ra.macro_f1;
    stats.dev_a_hard = ra.hard_macro_f1;
    double sel = 0.0;
    int active = 0;
    if (train_cfg.mask.bce_b) {
      sel += rb.macro_f1;
      ++active;
    }
    if (train_cfg.mask.bce_a) {
      sel += ra.macro_f1;
      ++active;
    }
    stats.selection = sel / active;
    history.epochs.push_back(stats);

    if (stats.selection > best_sel) {
      best_sel = stats.selection;
      history.best_epoch = epoch;
      stale = 0;
      best_values.clear();
      for (const auto& [name, t] : params.items()) best_values[name] = t.values;
    } else {
      ++stale;
      if (stale >= train_cfg.patience) {
        history.stop_reason = "patience";
        break;
      }
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";

  for (auto& [name, t] : params.items()) {
    t.values = best_values.at(name);
    if (t.requires_grad) t.zero_grad();
  }

  TrainResult result;
  result.params = std::move(params);
  result.history = std::move(history);
  result.net = net_cfg;
  result.trainer = train_cfg;
  return result;
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,train_total,train_bce_b,train_bce_a,train_hc_b,train_hc_a,"
        "dev_b_micro_f1,dev_b_macro_f1,dev_a_micro_f1,dev_a_macro_f1,dev_a_hard_macro_f1,"
        "selection\n";
  char buf[64];
  auto put = [&](double v, char tail) {
    std::snprintf(buf, sizeof(buf), "%.6f%c", v, tail);
    os << buf;
  };
  for (const EpochStats& e : h.epochs) {
    os << e.epoch << ',';
    put(e.train_loss.total, ',');
    put(e.train_loss.bce_b, ',');
    put(e.train_loss.bce_a, ',');
    put(e.train_loss.hc_b, ',');
    put(e.train_loss.hc_a, ',');
    put(e.dev_b_micro, ',');
    put(e.dev_b_macro, ',');
    put(e.dev_a_micro, ',');
    put(e.dev_a_macro, ',');
    put(e.dev_a_hard, ',');
    put(e.selection, '\n');
  }
  return os.str();
}

GridSearchResult grid_search(const SplitCorpora& splits, const NetworkConfig& net_cfg,
                             const TrainConfig& base) {
  base.validate();
  std::vector<TrainConfig> cells;
  for (double lr : base.lr_grid) {
    TrainConfig c = base;
    c.learning_rate = lr;
    if (base.mask.any_contrastive()) {
      for (const auto& [ta, tc] : ContrastiveConfig::temperature_grid()) {
        TrainConfig ct = c;
        ct.contrastive.tau_a = ta;
        ct.contrastive.tau_c = tc;
        cells.push_back(ct);
      }
    } else {
      cells.push_back(c);
    }
  }

  GridSearchResult result;
  for (size_t i = 0; i < cells.size(); ++i) {
    TrainResult tr = train(splits, net_cfg, cells[i]);
    GridCell cell;
    cell.lr = cells[i].learning_rate;
    cell.tau_a = cells[i].contrastive.tau_a;
    cell.tau_c = cells[i].contrastive.tau_c;
    cell.best_epoch = tr.history.best_epoch;
    cell.dev_selection = tr.history.epochs[static_cast<size_t>(tr.history.best_epoch)].selection;
    result.cells.push_back(cell);
    if (result.best_index < 0 || cell.dev_selection > result.cells[static_cast<size_t>(
                                                         result.best_index)].dev_selection) {
      result.best_index = static_cast<int>(i);
      result.best_config = cells[i];
      result.best = std::move(tr);
    }
  }
  return result;
}

const std::vector<std::string>& ablation_condition_names() {
  static const std::vector<std::string> names = {
      "task_b_only",           "task_a_only",
      "multi_task",            "full",
      "wo_feat_and_label",     "wo_feature",
      "wo_label",              "gold_labels_only",
      "gold_labels_plus_features", "wo_outcome_contrastive",
      "wo_article_contrastive",    "task_a_contrastive",
      "task_b_contrastive"};
  return names;
}

AblationCondition ablation_condition(const std::string& name) {
  AblationCondition c;
  c.name = name;
  auto mask = [](bool bb, bool ba, bool hb, bool ha) {
    LossMask m;
    m.bce_b = bb;
    m.bce_a = ba;
    m.hc_b = hb;
    m.hc_a = ha;
    return m;
  };
  if (name == "task_b_only") {
    c.dependency = DependencyMode::none;
    c.mask = mask(true, false, false, false);
  } else if (name == "task_a_only") {
    c.dependency = DependencyMode::none;
    c.mask = mask(false, true, false, false);
  } else if (name == "multi_task") {
    c.dependency = DependencyMode::none;
    c.article_attention = false;  // one shared view broadcast to every head
    c.mask = mask(true, true, false, false);
  } else if (name == "full") {
    c.dependency = DependencyMode::full;
    c.mask = mask(true, true, true, true);
  } else if (name == "wo_feat_and_label") {
    c.dependency = DependencyMode::none;
    c.mask = mask(true, true, true, true);
  } else if (name == "wo_feature") {
    c.dependency = DependencyMode::labels_only;
    c.mask = mask(true, true, true, true);
  } else if (name == "wo_label") {
    c.dependency = DependencyMode::features_only;
    c.mask = mask(true, true, true, true);
  } else if (name == "gold_labels_only") {
    c.dependency = DependencyMode::gold_labels;
    c.mask = mask(true, true, true, true);
  } else if (name == "gold_labels_plus_features") {
    c.dependency = DependencyMode::gold_labels_plus_features;
    c.mask = mask(true, true, true, true);
  } else if (name == "wo_outcome_contrastive") {
    c.dependency = DependencyMode::full;
    c.mask = mask(true, true, true, true);
    c.alpha_override = 0.0;
  } else if (name == "wo_article_contrastive") {
    c.dependency = DependencyMode::full;
    c.mask = mask(true, true, true, true);
    c.drop_article_term = true;
  } else if (name == "task_a_contrastive") {
    c.dependency = DependencyMode::none;
    c.mask = mask(false, true, false, true);
  } else if (name == "task_b_contrastive") {
    c.dependency = DependencyMode::none;
    c.mask = mask(true, false, true, false);
  } else {
    throw ConfigError("unknown ablation condition '" + name + "'");
  }
  return c;
}

std::pair<NetworkConfig, TrainConfig> apply_condition(const AblationCondition& cond,
                                                      const NetworkConfig& net,
                                                      const TrainConfig& trainer) {
  NetworkConfig n = net;
  n.dependency_mode = cond.dependency;
  n.article_attention = cond.article_attention;
  TrainConfig t = trainer;
  t.mask = cond.mask;
  if (cond.alpha_override >= 0.0) t.contrastive.alpha = cond.alpha_override;
  if (cond.drop_article_term) t.contrastive.include_article_term = false;
  return {n, t};
}

AblationOutcome run_ablation(const SplitCorpora& splits, const std::string& condition,
                             const NetworkConfig& base_net, const TrainConfig& base_train) {
  const AblationCondition cond = ablation_condition(condition);
  auto [net, trainer] = apply_condition(cond, base_net, base_train);
  TrainResult tr = train(splits, net, trainer);

  if (splits.test.cases.empty()) throw ContractError("run_ablation: empty test split");
  auto [ra, rb] = evaluate_reports(splits.test, tr.params, net);

  AblationOutcome out;
  out.condition = condition;
  out.task_a = ra;
  out.task_b = rb;
  out.row = make_result_row(condition, cond.mask.bce_a ? &ra : nullptr,
                            cond.mask.bce_b ? &rb : nullptr);
  out.history = std::move(tr.history);
  return out;
}

std::vector<AblationOutcome> run_ablations(const SplitCorpora& splits,
                                           const NetworkConfig& base_net,
                                           const TrainConfig& base_train,
                                           std::vector<std::string> names, int workers) {
  if (names.empty()) names = ablation_condition_names();
  for (const std::string& name : names) ablation_condition(name);  // fail fast on typos
  workers = std::max(1, std::min<int>(workers, static_cast<int>(names.size())));

  std::vector<AblationOutcome> results(names.size());
  if (workers == 1) {
    for (size_t i = 0; i < names.size(); ++i) {
      results[i] = run_ablation(splits, names[i], base_net, base_train);
    }
    return results;
  }

  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = next.fetch_add(1); i < names.size(); i = next.fetch_add(1)) {
          results[i] = run_ablation(splits, names[i], base_net, base_train);
        }
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace coc
