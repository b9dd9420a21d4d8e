#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coc/adam.hpp"
#include "coc/contrastive.hpp"
#include "coc/corpus.hpp"
#include "coc/metrics.hpp"
#include "coc/network.hpp"

namespace coc {

/// Which terms of the composite loss are active. Single-task baselines mask
/// the other task's BCE; contrastive terms ride on top of their task's BCE.
struct LossMask {
  bool bce_b = true;
  bool bce_a = true;
  bool hc_b = true;  // hierarchical contrastive on Task B views
  bool hc_a = true;

  bool any() const { return bce_b || bce_a || hc_b || hc_a; }
  bool any_contrastive() const { return hc_b || hc_a; }
};

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  double learning_rate = 1e-3;
  std::vector<double> lr_grid = {1e-3, 3e-4, 1e-4};
  ContrastiveConfig contrastive;
  double beta = 1.0;  // weight of the contrastive block in the total loss
  LossMask mask;
  uint64_t seed = 0;

  void validate() const;  // ConfigError
};

struct LossComponents {
  double bce_b = 0.0, bce_a = 0.0, hc_b = 0.0, hc_a = 0.0, total = 0.0;
};

/// Assembles the active terms on the tape:
///   L = BCE_B + BCE_A + beta * (HC_B + HC_A)
/// BCE is the mean over the batch's N*k binary decisions of that task.
/// Components (plain values) are reported through `out` when non-null.
Var composite_loss(Tape& tape, const std::vector<ForwardOutput>& outs,
                   const std::vector<const CaseDocument*>& docs, const MemoryBank& bank_b,
                   const MemoryBank& bank_a, const TrainConfig& cfg, LossComponents* out);

struct EpochStats {
  int epoch = 0;  // 0-based
  LossComponents train_loss;  // means over the epoch's optimization steps
  double dev_b_micro = 0.0, dev_b_macro = 0.0;
  double dev_a_micro = 0.0, dev_a_macro = 0.0, dev_a_hard = 0.0;
  double selection = 0.0;  // mean of active tasks' dev macro-F1
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 0-based index into epochs
  std::string stop_reason;  // "patience" or "max_epochs"
};

std::string history_csv(const TrainHistory& h);

struct TrainResult {
  ParamStore params;  // parameters restored from the best epoch
  TrainHistory history;
  NetworkConfig net;
  TrainConfig trainer;
};

/// Seeded mini-batch training with early stopping on the dev selection
/// metric (strict improvement; stop after `patience` stale epochs). The
/// memory banks are updated after each optimizer step with that step's
/// detached (pre-step) representations.
TrainResult train(const SplitCorpora& splits, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg);

/// Eval-mode predictions and gold labels for a corpus, row per case.
struct EvalOutputs {
  BinMatrix preds_a, preds_b, golds_a, golds_b;
};
EvalOutputs evaluate(const Corpus& data, ParamStore& params, const NetworkConfig& cfg);

/// {Task A report, Task B report} on `data`.
std::pair<MetricsReport, MetricsReport> evaluate_reports(const Corpus& data, ParamStore& params,
                                                         const NetworkConfig& cfg);

struct GridCell {
  double lr = 0.0;
  double tau_a = 0.0, tau_c = 0.0;
  double dev_selection = 0.0;
  int best_epoch = -1;
};

struct GridSearchResult {
  std::vector<GridCell> cells;  // enumeration order: lr-major, then temperature pairs
  int best_index = -1;
  TrainConfig best_config;
  TrainResult best;  // the winning cell's trained model
};

/// One training run per grid cell. With no contrastive term in the mask the
/// temperature axis collapses and only the learning-rate grid is scanned.
/// Ties keep the earliest cell, so the scan is deterministic.
GridSearchResult grid_search(const SplitCorpora& splits, const NetworkConfig& net_cfg,
                             const TrainConfig& base);

/// One experimental condition: the name plus the configuration tuple it
/// induces. alpha_override < 0 means "leave alpha alone".
struct AblationCondition {
  std::string name;
  DependencyMode dependency = DependencyMode::none;
  bool article_attention = true;
  LossMask mask;
  double alpha_override = -1.0;
  bool drop_article_term = false;
};

/// The 13 condition names in result-table order.
const std::vector<std::string>& ablation_condition_names();

/// ConfigError on unknown names.
AblationCondition ablation_condition(const std::string& name);

/// Applies the condition tuple to copies of the base configs.
std::pair<NetworkConfig, TrainConfig> apply_condition(const AblationCondition& cond,
                                                      const NetworkConfig& net,
                                                      const TrainConfig& trainer);

struct AblationOutcome {
  std::string condition;
  MetricsReport task_a, task_b;  // test-set reports (only the active ones meaningful)
  ResultRow row;                 // blanks follow the condition's single-task pattern
  TrainHistory history;
};

AblationOutcome run_ablation(const SplitCorpora& splits, const std::string& condition,
                             const NetworkConfig& base_net, const TrainConfig& base_train);

/// Runs the named conditions (all 13 when `names` is empty) with `workers`
/// threads; each run is fully independent. Results come back in name order.
std::vector<AblationOutcome> run_ablations(const SplitCorpora& splits,
                                           const NetworkConfig& base_net,
                                           const TrainConfig& base_train,
                                           std::vector<std::string> names = {}, int workers = 1);

}  // namespace coc
