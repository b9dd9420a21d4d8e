#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace coc {

/// N x k binary label/prediction matrix, one row per case.
using BinMatrix = std::vector<std::vector<int8_t>>;

/// Per-article confusion counts plus the case-inclusion mask that produced
/// them (all-ones for the plain metrics, the allegation mask for the hard
/// variant). in_mean marks articles that participate in the macro average.
struct ArticleCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::vector<uint8_t> included;
  bool in_mean = true;
};
using ConfusionCounts = std::vector<ArticleCounts>;

/// Positive prediction iff the logit is strictly greater than zero.
BinMatrix predictions_from_logits(const std::vector<std::vector<double>>& logits);

/// 2TP / (2TP + FP + FN), and 0 when that denominator is 0.
double f1_score(long tp, long fp, long fn);

ConfusionCounts confusion(const BinMatrix& preds, const BinMatrix& golds);

/// Allegation-conditioned counts for Task A: article i's matrix only counts
/// cases with golds_b[c][i] = 1 (violated = positive, alleged-but-not-violated
/// = negative); articles nobody alleges are flagged out of the mean.
ConfusionCounts hard_confusion(const BinMatrix& preds_a, const BinMatrix& golds_a,
                               const BinMatrix& golds_b);

double micro_f1(const BinMatrix& preds, const BinMatrix& golds);
double macro_f1(const BinMatrix& preds, const BinMatrix& golds);
double hard_macro_f1(const BinMatrix& preds_a, const BinMatrix& golds_a,
                     const BinMatrix& golds_b);

struct MetricsReport {
  std::string task;  // "A" or "B"
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  bool has_hard = false;
  double hard_macro_f1 = 0.0;
  std::vector<double> per_article_f1;
  ConfusionCounts counts;
};

/// Both tasks' reports: {Task A (with hard macro-F1), Task B}.
std::pair<MetricsReport, MetricsReport> report(const BinMatrix& preds_a, const BinMatrix& preds_b,
                                               const BinMatrix& golds_a, const BinMatrix& golds_b);

/// One result-table row. Scores are percentages (the display convention);
/// has_a / has_b gate which columns render, absent ones print blank.
struct ResultRow {
  std::string condition;
  bool has_b = false;
  double b_micro = 0.0, b_macro = 0.0;
  bool has_a = false;
  double a_micro = 0.0, a_macro = 0.0, a_hard = 0.0;
};

ResultRow make_result_row(const std::string& condition, const MetricsReport* task_a,
                          const MetricsReport* task_b);

/// header: condition,b_micro_f1,b_macro_f1,a_micro_f1,a_macro_f1,a_hard_macro_f1
std::string result_table_csv(const std::vector<ResultRow>& rows);
std::string result_table_text(const std::vector<ResultRow>& rows);

/// Scores reported for this architecture on the original ECtHR benchmark,
/// one row per ablation condition. Kept for side-by-side report rendering;
/// desk-scale synthetic runs are not expected to reproduce them.
std::vector<ResultRow> reference_rows();

}  // namespace coc
