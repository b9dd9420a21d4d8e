#include "coc/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "coc/errors.hpp"

namespace coc {

namespace {

// Shared shape/content validation: rectangular, equal shapes, entries 0/1.
void check_pair(const BinMatrix& a, const BinMatrix& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " cases");
  }
  for (size_t c = 0; c < a.size(); ++c) {
    if (a[c].size() != b[c].size() || (c > 0 && a[c].size() != a[0].size())) {
      throw DimensionError(std::string(what) + ": ragged or mismatched row " + std::to_string(c));
    }
    for (int8_t v : a[c]) {
      if (v != 0 && v != 1) throw ContractError(std::string(what) + ": entries must be 0/1");
    }
    for (int8_t v : b[c]) {
      if (v != 0 && v != 1) throw ContractError(std::string(what) + ": entries must be 0/1");
    }
  }
}

double mean_over_mean_articles(const ConfusionCounts& counts) {
  double sum = 0.0;
  int n = 0;
  for (const ArticleCounts& ac : counts) {
    if (!ac.in_mean) continue;
    sum += f1_score(ac.tp, ac.fp, ac.fn);
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace

BinMatrix predictions_from_logits(const std::vector<std::vector<double>>& logits) {
  BinMatrix out(logits.size());
  for (size_t c = 0; c < logits.size(); ++c) {
    out[c].reserve(logits[c].size());
    for (double l : logits[c]) out[c].push_back(static_cast<int8_t>(l > 0.0 ? 1 : 0));
  }
  return out;
}

double f1_score(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ConfusionCounts confusion(const BinMatrix& preds, const BinMatrix& golds) {
  check_pair(preds, golds, "confusion");
  const size_t n = preds.size();
  const size_t k = n == 0 ? 0 : preds[0].size();
  ConfusionCounts counts(k);
  for (size_t i = 0; i < k; ++i) {
    ArticleCounts& ac = counts[i];
    ac.included.assign(n, 1);
    for (size_t c = 0; c < n; ++c) {
      const int p = preds[c][i], g = golds[c][i];
      if (p == 1 && g == 1) ++ac.tp;
      else if (p == 1) ++ac.fp;
      else if (g == 1) ++ac.fn;
      else ++ac.tn;
    }
  }
  return counts;
}

ConfusionCounts hard_confusion(const BinMatrix& preds_a, const BinMatrix& golds_a,
                               const BinMatrix& golds_b) {
  check_pair(preds_a, golds_a, "hard_confusion");
  check_pair(preds_a, golds_b, "hard_confusion");
  const size_t n = preds_a.size();
  const size_t k = n == 0 ? 0 : preds_a[0].size();
  ConfusionCounts counts(k);
  for (size_t i = 0; i < k; ++i) {
    ArticleCounts& ac = counts[i];
    ac.included.assign(n, 0);
    for (size_t c = 0; c < n; ++c) {
      if (golds_b[c][i] != 1) continue;  // case never enters article i's matrix
      ac.included[c] = 1;
      const int p = preds_a[c][i], g = golds_a[c][i];
      if (p == 1 && g == 1) ++ac.tp;
      else if (p == 1) ++ac.fp;
      else if (g == 1) ++ac.fn;
      else ++ac.tn;
    }
    ac.in_mean = ac.tp + ac.fp + ac.fn + ac.tn > 0;
  }
  return counts;
}

double micro_f1(const BinMatrix& preds, const BinMatrix& golds) {
  const ConfusionCounts counts = confusion(preds, golds);
  long tp = 0, fp = 0, fn = 0;
  for (const ArticleCounts& ac : counts) {
    tp += ac.tp;
    fp += ac.fp;
    fn += ac.fn;
  }
  return f1_score(tp, fp, fn);
}

double macro_f1(const BinMatrix& preds, const BinMatrix& golds) {
  return mean_over_mean_articles(confusion(preds, golds));
}

double hard_macro_f1(const BinMatrix& preds_a, const BinMatrix& golds_a,
                     const BinMatrix& golds_b) {
  return mean_over_mean_articles(hard_confusion(preds_a, golds_a, golds_b));
}

std::pair<MetricsReport, MetricsReport> report(const BinMatrix& preds_a, const BinMatrix& preds_b,
                                               const BinMatrix& golds_a, const BinMatrix& golds_b) {
  check_pair(preds_a, preds_b, "report");
  check_pair(golds_a, golds_b, "report");

  MetricsReport a;
  a.task = "A";
  a.counts = confusion(preds_a, golds_a);
  a.micro_f1 = micro_f1(preds_a, golds_a);
  for (const ArticleCounts& ac : a.counts) a.per_article_f1.push_back(f1_score(ac.tp, ac.fp, ac.fn));
  a.macro_f1 = mean_over_mean_articles(a.counts);
  a.has_hard = true;
  a.hard_macro_f1 = hard_macro_f1(preds_a, golds_a, golds_b);

  MetricsReport b;
  b.task = "B";
  b.counts = confusion(preds_b, golds_b);
  b.micro_f1 = micro_f1(preds_b, golds_b);
  for (const ArticleCounts& ac : b.counts) b.per_article_f1.push_back(f1_score(ac.tp, ac.fp, ac.fn));
  b.macro_f1 = mean_over_mean_articles(b.counts);

  return {a, b};
}

ResultRow make_result_row(const std::string& condition, const MetricsReport* task_a,
                          const MetricsReport* task_b) {
  ResultRow row;
  row.condition = condition;
  if (task_b != nullptr) {
    row.has_b = true;
    row.b_micro = 100.0 * task_b->micro_f1;
    row.b_macro = 100.0 * task_b->macro_f1;
  }
  if (task_a != nullptr) {
    row.has_a = true;
    row.a_micro = 100.0 * task_a->micro_f1;
    row.a_macro = 100.0 * task_a->macro_f1;
    row.a_hard = 100.0 * task_a->hard_macro_f1;
  }
  return row;
}

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string result_table_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "condition,b_micro_f1,b_macro_f1,a_micro_f1,a_macro_f1,a_hard_macro_f1\n";
  for (const ResultRow& r : rows) {
    os << r.condition << ',';
    os << (r.has_b ? fmt2(r.b_micro) : "") << ',' << (r.has_b ? fmt2(r.b_macro) : "") << ',';
    os << (r.has_a ? fmt2(r.a_micro) : "") << ',' << (r.has_a ? fmt2(r.a_macro) : "") << ','
       << (r.has_a ? fmt2(r.a_hard) : "");
    os << '\n';
  }
  return os.str();
}

std::string result_table_text(const std::vector<ResultRow>& rows) {
  static const char* headers[6] = {"condition",  "B u-F1", "B m-F1",
                                   "A u-F1",     "A m-F1", "A hm-F1"};
  std::vector<std::array<std::string, 6>> cells;
  for (const ResultRow& r : rows) {
    std::array<std::string, 6> c;
    c[0] = r.condition;
    c[1] = r.has_b ? fmt2(r.b_micro) : "-";
    c[2] = r.has_b ? fmt2(r.b_macro) : "-";
    c[3] = r.has_a ? fmt2(r.a_micro) : "-";
    c[4] = r.has_a ? fmt2(r.a_macro) : "-";
    c[5] = r.has_a ? fmt2(r.a_hard) : "-";
    cells.push_back(std::move(c));
  }
  size_t width[6];
  for (int j = 0; j < 6; ++j) {
    width[j] = std::string(headers[j]).size();
    for (const auto& c : cells) width[j] = std::max(width[j], c[j].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::array<std::string, 6>& c) {
    for (int j = 0; j < 6; ++j) {
      os << c[j];
      if (j < 5) os << std::string(width[j] - c[j].size() + 2, ' ');
    }
    os << '\n';
  };
  std::array<std::string, 6> head;
  for (int j = 0; j < 6; ++j) head[j] = headers[j];
  emit(head);
  for (const auto& c : cells) emit(c);
  return os.str();
}

std::vector<ResultRow> reference_rows() {
  auto row = [](const char* name, double bu, double bm, double au, double am, double ah) {
    ResultRow r;
    r.condition = name;
    if (bu >= 0.0) {
      r.has_b = true;
      r.b_micro = bu;
      r.b_macro = bm;
    }
    if (au >= 0.0) {
      r.has_a = true;
      r.a_micro = au;
      r.a_macro = am;
      r.a_hard = ah;
    }
    return r;
  };
  return {
      row("task_b_only", 76.20, 67.15, -1, -1, -1),
      row("task_a_only", -1, -1, 68.42, 56.26, 54.14),
      row("multi_task", 78.17, 69.16, 69.29, 58.05, 55.57),
      row("full", 79.29, 70.97, 71.26, 65.24, 60.90),
      row("wo_feat_and_label", 78.93, 71.45, 70.07, 59.14, 57.09),
      row("wo_feature", 78.59, 71.56, 70.68, 63.93, 59.28),
      row("wo_label", 79.09, 71.38, 70.32, 64.12, 61.70),
      row("gold_labels_only", 78.21, 70.03, 81.46, 78.93, 66.59),
      row("gold_labels_plus_features", 77.68, 70.40, 83.19, 78.79, 67.42),
      row("wo_outcome_contrastive", 78.42, 69.48, 69.86, 60.84, 57.62),
      row("wo_article_contrastive", 79.02, 71.14, 71.16, 64.68, 59.86),
      row("task_a_contrastive", -1, -1, 70.16, 62.14, 58.12),
      row("task_b_contrastive", 78.16, 69.42, -1, -1, -1),
  };
}

}  // namespace coc
