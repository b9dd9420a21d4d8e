#include "coc/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "coc/errors.hpp"

namespace coc {

std::string to_string(Task t) { return t == Task::A ? "A" : "B"; }

std::string to_string(Similarity s) { return s == Similarity::cosine ? "cosine" : "dot"; }

Similarity similarity_from_string(const std::string& s) {
  if (s == "cosine") return Similarity::cosine;
  if (s == "dot") return Similarity::dot;
  throw ConfigError("unknown similarity '" + s + "'");
}

std::string to_string(Formulation f) {
  return f == Formulation::negative_log_sum ? "negative_log_sum" : "paper_literal_product";
}

Formulation formulation_from_string(const std::string& s) {
  if (s == "negative_log_sum") return Formulation::negative_log_sum;
  if (s == "paper_literal_product") return Formulation::paper_literal_product;
  throw ConfigError("unknown formulation '" + s + "'");
}

std::string to_string(PDefinition p) {
  return p == PDefinition::all_but_anchor ? "all_but_anchor" : "printed_conjunction";
}

PDefinition p_definition_from_string(const std::string& s) {
  if (s == "all_but_anchor") return PDefinition::all_but_anchor;
  if (s == "printed_conjunction") return PDefinition::printed_conjunction;
  throw ConfigError("unknown p_definition '" + s + "'");
}

void ContrastiveConfig::validate() const {
  if (!(tau_a > 0.0) || !(tau_c > 0.0)) throw ConfigError("contrastive: temperatures must be > 0");
  if (!(alpha >= 0.0)) throw ConfigError("contrastive: alpha must be >= 0");
}

std::vector<std::pair<double, double>> ContrastiveConfig::temperature_grid() {
  static const double vals[] = {0.07, 0.1, 0.14, 0.2, 0.25, 0.3};
  std::vector<std::pair<double, double>> grid;
  for (double a : vals) {
    for (double c : vals) {
      if (a < c) grid.push_back({a, c});
    }
  }
  return grid;
}

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ContractError("memory bank capacity must be >= 1");
}

void MemoryBank::push(Task task, int article, int outcome, std::vector<double> rep) {
  auto& q = slots_[{task == Task::A ? 0 : 1, article, outcome}];
  q.push_back(std::move(rep));
  while (q.size() > static_cast<size_t>(capacity_)) q.pop_front();
}

const std::deque<std::vector<double>>& MemoryBank::entries(Task task, int article,
                                                           int outcome) const {
  static const std::deque<std::vector<double>> empty;
  auto it = slots_.find({task == Task::A ? 0 : 1, article, outcome});
  return it == slots_.end() ? empty : it->second;
}

size_t MemoryBank::total_entries() const {
  size_t n = 0;
  for (const auto& [key, q] : slots_) n += q.size();
  return n;
}

void MemoryBank::clear() { slots_.clear(); }

void bank_update(MemoryBank& bank, const std::vector<RepRecord>& records) {
  for (const RepRecord& r : records) bank.push(r.task, r.article, r.outcome, r.rep);
}

std::vector<RepRecord> detach_records(const Tape& tape, const std::vector<Var>& views,
                                      const std::vector<std::vector<int8_t>>& outcomes,
                                      Task task) {
  if (views.size() != outcomes.size()) {
    throw DimensionError("detach_records: " + std::to_string(views.size()) + " views vs " +
                         std::to_string(outcomes.size()) + " outcome vectors");
  }
  std::vector<RepRecord> out;
  for (size_t b = 0; b < views.size(); ++b) {
    const auto& shape = tape.shape(views[b]);
    if (shape.size() != 2) throw DimensionError("detach_records: views must be rank 2");
    const int k = shape[0], w = shape[1];
    if (outcomes[b].size() != static_cast<size_t>(k)) {
      throw DimensionError("detach_records: outcome vector length mismatch");
    }
    const auto& vals = tape.value(views[b]);
    for (int i = 0; i < k; ++i) {
      RepRecord r;
      r.rep.assign(vals.begin() + static_cast<size_t>(i) * w,
                   vals.begin() + static_cast<size_t>(i + 1) * w);
      r.article = i;
      r.outcome = outcomes[b][static_cast<size_t>(i)];
      r.task = task;
      r.case_ordinal = static_cast<int>(b);
      out.push_back(std::move(r));
    }
  }
  return out;
}

AnchorSets build_sets(const RepRecord& anchor, const std::vector<RepRecord>& pool,
                      PDefinition p_definition) {
  AnchorSets sets;
  for (int j = 0; j < static_cast<int>(pool.size()); ++j) {
    const RepRecord& r = pool[static_cast<size_t>(j)];
    const bool same_article = r.article == anchor.article;
    const bool same_case = r.case_ordinal >= 0 && r.case_ordinal == anchor.case_ordinal;
    if (p_definition == PDefinition::all_but_anchor) {
      sets.P.push_back(j);
    } else if (!same_article && !same_case) {
      sets.P.push_back(j);
    }
    if (same_article) {
      sets.Q.push_back(j);
      if (r.outcome == anchor.outcome) sets.R.push_back(j);
    }
  }
  return sets;
}

namespace {

double cosine_or_dot(const std::vector<double>& a, const std::vector<double>& b, Similarity sim) {
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  if (sim == Similarity::dot) return dot;
  double na = 0.0, nb = 0.0;
  for (double v : a) na += v * v;
  for (double v : b) nb += v * v;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct AnchorEval {
  double value = 0.0;
  bool skipped = false;
};

// One anchor's loss (and, when coeff != nullptr, d loss / d sims[p]) from its
// similarity row. Shared by the scalar entry point and the fused batch op so
// both formulations live in exactly one place.
AnchorEval eval_anchor(const std::vector<double>& sims, const AnchorSets& sets,
                       const ContrastiveConfig& cfg, std::vector<double>* coeff) {
  if (coeff != nullptr) coeff->assign(sims.size(), 0.0);
  if (sets.Q.empty()) return {0.0, true};

  // Stabilized exp sums; shifting by the max exponent cancels in every ratio.
  double max_a = -1e300, max_c = -1e300;
  for (int p : sets.P) max_a = std::max(max_a, sims[static_cast<size_t>(p)] / cfg.tau_a);
  for (int q : sets.Q) {
    max_a = std::max(max_a, sims[static_cast<size_t>(q)] / cfg.tau_a);
    max_c = std::max(max_c, sims[static_cast<size_t>(q)] / cfg.tau_c);
  }
  auto e_a = [&](int p) { return std::exp(sims[static_cast<size_t>(p)] / cfg.tau_a - max_a); };
  auto e_c = [&](int p) { return std::exp(sims[static_cast<size_t>(p)] / cfg.tau_c - max_c); };

  double SP = 0.0, SQa = 0.0, SQc = 0.0, SR = 0.0;
  for (int p : sets.P) SP += e_a(p);
  for (int q : sets.Q) {
    SQa += e_a(q);
    SQc += e_c(q);
  }
  for (int r : sets.R) SR += e_c(r);

  const bool term1 = cfg.include_article_term && !sets.P.empty();
  const bool term2 = cfg.include_outcome_term && !sets.R.empty();

  AnchorEval out;
  if (cfg.formulation == Formulation::negative_log_sum) {
    if (term1) out.value -= std::log(SQa) - std::log(SP);
    if (term2) out.value -= cfg.alpha * (std::log(SR) - std::log(SQc));
    if (coeff != nullptr) {
      if (term1) {
        for (int p : sets.P) (*coeff)[static_cast<size_t>(p)] += e_a(p) / (SP * cfg.tau_a);
        for (int q : sets.Q) (*coeff)[static_cast<size_t>(q)] -= e_a(q) / (SQa * cfg.tau_a);
      }
      if (term2) {
        for (int q : sets.Q) (*coeff)[static_cast<size_t>(q)] += cfg.alpha * e_c(q) / (SQc * cfg.tau_c);
        for (int r : sets.R) (*coeff)[static_cast<size_t>(r)] -= cfg.alpha * e_c(r) / (SR * cfg.tau_c);
      }
    }
  } else {
    // Product form as printed: log(SQ/SP) * alpha * (SR/SQ). A dropped or
    // undefined factor falls away rather than zeroing the product.
    const double T1 = term1 ? std::log(SQa) - std::log(SP) : 0.0;
    const double T2 = term2 ? SR / SQc : 0.0;
    if (term1 && term2) {
      out.value = T1 * cfg.alpha * T2;
    } else if (term1) {
      out.value = T1;
    } else if (term2) {
      out.value = cfg.alpha * T2;
    }
    if (coeff != nullptr && (term1 || term2)) {
      const double c1 = term1 && term2 ? cfg.alpha * T2 : (term1 ? 1.0 : 0.0);
      const double c2 = term1 && term2 ? cfg.alpha * T1 : (term2 ? cfg.alpha : 0.0);
      if (term1) {
        for (int q : sets.Q) (*coeff)[static_cast<size_t>(q)] += c1 * e_a(q) / (SQa * cfg.tau_a);
        for (int p : sets.P) (*coeff)[static_cast<size_t>(p)] -= c1 * e_a(p) / (SP * cfg.tau_a);
      }
      if (term2) {
        for (int r : sets.R) (*coeff)[static_cast<size_t>(r)] += c2 * e_c(r) / (SQc * cfg.tau_c);
        for (int q : sets.Q) {
          (*coeff)[static_cast<size_t>(q)] -= c2 * T2 * e_c(q) / (SQc * cfg.tau_c);
        }
      }
    }
  }
  return out;
}

}  // namespace

AnchorLoss anchor_loss(const std::vector<double>& anchor, const AnchorSets& sets,
                       const std::vector<RepRecord>& pool, const ContrastiveConfig& cfg) {
  cfg.validate();
  std::vector<double> sims(pool.size(), 0.0);
  auto needed = [&](int j) {
    return std::find(sets.P.begin(), sets.P.end(), j) != sets.P.end() ||
           std::find(sets.Q.begin(), sets.Q.end(), j) != sets.Q.end();
  };
  for (size_t j = 0; j < pool.size(); ++j) {
    if (needed(static_cast<int>(j))) sims[j] = cosine_or_dot(anchor, pool[j].rep, cfg.similarity);
  }
  AnchorEval ev = eval_anchor(sims, sets, cfg, nullptr);
  if (!std::isfinite(ev.value)) throw NumericError("anchor_loss: non-finite loss");
  return {ev.value, ev.skipped};
}

namespace {

struct BatchPayload {
  int B = 0, k = 0, w = 0, n_live = 0, n_pool = 0;
  Similarity similarity = Similarity::cosine;
  std::vector<int> view_ids;         // one per case
  std::vector<double> rows;          // n_pool x w, normalized under cosine
  std::vector<double> norms;         // n_pool (cosine only)
  std::vector<double> sims;          // n_live x n_pool
  std::vector<double> coeff;         // n_live x n_pool
};

}  // namespace

Var batch_loss(Tape& tape, const std::vector<Var>& views,
               const std::vector<std::vector<int8_t>>& outcomes, const MemoryBank& bank,
               const ContrastiveConfig& cfg, Task task) {
  cfg.validate();
  if (views.empty()) throw ContractError("contrastive batch_loss: empty batch");
  if (views.size() != outcomes.size()) {
    throw DimensionError("contrastive batch_loss: " + std::to_string(views.size()) + " views vs " +
                         std::to_string(outcomes.size()) + " outcome vectors");
  }
  const auto& shape0 = tape.shape(views[0]);
  if (shape0.size() != 2) throw DimensionError("contrastive batch_loss: views must be k x w");
  const int B = static_cast<int>(views.size());
  const int k = shape0[0], w = shape0[1];

  auto payload = std::make_shared<BatchPayload>();
  payload->B = B;
  payload->k = k;
  payload->w = w;
  payload->similarity = cfg.similarity;
  payload->n_live = B * k;

  std::vector<RepRecord> meta;  // rep left empty; rows live in payload->rows
  meta.reserve(static_cast<size_t>(B) * k);
  std::vector<double> raw;
  raw.reserve(static_cast<size_t>(B) * k * w);

  bool needs_grad = false;
  for (int b = 0; b < B; ++b) {
    if (views[static_cast<size_t>(b)].tape != &tape) {
      throw ContractError("contrastive batch_loss: view from a different tape");
    }
    if (tape.shape(views[static_cast<size_t>(b)]) != shape0) {
      throw DimensionError("contrastive batch_loss: view shapes differ across the batch");
    }
    if (outcomes[static_cast<size_t>(b)].size() != static_cast<size_t>(k)) {
      throw DimensionError("contrastive batch_loss: outcome vector length != k");
    }
    needs_grad = needs_grad || tape.node(views[static_cast<size_t>(b)].id).needs_grad;
    payload->view_ids.push_back(views[static_cast<size_t>(b)].id);
    const auto& vals = tape.value(views[static_cast<size_t>(b)]);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < w; ++j) {
        const double v = vals[static_cast<size_t>(i) * w + j];
        if (!std::isfinite(v)) {
          throw NumericError("contrastive batch_loss: non-finite representation at case " +
                             std::to_string(b) + " article " + std::to_string(i));
        }
        raw.push_back(v);
      }
      RepRecord r;
      r.article = i;
      r.outcome = outcomes[static_cast<size_t>(b)][static_cast<size_t>(i)];
      r.task = task;
      r.case_ordinal = b;
      meta.push_back(std::move(r));
    }
  }

  // Bank snapshot appended after the live rows, in deterministic key order.
  for (int article = 0; article < k; ++article) {
    for (int outcome : {0, 1}) {
      for (const auto& rep : bank.entries(task, article, outcome)) {
        if (static_cast<int>(rep.size()) != w) {
          throw DimensionError("contrastive batch_loss: bank entry width " +
                               std::to_string(rep.size()) + " != view width " + std::to_string(w));
        }
        raw.insert(raw.end(), rep.begin(), rep.end());
        RepRecord r;
        r.article = article;
        r.outcome = outcome;
        r.task = task;
        r.case_ordinal = -1;
        meta.push_back(std::move(r));
      }
    }
  }

  const int n_live = payload->n_live;
  const int n_pool = static_cast<int>(meta.size());
  payload->n_pool = n_pool;

  // Rows used for similarity: l2-normalized under cosine (zero rows stay
  // zero, matching l2_normalize), raw under dot.
  payload->rows = std::move(raw);
  if (cfg.similarity == Similarity::cosine) {
    payload->norms.assign(static_cast<size_t>(n_pool), 0.0);
    bool warned = false;
    for (int p = 0; p < n_pool; ++p) {
      double* rp = payload->rows.data() + static_cast<size_t>(p) * w;
      double sq = 0.0;
      for (int j = 0; j < w; ++j) sq += rp[j] * rp[j];
      const double nrm = std::sqrt(sq);
      payload->norms[static_cast<size_t>(p)] = nrm;
      if (nrm == 0.0) {
        if (!warned && p < n_live) {
          warn_to_stderr("contrastive batch_loss: zero-norm live representation");
          warned = true;
        }
        continue;
      }
      for (int j = 0; j < w; ++j) rp[j] /= nrm;
    }
  }

  // Similarities of every live anchor against the whole pool.
  payload->sims.assign(static_cast<size_t>(n_live) * n_pool, 0.0);
  for (int a = 0; a < n_live; ++a) {
    const double* ra = payload->rows.data() + static_cast<size_t>(a) * w;
    for (int p = 0; p < n_pool; ++p) {
      const double* rp = payload->rows.data() + static_cast<size_t>(p) * w;
      double dot = 0.0;
      for (int j = 0; j < w; ++j) dot += ra[j] * rp[j];
      payload->sims[static_cast<size_t>(a) * n_pool + p] = dot;
    }
  }

  payload->coeff.assign(static_cast<size_t>(n_live) * n_pool, 0.0);
  double total = 0.0;
  std::vector<double> sim_row(static_cast<size_t>(n_pool));
  std::vector<double> coeff_row;
  for (int a = 0; a < n_live; ++a) {
    // Pool for this anchor: everything except the anchor itself.
    std::vector<RepRecord> others;  // metadata only
    others.reserve(static_cast<size_t>(n_pool) - 1);
    sim_row.assign(static_cast<size_t>(n_pool) - 1, 0.0);
    int out_idx = 0;
    for (int p = 0; p < n_pool; ++p) {
      if (p == a) continue;
      others.push_back(meta[static_cast<size_t>(p)]);
      sim_row[static_cast<size_t>(out_idx++)] = payload->sims[static_cast<size_t>(a) * n_pool + p];
    }
    const AnchorSets sets = build_sets(meta[static_cast<size_t>(a)], others, cfg.p_definition);
    const AnchorEval ev = eval_anchor(sim_row, sets, cfg, &coeff_row);
    if (!std::isfinite(ev.value)) {
      throw NumericError("contrastive batch_loss: non-finite anchor loss at case " +
                         std::to_string(a / k) + " article " + std::to_string(a % k));
    }
    total += ev.value;
    // re-inflate the compacted coefficient row (anchor column back in place)
    out_idx = 0;
    for (int p = 0; p < n_pool; ++p) {
      if (p == a) continue;
      payload->coeff[static_cast<size_t>(a) * n_pool + p] = coeff_row[static_cast<size_t>(out_idx++)];
    }
  }
  const double mean = total / static_cast<double>(n_live);

  const int id = tape.add_node({1}, {mean}, needs_grad, nullptr);
  if (needs_grad) {
    tape.node(id).backward = [id, payload](Tape& t) {
      const double g0 = t.node(id).grad[0] / static_cast<double>(payload->n_live);
      const int n_live = payload->n_live, n_pool = payload->n_pool, w = payload->w, k = payload->k;
      const auto& rows = payload->rows;
      const auto& coeff = payload->coeff;
      const auto& sims = payload->sims;

      std::vector<double> grad_row(static_cast<size_t>(w));
      for (int a = 0; a < n_live; ++a) {
        const int vid = payload->view_ids[static_cast<size_t>(a / k)];
        if (!t.node(vid).needs_grad) continue;
        std::fill(grad_row.begin(), grad_row.end(), 0.0);

        if (payload->similarity == Similarity::cosine) {
          const double norm_a = payload->norms[static_cast<size_t>(a)];
          if (norm_a == 0.0) continue;  // degenerate rows get no gradient
          // d s(a,p) / d a = (p_hat - s * a_hat) / |a|; row a acts both as
          // the anchor of row a and as a pool member of every other anchor.
          double diag = 0.0;
          for (int p = 0; p < n_pool; ++p) {
            const double c = coeff[static_cast<size_t>(a) * n_pool + p];
            if (c == 0.0) continue;
            const double* rp = rows.data() + static_cast<size_t>(p) * w;
            for (int j = 0; j < w; ++j) grad_row[static_cast<size_t>(j)] += c * rp[j];
            diag += c * sims[static_cast<size_t>(a) * n_pool + p];
          }
          for (int b = 0; b < n_live; ++b) {
            const double c = coeff[static_cast<size_t>(b) * n_pool + a];
            if (c == 0.0) continue;
            const double* rb = rows.data() + static_cast<size_t>(b) * w;
            for (int j = 0; j < w; ++j) grad_row[static_cast<size_t>(j)] += c * rb[j];
            diag += c * sims[static_cast<size_t>(b) * n_pool + a];
          }
          const double* ra = rows.data() + static_cast<size_t>(a) * w;
          for (int j = 0; j < w; ++j) {
            grad_row[static_cast<size_t>(j)] = (grad_row[static_cast<size_t>(j)] - diag * ra[j]) / norm_a;
          }
        } else {
          // dot similarity: d s(a,p)/d a = p
          for (int p = 0; p < n_pool; ++p) {
            const double c = coeff[static_cast<size_t>(a) * n_pool + p];
            if (c == 0.0) continue;
            const double* rp = rows.data() + static_cast<size_t>(p) * w;
            for (int j = 0; j < w; ++j) grad_row[static_cast<size_t>(j)] += c * rp[j];
          }
          for (int b = 0; b < n_live; ++b) {
            const double c = coeff[static_cast<size_t>(b) * n_pool + a];
            if (c == 0.0) continue;
            const double* rb = rows.data() + static_cast<size_t>(b) * w;
            for (int j = 0; j < w; ++j) grad_row[static_cast<size_t>(j)] += c * rb[j];
          }
        }

        auto& pg = t.grad_buf(vid);
        const int row_in_view = a % k;
        for (int j = 0; j < w; ++j) {
          pg[static_cast<size_t>(row_in_view) * w + j] += g0 * grad_row[static_cast<size_t>(j)];
        }
      }
    };
  }
  return Var{&tape, id};
}

}  // namespace coc
