#pragma once

// Brute-force scalar oracles shared by the unit tests and the acceptance
// runner. Written independently of the library internals: plain loops, no
// shared helpers, so disagreement points at the implementation.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "coc/contrastive.hpp"
#include "coc/metrics.hpp"
#include "coc/rng.hpp"
#include "coc/tape.hpp"
#include "coc/tensor.hpp"

namespace testo {

// ---- contrastive: direct per-anchor summation ----

struct ORow {
  std::vector<double> v;
  int article = 0;
  int outcome = 0;
  int ordinal = -1;  // -1 marks a bank row
};

inline double oracle_sim(const ORow& a, const ORow& b, coc::Similarity sim) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  if (sim == coc::Similarity::dot) return dot;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double oracle_batch_loss(const std::vector<ORow>& rows, int n_live,
                                const coc::ContrastiveConfig& cfg) {
  double total = 0.0;
  for (int a = 0; a < n_live; ++a) {
    std::vector<int> P, Q, R;
    for (int p = 0; p < static_cast<int>(rows.size()); ++p) {
      if (p == a) continue;
      const bool same_article = rows[p].article == rows[a].article;
      const bool same_case = rows[p].ordinal >= 0 && rows[p].ordinal == rows[a].ordinal;
      if (cfg.p_definition == coc::PDefinition::all_but_anchor) {
        P.push_back(p);
      } else if (!same_article && !same_case) {
        P.push_back(p);
      }
      if (same_article) {
        Q.push_back(p);
        if (rows[p].outcome == rows[a].outcome) R.push_back(p);
      }
    }
    if (Q.empty()) continue;
    double SP = 0.0, SQa = 0.0, SQc = 0.0, SR = 0.0;
    for (int p : P) SP += std::exp(oracle_sim(rows[a], rows[p], cfg.similarity) / cfg.tau_a);
    for (int q : Q) {
      SQa += std::exp(oracle_sim(rows[a], rows[q], cfg.similarity) / cfg.tau_a);
      SQc += std::exp(oracle_sim(rows[a], rows[q], cfg.similarity) / cfg.tau_c);
    }
    for (int r : R) SR += std::exp(oracle_sim(rows[a], rows[r], cfg.similarity) / cfg.tau_c);
    const bool t1 = cfg.include_article_term && !P.empty();
    const bool t2 = cfg.include_outcome_term && !R.empty();
    double l = 0.0;
    if (cfg.formulation == coc::Formulation::negative_log_sum) {
      if (t1) l -= std::log(SQa / SP);
      if (t2) l -= cfg.alpha * std::log(SR / SQc);
    } else {
      if (t1 && t2) {
        l = std::log(SQa / SP) * cfg.alpha * (SR / SQc);
      } else if (t1) {
        l = std::log(SQa / SP);
      } else if (t2) {
        l = cfg.alpha * (SR / SQc);
      }
    }
    total += l;
  }
  return total / static_cast<double>(n_live);
}

// Random batch setup shared by the oracle-equivalence and gradient tests.
struct RandomBatch {
  int B = 0, k = 0, w = 0;
  std::vector<coc::Tensor> leaves;               // one k x w tensor per case
  std::vector<std::vector<int8_t>> outcomes;     // [B][k]
  coc::MemoryBank bank{32};
  std::vector<ORow> rows;                        // live rows then bank rows
  int n_live = 0;
};

inline RandomBatch make_random_batch(std::mt19937_64& g, coc::Task task, bool with_bank) {
  RandomBatch rb;
  rb.B = coc::uniform_int(g, 1, 8);
  rb.k = coc::uniform_int(g, 1, 4);
  rb.w = coc::uniform_int(g, 1, 16);
  for (int b = 0; b < rb.B; ++b) {
    coc::Tensor t = coc::Tensor::zeros({rb.k, rb.w});
    for (double& v : t.values) v = coc::uniform_range(g, -0.8, 0.8);
    t.set_requires_grad(true);
    rb.leaves.push_back(std::move(t));
    std::vector<int8_t> oc;
    for (int i = 0; i < rb.k; ++i) {
      oc.push_back(static_cast<int8_t>(coc::uniform01(g) < 0.5 ? 0 : 1));
    }
    rb.outcomes.push_back(std::move(oc));
  }
  for (int b = 0; b < rb.B; ++b) {
    for (int i = 0; i < rb.k; ++i) {
      ORow r;
      r.v.assign(rb.leaves[b].values.begin() + static_cast<size_t>(i) * rb.w,
                 rb.leaves[b].values.begin() + static_cast<size_t>(i + 1) * rb.w);
      r.article = i;
      r.outcome = rb.outcomes[b][i];
      r.ordinal = b;
      rb.rows.push_back(std::move(r));
    }
  }
  rb.n_live = rb.B * rb.k;
  if (with_bank) {
    for (int i = 0; i < rb.k; ++i) {
      for (int oc = 0; oc < 2; ++oc) {
        const int n = coc::uniform_int(g, 0, 3);
        for (int e = 0; e < n; ++e) {
          std::vector<double> v;
          for (int j = 0; j < rb.w; ++j) v.push_back(coc::uniform_range(g, -0.8, 0.8));
          rb.bank.push(task, i, oc, v);
        }
      }
    }
    // mirror the bank into oracle rows in the same deterministic order
    for (int i = 0; i < rb.k; ++i) {
      for (int oc = 0; oc < 2; ++oc) {
        for (const auto& v : rb.bank.entries(task, i, oc)) {
          ORow r;
          r.v = v;
          r.article = i;
          r.outcome = oc;
          r.ordinal = -1;
          rb.rows.push_back(std::move(r));
        }
      }
    }
  }
  return rb;
}

inline double run_batch_loss(RandomBatch& rb, const coc::ContrastiveConfig& cfg, coc::Task task) {
  coc::Tape tape;
  std::vector<coc::Var> views;
  for (auto& t : rb.leaves) views.push_back(tape.leaf(t));
  return tape.scalar(coc::batch_loss(tape, views, rb.outcomes, rb.bank, cfg, task));
}

// ---- metrics: explicit per-pair counting ----

struct OCounts {
  long tp = 0, fp = 0, fn = 0;
};

inline double of1(const OCounts& c) {
  if (2 * c.tp + c.fp + c.fn == 0) return 0.0;
  return 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

inline double oracle_micro(const coc::BinMatrix& p, const coc::BinMatrix& g) {
  OCounts c;
  for (size_t i = 0; i < p.size(); ++i) {
    for (size_t j = 0; j < p[i].size(); ++j) {
      if (p[i][j] == 1 && g[i][j] == 1) ++c.tp;
      if (p[i][j] == 1 && g[i][j] == 0) ++c.fp;
      if (p[i][j] == 0 && g[i][j] == 1) ++c.fn;
    }
  }
  return of1(c);
}

inline double oracle_macro(const coc::BinMatrix& p, const coc::BinMatrix& g) {
  if (p.empty()) return 0.0;
  const size_t k = p[0].size();
  double sum = 0.0;
  for (size_t j = 0; j < k; ++j) {
    OCounts c;
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i][j] == 1 && g[i][j] == 1) ++c.tp;
      if (p[i][j] == 1 && g[i][j] == 0) ++c.fp;
      if (p[i][j] == 0 && g[i][j] == 1) ++c.fn;
    }
    sum += of1(c);
  }
  return sum / static_cast<double>(k);
}

inline double oracle_hard(const coc::BinMatrix& p, const coc::BinMatrix& ga,
                          const coc::BinMatrix& gb) {
  if (p.empty()) return 0.0;
  const size_t k = p[0].size();
  double sum = 0.0;
  int used = 0;
  for (size_t j = 0; j < k; ++j) {
    OCounts c;
    long seen = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      if (gb[i][j] != 1) continue;
      ++seen;
      if (p[i][j] == 1 && ga[i][j] == 1) ++c.tp;
      if (p[i][j] == 1 && ga[i][j] == 0) ++c.fp;
      if (p[i][j] == 0 && ga[i][j] == 1) ++c.fn;
    }
    if (seen == 0) continue;
    sum += of1(c);
    ++used;
  }
  return used == 0 ? 0.0 : sum / used;
}

inline coc::BinMatrix random_matrix(std::mt19937_64& g, int n, int k, double p1) {
  coc::BinMatrix m(static_cast<size_t>(n));
  for (auto& row : m) {
    for (int j = 0; j < k; ++j) {
      row.push_back(static_cast<int8_t>(coc::uniform01(g) < p1 ? 1 : 0));
    }
  }
  return m;
}

}  // namespace testo
