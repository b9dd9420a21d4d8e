#include <cmath>
#include <cstdio>
#include <random>

#include "coc/corpus.hpp"
#include "coc/rng.hpp"

namespace coc {

void SyntheticConfig::validate() const {
  if (k < 2) throw ConfigError("synthetic: k must be >= 2, got " + std::to_string(k));
  if (d_e < 1) throw ConfigError("synthetic: d_e must be >= 1");
  if (cases < 0) throw ConfigError("synthetic: cases must be >= 0");
  if (sentences_min < 1 || sentences_max < sentences_min) {
    throw ConfigError("synthetic: need 1 <= sentences_min <= sentences_max");
  }
  if (tokens_min < 1 || tokens_max < tokens_min) {
    throw ConfigError("synthetic: need 1 <= tokens_min <= tokens_max");
  }
  for (const auto* vec : {&prevalence, &violation_given_allegation}) {
    if (vec->empty() || (vec->size() != 1 && vec->size() != static_cast<size_t>(k))) {
      throw ConfigError("synthetic: probability vectors need size 1 or k");
    }
    for (double p : *vec) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic: probabilities must lie in [0,1]");
    }
  }
  if (!(signal_to_noise > 0.0)) throw ConfigError("synthetic: signal_to_noise must be positive");
  if (!(signal_token_fraction > 0.0 && signal_token_fraction <= 1.0)) {
    throw ConfigError("synthetic: signal_token_fraction must lie in (0,1]");
  }
  if (!(violation_signal_scale >= 0.0)) {
    throw ConfigError("synthetic: violation_signal_scale must be >= 0");
  }
}

namespace {

std::vector<double> broadcast(const std::vector<double>& v, int k) {
  if (v.size() == static_cast<size_t>(k)) return v;
  return std::vector<double>(static_cast<size_t>(k), v[0]);
}

std::vector<double> unit_direction(std::mt19937_64& g, int d) {
  std::vector<double> v(static_cast<size_t>(d));
  double norm = 0.0;
  for (double& x : v) {
    x = gaussian(g);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;  // unreachable in practice, but keeps the unit-vector contract
  } else {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<std::array<std::vector<double>, 2>> draw_signatures(std::mt19937_64& g, int k, int d) {
  std::vector<std::array<std::vector<double>, 2>> sigs(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    sigs[static_cast<size_t>(i)][0] = unit_direction(g, d);
    sigs[static_cast<size_t>(i)][1] = unit_direction(g, d);
  }
  return sigs;
}

}  // namespace

std::vector<double> SyntheticConfig::prevalence_vec() const { return broadcast(prevalence, k); }
std::vector<double> SyntheticConfig::violation_vec() const {
  return broadcast(violation_given_allegation, k);
}

std::vector<std::array<std::vector<double>, 2>> synthetic_signatures(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 g(config.seed);
  return draw_signatures(g, config.k, config.d_e);
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 g(config.seed);
  const auto sigs = draw_signatures(g, config.k, config.d_e);
  const auto prev = config.prevalence_vec();
  const auto cond = config.violation_vec();
  const double noise_sigma = 1.0 / config.signal_to_noise;
  const int64_t start_day = parse_civil_date("2000-01-01");

  Corpus corpus;
  corpus.k = config.k;
  corpus.d_e = config.d_e;
  corpus.cases.reserve(static_cast<size_t>(config.cases));

  for (int c = 0; c < config.cases; ++c) {
    CaseDocument doc;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06d", c);
    doc.case_id = id;
    doc.date = civil_date_string(start_day + c);  // strictly increasing with index

    doc.labels.alleged.assign(static_cast<size_t>(config.k), 0);
    doc.labels.violated.assign(static_cast<size_t>(config.k), 0);
    for (int i = 0; i < config.k; ++i) {
      if (uniform01(g) < prev[static_cast<size_t>(i)]) {
        doc.labels.alleged[static_cast<size_t>(i)] = 1;
        if (uniform01(g) < cond[static_cast<size_t>(i)]) {
          doc.labels.violated[static_cast<size_t>(i)] = 1;
        }
      }
    }

    const int m = uniform_int(g, config.sentences_min, config.sentences_max);
    doc.sentences.reserve(static_cast<size_t>(m));
    for (int s = 0; s < m; ++s) {
      Sentence sent;
      sent.n = uniform_int(g, config.tokens_min, config.tokens_max);
      sent.emb.assign(static_cast<size_t>(sent.n) * config.d_e, 0.0);
      for (int t = 0; t < sent.n; ++t) {
        double* tok = sent.emb.data() + static_cast<size_t>(t) * config.d_e;
        for (int j = 0; j < config.d_e; ++j) tok[j] = noise_sigma * gaussian(g);
        for (int i = 0; i < config.k; ++i) {
          if (!doc.labels.alleged[static_cast<size_t>(i)]) continue;
          if (uniform01(g) < config.signal_token_fraction) {
            const auto& a = sigs[static_cast<size_t>(i)][0];
            for (int j = 0; j < config.d_e; ++j) tok[j] += a[static_cast<size_t>(j)];
            // violation evidence rides on the allegation-signal tokens, so
            // finding the latter is a prerequisite for reading the former
            if (doc.labels.violated[static_cast<size_t>(i)]) {
              const auto& v = sigs[static_cast<size_t>(i)][1];
              for (int j = 0; j < config.d_e; ++j) {
                tok[j] += config.violation_signal_scale * v[static_cast<size_t>(j)];
              }
            }
          }
        }
      }
      doc.sentences.push_back(std::move(sent));
    }
    corpus.cases.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace coc
