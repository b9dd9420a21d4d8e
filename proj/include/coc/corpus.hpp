#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coc/errors.hpp"

namespace coc {

/// One sentence: n token embeddings of width d_e, row-major.
struct Sentence {
  int n = 0;
  std::vector<double> emb;
};

struct LabelSet {
  std::vector<int8_t> alleged;   // Task B target
  std::vector<int8_t> violated;  // Task A target
};

struct CaseDocument {
  std::string case_id;
  std::string date;  // ISO YYYY-MM-DD; lexicographic order == chronological order
  std::vector<Sentence> sentences;
  LabelSet labels;
};

struct Corpus {
  std::vector<CaseDocument> cases;
  int k = 0;    // number of modeled articles
  int d_e = 0;  // embedding width
};

/// Parses one case per line. Errors carry the 1-based line number. A case
/// whose violated set is not contained in its alleged set is kept but
/// reported through `warn` (courts normally only rule on alleged articles,
/// but ingested data may disagree).
Corpus load_jsonl(const std::string& path, WarningSink warn = warn_to_stderr);

/// Inverse of load_jsonl: load(write(c)) == c, values bit-equal.
void write_jsonl(const Corpus& corpus, const std::string& path);

struct SplitCorpora {
  Corpus train, dev, test;
};

/// Sorts by (date, case_id) ascending, then cuts at floor(n*frac) boundaries.
SplitCorpora chronological_split(const Corpus& corpus, double train_frac, double dev_frac);

/// Days since 1970-01-01 <-> ISO date string. Used for synthetic date
/// generation and date validation on ingest.
std::string civil_date_string(int64_t days_since_epoch);
int64_t parse_civil_date(const std::string& iso);  // IoError on malformed input

struct SyntheticConfig {
  int k = 10;
  int d_e = 64;
  int cases = 100;
  int sentences_min = 3;
  int sentences_max = 6;
  int tokens_min = 4;
  int tokens_max = 8;
  // Per-article; size k, or size 1 to broadcast one value to every article.
  std::vector<double> prevalence = {0.3};
  std::vector<double> violation_given_allegation = {0.5};
  double signal_to_noise = 1.0;         // noise sigma = 1 / snr
  double signal_token_fraction = 0.5;   // chance a token carries each active signal
  double violation_signal_scale = 1.0;  // violation signature amplitude
  uint64_t seed = 0;

  void validate() const;  // ConfigError on violation
  std::vector<double> prevalence_vec() const;
  std::vector<double> violation_vec() const;
};

/// Pure function of the config: identical configs give bit-identical corpora.
/// Each article gets two fixed unit signature directions; alleging cases add
/// the allegation signature to a random subset of their tokens, violating
/// cases additionally add the violation signature on those same tokens (the
/// violation evidence rides on the allegation evidence). Everything else is
/// isotropic Gaussian noise. violated implies alleged by construction.
Corpus generate_synthetic(const SyntheticConfig& config);

/// The signature directions the generator plants, re-derived from the seed:
/// [i][0] = allegation direction, [i][1] = violation direction for article i.
std::vector<std::array<std::vector<double>, 2>> synthetic_signatures(const SyntheticConfig& config);

}  // namespace coc
