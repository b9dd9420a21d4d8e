#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "coc/tape.hpp"

namespace coc {

enum class Task { A, B };
std::string to_string(Task t);

enum class Similarity { cosine, dot };
enum class Formulation { negative_log_sum, paper_literal_product };

std::string to_string(Similarity s);
Similarity similarity_from_string(const std::string& s);  // ConfigError on unknown
std::string to_string(Formulation f);
Formulation formulation_from_string(const std::string& s);

/// Which pool members count as negatives for the article-level denominator.
/// all_but_anchor: every pool member. printed_conjunction: only members that
/// differ from the anchor in both case and article (under which Q is no
/// longer a subset of P).
enum class PDefinition { all_but_anchor, printed_conjunction };

std::string to_string(PDefinition p);
PDefinition p_definition_from_string(const std::string& s);

struct ContrastiveConfig {
  double tau_a = 0.1;  // article-level temperature
  double tau_c = 0.2;  // outcome-level temperature
  double alpha = 0.5;  // outcome-term weight
  Similarity similarity = Similarity::cosine;
  Formulation formulation = Formulation::negative_log_sum;
  PDefinition p_definition = PDefinition::all_but_anchor;
  // Ablation switches: dropped terms contribute 0 (negative_log_sum) or a
  // factor of 1 (paper_literal_product).
  bool include_article_term = true;
  bool include_outcome_term = true;

  void validate() const;  // ConfigError

  /// All (tau_a, tau_c) pairs with tau_a < tau_c from the search values,
  /// in deterministic order. 15 pairs.
  static std::vector<std::pair<double, double>> temperature_grid();
};

/// A detached representation with its contrast metadata. case_ordinal is the
/// batch position for live records and -1 for bank entries (bank entries
/// never share a "case" with a live anchor).
struct RepRecord {
  std::vector<double> rep;
  int article = 0;
  int outcome = 0;  // 0/1
  Task task = Task::B;
  int case_ordinal = -1;
};

/// FIFO store of detached representations keyed by (task, article, outcome).
/// Structurally gradient-free: it only ever holds plain value vectors.
class MemoryBank {
 public:
  explicit MemoryBank(int capacity = 32);

  void push(Task task, int article, int outcome, std::vector<double> rep);
  const std::deque<std::vector<double>>& entries(Task task, int article, int outcome) const;
  size_t total_entries() const;
  int capacity() const { return capacity_; }
  void clear();

 private:
  int capacity_;
  std::map<std::tuple<int, int, int>, std::deque<std::vector<double>>> slots_;
};

/// Appends detached records to the bank in the given order.
void bank_update(MemoryBank& bank, const std::vector<RepRecord>& records);

/// Flattens per-case view matrices (k x w) into detached records in batch
/// order: case by case, article by article. outcomes[b][i] labels case b,
/// article i.
std::vector<RepRecord> detach_records(const Tape& tape, const std::vector<Var>& views,
                                      const std::vector<std::vector<int8_t>>& outcomes, Task task);

struct AnchorSets {
  std::vector<int> P;  // article-level negatives
  std::vector<int> Q;  // same article as the anchor
  std::vector<int> R;  // same article and outcome
};

/// Membership sets for one anchor over an explicit pool (which must not
/// contain the anchor itself).
AnchorSets build_sets(const RepRecord& anchor, const std::vector<RepRecord>& pool,
                      PDefinition p_definition = PDefinition::all_but_anchor);

/// Scalar loss for one anchor against a fixed pool, no gradients. Anchors
/// with empty Q are skipped (returns 0 with skipped=true); empty R drops the
/// outcome term.
struct AnchorLoss {
  double value = 0.0;
  bool skipped = false;
};
AnchorLoss anchor_loss(const std::vector<double>& anchor, const AnchorSets& sets,
                       const std::vector<RepRecord>& pool, const ContrastiveConfig& cfg);

/// The batch-level hierarchical contrastive loss as one fused tape node:
/// mean over all live anchors (cases x articles) of anchor_loss against the
/// pool of all other live rows plus the bank snapshot for the task. Skipped
/// anchors count in the mean's denominator. Gradients flow into live views
/// only; bank entries are constants.
Var batch_loss(Tape& tape, const std::vector<Var>& views,
               const std::vector<std::vector<int8_t>>& outcomes, const MemoryBank& bank,
               const ContrastiveConfig& cfg, Task task);

}  // namespace coc
