#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "coc/corpus.hpp"
#include "coc/tape.hpp"
#include "coc/tensor.hpp"

namespace coc {

/// What the Task A branch sees per article beyond its own view c_i:
/// the Task B interaction row c'_bi, its logit o'_bi, both, neither, or a
/// gold allegation bit. Missing pieces are zero-filled so the Task A input
/// width never changes.
enum class DependencyMode {
  full,               // [c_i, c'_bi, o'_bi]
  features_only,      // [c_i, c'_bi, 0]
  labels_only,        // [c_i, 0,     o'_bi]
  none,               // [c_i, 0,     0]
  gold_labels,        // [c_i, 0,     g_i]
  gold_labels_plus_features,  // [c_i, c'_bi, g_i]
};

std::string to_string(DependencyMode m);
DependencyMode dependency_mode_from_string(const std::string& s);  // ConfigError on unknown

struct NetworkConfig {
  int k = 10;
  int d_e = 64;
  int d_att_tok = 300;  // token attention context width
  int d_gru = 200;      // per direction; bidirectional state is 2*d_gru
  int d_att_sent = 200;
  int heads = 4;
  int d_cls = 100;
  double dropout = 0.1;
  DependencyMode dependency_mode = DependencyMode::full;
  // Off: one shared sentence attention, so every article sees the same case
  // view. The plain multi-task baseline runs this way.
  bool article_attention = true;
  // The dependency slot carries the raw Task B logit by default; this switch
  // feeds sigmoid(logit) instead.
  bool dependency_uses_probability = false;

  int rep_width_b() const { return 2 * d_gru; }
  int rep_width_a() const { return 4 * d_gru + 1; }
  void validate() const;  // ConfigError on violation
};

/// Parameter names and shapes, fully determined by the config. Also the
/// creation order for seeded initialization.
std::vector<std::pair<std::string, std::vector<int>>> expected_param_shapes(
    const NetworkConfig& cfg);

/// Uniform(-1/sqrt(fan), +1/sqrt(fan)) per tensor, fan = input width for
/// matrices and vector length for the rest. Draw order follows
/// expected_param_shapes, so (config, seed) pins every value.
ParamStore init_params(const NetworkConfig& cfg, uint64_t seed);

/// Checkpoint plus a <path>.config.json sidecar; loading cross-checks every
/// tensor shape against the sidecar config.
void save_network(const ParamStore& params, const NetworkConfig& cfg, const std::string& path);
std::pair<ParamStore, NetworkConfig> load_network(const std::string& path);

struct AttentionResult {
  Var pooled;   // 1 x d
  Var weights;  // m x 1, nonnegative, sums to 1
};

/// tanh(X W + b) scored against the context vector u, softmax over rows,
/// convex combination of the rows of X.
AttentionResult attention_pool(Var X, Var W, Var b, Var u);

/// One GRU direction over the rows of F (already in scan order); returns the
/// m hidden states stacked in scan order.
Var gru_direction(Var F, Var Wz, Var Uz, Var bz, Var Wr, Var Ur, Var br, Var Wh, Var Uh, Var bh);

/// Multi-head self-attention over the rows of C with residual: C + MHSA(C).
/// Per-head projections are w x d_h with d_h = ceil(w / heads); the output
/// projection maps heads*d_h back to w, so any row width works.
Var interaction(Var C, const std::vector<std::array<Var, 3>>& head_qkv, Var Wo);

/// linear(d_cls) -> tanh -> linear(1) on a 1 x w row; returns the 1 x 1 logit.
Var classify_row(Var x, Var W1, Var b1, Var W2, Var b2, double dropout_rate, bool train,
                 std::mt19937_64* rng);

struct ForwardOutput {
  Var logits_b;  // k x 1 allegation logits
  Var logits_a;  // k x 1 violation logits
  Var views_b;   // k x 2*d_gru interaction-aware Task B rows
  Var views_a;   // k x (4*d_gru+1) interaction-aware Task A rows
};

/// Binds every parameter as a tape leaf once, then runs cases through the
/// pipeline: token attention -> BiGRU -> per-article sentence attention ->
/// Task B interaction + heads -> dependency assembly -> Task A interaction +
/// heads. One NetworkRun per tape.
class NetworkRun {
 public:
  NetworkRun(Tape& tape, ParamStore& params, const NetworkConfig& cfg);

  /// gold_alleged must be present exactly when the mode is a gold mode.
  /// train=true applies dropout and needs rng.
  ForwardOutput forward_case(const CaseDocument& doc, bool train = false,
                             std::mt19937_64* rng = nullptr,
                             const std::vector<int8_t>* gold_alleged = nullptr);

  const NetworkConfig& config() const { return cfg_; }

 private:
  Var p(const std::string& name) const;

  Tape& tape_;
  NetworkConfig cfg_;
  std::map<std::string, Var> leaves_;
};

}  // namespace coc
