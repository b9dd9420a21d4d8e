#include "coc/network.hpp"

#include <cmath>

#include "coc/config_io.hpp"
#include "coc/rng.hpp"
#include "json.hpp"

namespace coc {

std::string to_string(DependencyMode m) {
  switch (m) {
    case DependencyMode::full: return "full";
    case DependencyMode::features_only: return "features_only";
    case DependencyMode::labels_only: return "labels_only";
    case DependencyMode::none: return "none";
    case DependencyMode::gold_labels: return "gold_labels";
    case DependencyMode::gold_labels_plus_features: return "gold_labels_plus_features";
  }
  throw ContractError("unreachable dependency mode");
}

DependencyMode dependency_mode_from_string(const std::string& s) {
  for (DependencyMode m :
       {DependencyMode::full, DependencyMode::features_only, DependencyMode::labels_only,
        DependencyMode::none, DependencyMode::gold_labels,
        DependencyMode::gold_labels_plus_features}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown dependency_mode '" + s + "'");
}

void NetworkConfig::validate() const {
  if (k < 1) throw ConfigError("network: k must be >= 1");
  for (int w : {d_e, d_att_tok, d_gru, d_att_sent, d_cls}) {
    if (w < 1) throw ConfigError("network: widths must be positive");
  }
  if (heads < 1) throw ConfigError("network: heads must be >= 1");
  if ((2 * d_gru) % heads != 0) {
    throw ConfigError("network: 2*d_gru (" + std::to_string(2 * d_gru) +
                      ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("network: dropout must lie in [0,1)");
}

namespace {

bool is_gold_mode(DependencyMode m) {
  return m == DependencyMode::gold_labels || m == DependencyMode::gold_labels_plus_features;
}

bool uses_feature_block(DependencyMode m) {
  return m == DependencyMode::full || m == DependencyMode::features_only ||
         m == DependencyMode::gold_labels_plus_features;
}

bool uses_logit_slot(DependencyMode m) {
  return m == DependencyMode::full || m == DependencyMode::labels_only;
}

int head_dim(int w, int heads) { return (w + heads - 1) / heads; }

void push_attention(std::vector<std::pair<std::string, std::vector<int>>>& out,
                    const std::string& prefix, int d_in, int d_att) {
  out.push_back({prefix + ".W", {d_in, d_att}});
  out.push_back({prefix + ".b", {d_att}});
  out.push_back({prefix + ".u", {d_att, 1}});
}

void push_gru(std::vector<std::pair<std::string, std::vector<int>>>& out,
              const std::string& prefix, int d_in, int d_h) {
  for (const char* gate : {"z", "r", "h"}) {
    out.push_back({prefix + ".W" + gate, {d_in, d_h}});
    out.push_back({prefix + ".U" + gate, {d_h, d_h}});
    out.push_back({prefix + ".b" + gate, {d_h}});
  }
}

void push_interaction(std::vector<std::pair<std::string, std::vector<int>>>& out,
                      const std::string& prefix, int w, int heads) {
  const int d_h = head_dim(w, heads);
  for (int h = 0; h < heads; ++h) {
    const std::string base = prefix + ".head" + std::to_string(h);
    out.push_back({base + ".Wq", {w, d_h}});
    out.push_back({base + ".Wk", {w, d_h}});
    out.push_back({base + ".Wv", {w, d_h}});
  }
  out.push_back({prefix + ".Wo", {heads * d_h, w}});
}

void push_heads(std::vector<std::pair<std::string, std::vector<int>>>& out,
                const std::string& prefix, int k, int w, int d_cls) {
  for (int i = 0; i < k; ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    out.push_back({base + ".W1", {w, d_cls}});
    out.push_back({base + ".b1", {d_cls}});
    out.push_back({base + ".W2", {d_cls, 1}});
    out.push_back({base + ".b2", {1}});
  }
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> expected_param_shapes(
    const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, std::vector<int>>> out;
  push_attention(out, "tok_att", cfg.d_e, cfg.d_att_tok);
  push_gru(out, "gru.fwd", cfg.d_e, cfg.d_gru);
  push_gru(out, "gru.bwd", cfg.d_e, cfg.d_gru);
  if (cfg.article_attention) {
    for (int i = 0; i < cfg.k; ++i) {
      push_attention(out, "sent_att." + std::to_string(i), cfg.rep_width_b(), cfg.d_att_sent);
    }
  } else {
    push_attention(out, "sent_att.shared", cfg.rep_width_b(), cfg.d_att_sent);
  }
  push_interaction(out, "inter_b", cfg.rep_width_b(), cfg.heads);
  push_interaction(out, "inter_a", cfg.rep_width_a(), cfg.heads);
  push_heads(out, "head_b", cfg.k, cfg.rep_width_b(), cfg.d_cls);
  push_heads(out, "head_a", cfg.k, cfg.rep_width_a(), cfg.d_cls);
  return out;
}

ParamStore init_params(const NetworkConfig& cfg, uint64_t seed) {
  std::mt19937_64 g(seed);
  ParamStore store;
  for (const auto& [name, shape] : expected_param_shapes(cfg)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.values) v = uniform_range(g, -bound, bound);
    t.set_requires_grad(true);
    store.add(name, std::move(t));
  }
  return store;
}

void save_network(const ParamStore& params, const NetworkConfig& cfg, const std::string& path) {
  save_checkpoint(params, path);
  write_network_config(cfg, path + ".config.json");
}

std::pair<ParamStore, NetworkConfig> load_network(const std::string& path) {
  NetworkConfig cfg = read_network_config(path + ".config.json");
  ParamStore store = load_checkpoint(path);
  const auto expected = expected_param_shapes(cfg);
  if (store.size() != expected.size()) {
    throw ConfigError("checkpoint " + path + " holds " + std::to_string(store.size()) +
                      " tensors but the config implies " + std::to_string(expected.size()));
  }
  for (const auto& [name, shape] : expected) {
    if (!store.contains(name)) {
      throw ConfigError("checkpoint " + path + " is missing parameter '" + name + "'");
    }
    if (store.get(name).shape != shape) {
      throw ConfigError("checkpoint " + path + ": parameter '" + name + "' has shape " +
                        shape_str(store.get(name).shape) + ", config implies " + shape_str(shape));
    }
  }
  return {std::move(store), cfg};
}

AttentionResult attention_pool(Var X, Var W, Var b, Var u) {
  Var U = tanh(add_rowwise(matmul(X, W), b));  // m x d_att
  Var scores = matmul(U, u);                   // m x 1
  Var alpha = softmax(scores, 0);
  Var pooled = matmul(transpose(alpha), X);  // 1 x d
  return {pooled, alpha};
}

Var gru_direction(Var F, Var Wz, Var Uz, Var bz, Var Wr, Var Ur, Var br, Var Wh, Var Uh, Var bh) {
  Tape& tp = *F.tape;
  const int m = tp.shape(F)[0];
  const int d_h = tp.shape(Wz)[1];
  // Input projections for the whole sequence in three GEMMs.
  Var Xz = add_rowwise(matmul(F, Wz), bz);
  Var Xr = add_rowwise(matmul(F, Wr), br);
  Var Xh = add_rowwise(matmul(F, Wh), bh);
  Var ones = tp.constant({1, d_h}, std::vector<double>(static_cast<size_t>(d_h), 1.0));
  Var h = tp.constant({1, d_h}, std::vector<double>(static_cast<size_t>(d_h), 0.0));
  std::vector<Var> states;
  states.reserve(static_cast<size_t>(m));
  for (int t = 0; t < m; ++t) {
    Var z = sigmoid(add(row(Xz, t), matmul(h, Uz)));
    Var r = sigmoid(add(row(Xr, t), matmul(h, Ur)));
    Var hc = tanh(add(row(Xh, t), matmul(mul(r, h), Uh)));
    h = add(mul(add(ones, scale(z, -1.0)), h), mul(z, hc));  // (1-z)*h + z*hc
    states.push_back(h);
  }
  return concat(states, 0);
}

Var interaction(Var C, const std::vector<std::array<Var, 3>>& head_qkv, Var Wo) {
  if (head_qkv.empty()) throw ContractError("interaction: no attention heads");
  Tape& tp = *C.tape;
  std::vector<Var> outs;
  outs.reserve(head_qkv.size());
  for (const auto& [wq, wk, wv] : head_qkv) {
    Var Q = matmul(C, wq);
    Var K = matmul(C, wk);
    Var V = matmul(C, wv);
    const int d_h = tp.shape(wq)[1];
    Var S = scale(matmul(Q, transpose(K)), 1.0 / std::sqrt(static_cast<double>(d_h)));
    Var A = softmax(S, 1);  // per-query distribution over articles
    outs.push_back(matmul(A, V));
  }
  return add(C, matmul(concat(outs, 1), Wo));
}

Var classify_row(Var x, Var W1, Var b1, Var W2, Var b2, double dropout_rate, bool train,
                 std::mt19937_64* rng) {
  Var h = tanh(add_rowwise(matmul(x, W1), b1));
  if (train && dropout_rate > 0.0) {
    if (rng == nullptr) throw ContractError("classify_row: training dropout needs an rng");
    h = dropout(h, dropout_rate, true, *rng);
  }
  return add_rowwise(matmul(h, W2), b2);
}

NetworkRun::NetworkRun(Tape& tape, ParamStore& params, const NetworkConfig& cfg)
    : tape_(tape), cfg_(cfg) {
  cfg_.validate();
  for (const auto& [name, shape] : expected_param_shapes(cfg_)) {
    Tensor& t = params.get(name);
    if (t.shape != shape) {
      throw ContractError("parameter '" + name + "' has shape " + shape_str(t.shape) +
                          ", config implies " + shape_str(shape));
    }
    leaves_.emplace(name, tape_.leaf(t));
  }
}

Var NetworkRun::p(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw ContractError("unbound parameter '" + name + "'");
  return it->second;
}

ForwardOutput NetworkRun::forward_case(const CaseDocument& doc, bool train, std::mt19937_64* rng,
                                       const std::vector<int8_t>* gold_alleged) {
  const bool gold = is_gold_mode(cfg_.dependency_mode);
  if (gold && gold_alleged == nullptr) {
    throw ContractError("dependency mode " + to_string(cfg_.dependency_mode) +
                        " needs gold allegation labels");
  }
  if (!gold && gold_alleged != nullptr) {
    throw ContractError("gold allegation labels passed outside a gold dependency mode");
  }
  if (gold && static_cast<int>(gold_alleged->size()) != cfg_.k) {
    throw DimensionError("gold allegation vector length " + std::to_string(gold_alleged->size()) +
                         " != k=" + std::to_string(cfg_.k));
  }
  if (doc.sentences.empty()) throw ContractError("case '" + doc.case_id + "' has no sentences");
  const bool drop = train && cfg_.dropout > 0.0;
  if (drop && rng == nullptr) throw ContractError("training forward needs an rng for dropout");

  // Token attention per sentence.
  std::vector<Var> frows;
  frows.reserve(doc.sentences.size());
  for (const Sentence& s : doc.sentences) {
    if (s.n < 1 || s.emb.size() != static_cast<size_t>(s.n) * cfg_.d_e) {
      throw DimensionError("case '" + doc.case_id + "': sentence embedding block is " +
                           std::to_string(s.emb.size()) + " values, expected n*d_e = " +
                           std::to_string(static_cast<size_t>(s.n) * cfg_.d_e));
    }
    Var Z = tape_.constant({s.n, cfg_.d_e}, s.emb);
    frows.push_back(attention_pool(Z, p("tok_att.W"), p("tok_att.b"), p("tok_att.u")).pooled);
  }
  const int m = static_cast<int>(frows.size());
  Var F = concat(frows, 0);  // m x d_e
  if (drop) F = dropout(F, cfg_.dropout, true, *rng);

  // BiGRU. The reverse scan reads reversed rows of the same (post-dropout) F.
  Var Hf = gru_direction(F, p("gru.fwd.Wz"), p("gru.fwd.Uz"), p("gru.fwd.bz"), p("gru.fwd.Wr"),
                         p("gru.fwd.Ur"), p("gru.fwd.br"), p("gru.fwd.Wh"), p("gru.fwd.Uh"),
                         p("gru.fwd.bh"));
  Var Hb;
  if (m == 1) {
    Hb = gru_direction(F, p("gru.bwd.Wz"), p("gru.bwd.Uz"), p("gru.bwd.bz"), p("gru.bwd.Wr"),
                       p("gru.bwd.Ur"), p("gru.bwd.br"), p("gru.bwd.Wh"), p("gru.bwd.Uh"),
                       p("gru.bwd.bh"));
  } else {
    std::vector<Var> rev;
    rev.reserve(static_cast<size_t>(m));
    for (int t = m - 1; t >= 0; --t) rev.push_back(row(F, t));
    Var Hb_rev = gru_direction(concat(rev, 0), p("gru.bwd.Wz"), p("gru.bwd.Uz"), p("gru.bwd.bz"),
                               p("gru.bwd.Wr"), p("gru.bwd.Ur"), p("gru.bwd.br"), p("gru.bwd.Wh"),
                               p("gru.bwd.Uh"), p("gru.bwd.bh"));
    std::vector<Var> unrev;
    unrev.reserve(static_cast<size_t>(m));
    for (int t = 0; t < m; ++t) unrev.push_back(row(Hb_rev, m - 1 - t));
    Hb = concat(unrev, 0);
  }
  Var H = concat({Hf, Hb}, 1);  // m x 2*d_gru
  if (drop) H = dropout(H, cfg_.dropout, true, *rng);

  // Article-specific (or shared) sentence attention.
  std::vector<Var> crows;
  crows.reserve(static_cast<size_t>(cfg_.k));
  for (int i = 0; i < cfg_.k; ++i) {
    const std::string base =
        cfg_.article_attention ? "sent_att." + std::to_string(i) : "sent_att.shared";
    crows.push_back(attention_pool(H, p(base + ".W"), p(base + ".b"), p(base + ".u")).pooled);
  }
  Var C = concat(crows, 0);  // k x 2*d_gru

  auto head_block = [&](const std::string& prefix) {
    std::vector<std::array<Var, 3>> qkv;
    qkv.reserve(static_cast<size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      const std::string base = prefix + ".head" + std::to_string(h);
      qkv.push_back({p(base + ".Wq"), p(base + ".Wk"), p(base + ".Wv")});
    }
    return qkv;
  };

  Var Cb = interaction(C, head_block("inter_b"), p("inter_b.Wo"));

  std::vector<Var> ob_rows;
  ob_rows.reserve(static_cast<size_t>(cfg_.k));
  for (int i = 0; i < cfg_.k; ++i) {
    const std::string base = "head_b." + std::to_string(i);
    ob_rows.push_back(classify_row(row(Cb, i), p(base + ".W1"), p(base + ".b1"), p(base + ".W2"),
                                   p(base + ".b2"), cfg_.dropout, train, rng));
  }
  Var logits_b = concat(ob_rows, 0);  // k x 1

  // Dependency assembly: [c_i, feature block, label slot], zero-padded so the
  // Task A width is mode-independent.
  Var zero_block = tape_.constant({1, cfg_.rep_width_b()},
                                  std::vector<double>(static_cast<size_t>(cfg_.rep_width_b()), 0.0));
  Var zero_slot = tape_.constant({1, 1}, {0.0});
  std::vector<Var> arows;
  arows.reserve(static_cast<size_t>(cfg_.k));
  for (int i = 0; i < cfg_.k; ++i) {
    Var feat = uses_feature_block(cfg_.dependency_mode) ? row(Cb, i) : zero_block;
    Var slot = zero_slot;
    if (uses_logit_slot(cfg_.dependency_mode)) {
      slot = cfg_.dependency_uses_probability ? sigmoid(ob_rows[static_cast<size_t>(i)])
                                              : ob_rows[static_cast<size_t>(i)];
    } else if (gold) {
      slot = tape_.constant(
          {1, 1}, {static_cast<double>((*gold_alleged)[static_cast<size_t>(i)])});
    }
    arows.push_back(concat({row(C, i), feat, slot}, 1));
  }
  Var Ca = concat(arows, 0);  // k x (4*d_gru+1)

  Var Caa = interaction(Ca, head_block("inter_a"), p("inter_a.Wo"));

  std::vector<Var> oa_rows;
  oa_rows.reserve(static_cast<size_t>(cfg_.k));
  for (int i = 0; i < cfg_.k; ++i) {
    const std::string base = "head_a." + std::to_string(i);
    oa_rows.push_back(classify_row(row(Caa, i), p(base + ".W1"), p(base + ".b1"), p(base + ".W2"),
                                   p(base + ".b2"), cfg_.dropout, train, rng));
  }
  Var logits_a = concat(oa_rows, 0);

  return ForwardOutput{logits_b, logits_a, Cb, Caa};
}

}  // namespace coc
