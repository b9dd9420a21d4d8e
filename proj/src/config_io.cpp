#include "coc/config_io.hpp"

#include <fstream>
#include <set>

namespace coc {

using nlohmann::json;

namespace {

// Pulls fields out of a JSON object while tracking which keys were consumed,
// so a leftover key (typo'd knob) can be reported instead of silently ignored.
class FieldReader {
 public:
  FieldReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  void mark_seen(const char* key) { seen_.insert(key); }
  const json& raw() const { return j_; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(context_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const NetworkConfig& cfg) {
  return json{{"k", cfg.k},
              {"d_e", cfg.d_e},
              {"d_att_tok", cfg.d_att_tok},
              {"d_gru", cfg.d_gru},
              {"d_att_sent", cfg.d_att_sent},
              {"heads", cfg.heads},
              {"d_cls", cfg.d_cls},
              {"dropout", cfg.dropout},
              {"dependency_mode", to_string(cfg.dependency_mode)},
              {"article_attention", cfg.article_attention},
              {"dependency_uses_probability", cfg.dependency_uses_probability}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig cfg;
  FieldReader r(j, "network");
  r.get("k", cfg.k);
  r.get("d_e", cfg.d_e);
  r.get("d_att_tok", cfg.d_att_tok);
  r.get("d_gru", cfg.d_gru);
  r.get("d_att_sent", cfg.d_att_sent);
  r.get("heads", cfg.heads);
  r.get("d_cls", cfg.d_cls);
  r.get("dropout", cfg.dropout);
  std::string mode = to_string(cfg.dependency_mode);
  r.get("dependency_mode", mode);
  cfg.dependency_mode = dependency_mode_from_string(mode);
  r.get("article_attention", cfg.article_attention);
  r.get("dependency_uses_probability", cfg.dependency_uses_probability);
  r.finish();
  cfg.validate();
  return cfg;
}

void write_network_config(const NetworkConfig& cfg, const std::string& path) {
  write_json_file(to_json(cfg), path);
}

NetworkConfig read_network_config(const std::string& path) {
  return network_config_from_json(read_json_file(path));
}

json to_json(const SyntheticConfig& cfg) {
  return json{{"k", cfg.k},
              {"d_e", cfg.d_e},
              {"cases", cfg.cases},
              {"sentences_min", cfg.sentences_min},
              {"sentences_max", cfg.sentences_max},
              {"tokens_min", cfg.tokens_min},
              {"tokens_max", cfg.tokens_max},
              {"prevalence", cfg.prevalence},
              {"violation_given_allegation", cfg.violation_given_allegation},
              {"signal_to_noise", cfg.signal_to_noise},
              {"signal_token_fraction", cfg.signal_token_fraction},
              {"violation_signal_scale", cfg.violation_signal_scale},
              {"seed", cfg.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig cfg;
  FieldReader r(j, "synthetic");
  r.get("k", cfg.k);
  r.get("d_e", cfg.d_e);
  r.get("cases", cfg.cases);
  r.get("sentences_min", cfg.sentences_min);
  r.get("sentences_max", cfg.sentences_max);
  r.get("tokens_min", cfg.tokens_min);
  r.get("tokens_max", cfg.tokens_max);
  // Scalars broadcast: accept either one number or a k-length array.
  for (auto [key, field] :
       {std::pair<const char*, std::vector<double>*>{"prevalence", &cfg.prevalence},
        {"violation_given_allegation", &cfg.violation_given_allegation}}) {
    if (j.contains(key) && j.at(key).is_number()) {
      *field = {j.at(key).get<double>()};
      r.mark_seen(key);
    } else {
      r.get(key, *field);
    }
  }
  r.get("signal_to_noise", cfg.signal_to_noise);
  r.get("signal_token_fraction", cfg.signal_token_fraction);
  r.get("violation_signal_scale", cfg.violation_signal_scale);
  r.get("seed", cfg.seed);
  r.finish();
  cfg.validate();
  return cfg;
}

json to_json(const ContrastiveConfig& cfg) {
  return json{{"tau_a", cfg.tau_a},
              {"tau_c", cfg.tau_c},
              {"alpha", cfg.alpha},
              {"similarity", to_string(cfg.similarity)},
              {"formulation", to_string(cfg.formulation)},
              {"p_definition", to_string(cfg.p_definition)},
              {"include_article_term", cfg.include_article_term},
              {"include_outcome_term", cfg.include_outcome_term}};
}

ContrastiveConfig contrastive_config_from_json(const json& j) {
  ContrastiveConfig cfg;
  FieldReader r(j, "contrastive");
  r.get("tau_a", cfg.tau_a);
  r.get("tau_c", cfg.tau_c);
  r.get("alpha", cfg.alpha);
  std::string sim = to_string(cfg.similarity);
  r.get("similarity", sim);
  cfg.similarity = similarity_from_string(sim);
  std::string form = to_string(cfg.formulation);
  r.get("formulation", form);
  cfg.formulation = formulation_from_string(form);
  std::string pdef = to_string(cfg.p_definition);
  r.get("p_definition", pdef);
  cfg.p_definition = p_definition_from_string(pdef);
  r.get("include_article_term", cfg.include_article_term);
  r.get("include_outcome_term", cfg.include_outcome_term);
  r.finish();
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"learning_rate", cfg.learning_rate},
              {"lr_grid", cfg.lr_grid},
              {"contrastive", to_json(cfg.contrastive)},
              {"beta", cfg.beta},
              {"mask",
               json{{"bce_b", cfg.mask.bce_b},
                    {"bce_a", cfg.mask.bce_a},
                    {"hc_b", cfg.mask.hc_b},
                    {"hc_a", cfg.mask.hc_a}}},
              {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  FieldReader r(j, "train");
  r.get("batch_size", cfg.batch_size);
  r.get("max_epochs", cfg.max_epochs);
  r.get("patience", cfg.patience);
  r.get("learning_rate", cfg.learning_rate);
  r.get("lr_grid", cfg.lr_grid);
  if (j.contains("contrastive")) {
    cfg.contrastive = contrastive_config_from_json(j.at("contrastive"));
    r.mark_seen("contrastive");
  }
  r.get("beta", cfg.beta);
  if (j.contains("mask")) {
    FieldReader m(j.at("mask"), "train.mask");
    m.get("bce_b", cfg.mask.bce_b);
    m.get("bce_a", cfg.mask.bce_a);
    m.get("hc_b", cfg.mask.hc_b);
    m.get("hc_a", cfg.mask.hc_a);
    m.finish();
    r.mark_seen("mask");
  }
  r.get("seed", cfg.seed);
  r.finish();
  cfg.validate();
  return cfg;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

}  // namespace coc
