#pragma once

#include <string>

#include "coc/corpus.hpp"
#include "coc/network.hpp"
#include "coc/training.hpp"
#include "json.hpp"

namespace coc {

// JSON <-> config structs. Unknown keys are a ConfigError (they are almost
// always typos of real knobs); missing keys keep their defaults.

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
void write_network_config(const NetworkConfig& cfg, const std::string& path);
NetworkConfig read_network_config(const std::string& path);

nlohmann::json to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ContrastiveConfig& cfg);
ContrastiveConfig contrastive_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Reads a whole JSON document from disk. IoError on missing/unreadable,
/// ConfigError on parse failure.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace coc
