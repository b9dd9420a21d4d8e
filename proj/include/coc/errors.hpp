#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace coc {

// Error taxonomy shared by all modules. The CLI maps ConfigError/IoError to
// exit code 2 and everything else to exit code 1.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-fatal diagnostics (degenerate normalization, label inconsistencies on
// ingest). Callers that need to inspect warnings pass a sink; the default
// goes to stderr.
using WarningSink = void (*)(const std::string&);

inline void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

}  // namespace coc
