#pragma once

#include <map>
#include <string>
#include <vector>

#include "coc/tensor.hpp"

namespace coc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. One global step counter: every call to step()
/// advances t by one and updates every parameter in the store, so parameters
/// added after the first step are a ContractError.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& store);
  int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, Moments> moments_;
  int64_t step_count_ = 0;
};

}  // namespace coc
