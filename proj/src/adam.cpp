#include "coc/adam.hpp"

#include <cmath>

#include "coc/errors.hpp"

namespace coc {

void Adam::step(ParamStore& store) {
  if (step_count_ == 0) {
    for (const auto& [name, t] : store.items()) {
      moments_[name] = Moments{std::vector<double>(t.values.size(), 0.0),
                               std::vector<double>(t.values.size(), 0.0)};
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

  for (auto& [name, t] : store.items()) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      throw ContractError("adam: parameter '" + name + "' appeared after the first step");
    }
    if (!t.requires_grad || t.grad.size() != t.values.size()) {
      throw ContractError("adam: parameter '" + name + "' has no gradient");
    }
    auto& m = it->second.m;
    auto& v = it->second.v;
    for (size_t i = 0; i < t.values.size(); ++i) {
      const double g = t.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    t.zero_grad();
  }
}

}  // namespace coc
