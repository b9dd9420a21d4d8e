#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "coc/tape.hpp"
#include "coc/tensor.hpp"

namespace coc {

struct GradCheckEntry {
  std::string param;
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  int checked = 0;
};

/// Compares tape gradients against central differences. `build_loss` must
/// construct the scalar loss from scratch on the tape it is handed (it runs
/// many times); a build whose value changes between two identical calls is a
/// ContractError, since finite differences are meaningless for it.
/// `indices_per_param` caps entries probed per tensor (<=0 means all).
GradCheckResult grad_check(const std::function<Var(Tape&)>& build_loss,
                           const std::vector<std::pair<std::string, Tensor*>>& params,
                           double step = 1e-5, int indices_per_param = 0);

}  // namespace coc
