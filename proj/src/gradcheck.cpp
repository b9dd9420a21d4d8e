#include "coc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "coc/errors.hpp"

namespace coc {

namespace {

double eval_loss(const std::function<Var(Tape&)>& build_loss) {
  Tape tape;
  return tape.scalar(build_loss(tape));
}

}  // namespace

GradCheckResult grad_check(const std::function<Var(Tape&)>& build_loss,
                           const std::vector<std::pair<std::string, Tensor*>>& params,
                           double step, int indices_per_param) {
  const double v0 = eval_loss(build_loss);
  const double v1 = eval_loss(build_loss);
  if (v0 != v1) {
    throw ContractError("grad_check: loss is not deterministic across rebuilds (" +
                        std::to_string(v0) + " vs " + std::to_string(v1) +
                        "); fix the seed or disable stochastic layers");
  }

  for (auto& [name, t] : params) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    Tape tape;
    Var loss = build_loss(tape);
    tape.backward(loss);
  }

  GradCheckResult res;
  for (auto& [name, t] : params) {
    const int n = static_cast<int>(t->values.size());
    const int probe = (indices_per_param > 0) ? std::min(indices_per_param, n) : n;
    // Spread probes across the tensor rather than only touching its head.
    for (int p = 0; p < probe; ++p) {
      const int i = (probe == n) ? p : static_cast<int>((static_cast<int64_t>(p) * n) / probe);
      const double saved = t->values[static_cast<size_t>(i)];
      t->values[static_cast<size_t>(i)] = saved + step;
      const double fp = eval_loss(build_loss);
      t->values[static_cast<size_t>(i)] = saved - step;
      const double fm = eval_loss(build_loss);
      t->values[static_cast<size_t>(i)] = saved;

      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = t->grad[static_cast<size_t>(i)];
      // The 1e-6 floor keeps near-zero gradients from amplifying the central
      // difference's ~1e-11 cancellation noise into a fake relative error.
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = GradCheckEntry{name, i, analytic, numeric, rel};
      }
    }
  }
  return res;
}

}  // namespace coc
