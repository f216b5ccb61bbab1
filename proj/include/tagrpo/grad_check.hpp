#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tagrpo/param_store.hpp"

namespace tagrpo {

// Central-difference gradient verification. `loss` must be a pure function of
// the store's parameter values (same params in, same scalar out).
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0, numeric = 0.0;
  bool ok(double tol) const { return max_rel_err < tol; }
};

using LossFn = std::function<double(ParamStore&)>;

// Runs backward once for analytic gradients, then perturbs every scalar
// parameter by +-h and compares. Relative error uses max(|a|,|n|,1e-6) in the
// denominator so near-zero gradients do not blow up the ratio.
GradCheckResult gradient_check(ParamStore& params, const LossFn& loss,
                               const LossFn& loss_and_backward, double h = 1e-5);

// Convenience wrapper when one function can do both (backward pass cost is
// acceptable during probing; the gradient snapshot is taken before probing).
GradCheckResult gradient_check(ParamStore& params, const LossFn& loss_and_backward,
                               double h = 1e-5);

}  // namespace tagrpo
