#include "tagrpo/grad_check.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tagrpo {

GradCheckResult gradient_check(ParamStore& params, const LossFn& loss,
                               const LossFn& loss_and_backward, double h) {
  params.zero_grad();
  loss_and_backward(params);

  // Snapshot analytic gradients before probing mutates anything.
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& name : params.names()) {
    const Tensor& p = params.at(name);
    if (p.requires_grad && !p.has_grad())
      throw std::runtime_error("gradient_check: no gradient for '" + name + "'");
    analytic.push_back(p.requires_grad ? p.grad : Matrix());
  }

  GradCheckResult res;
  std::size_t pi = 0;
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    const Matrix& ga = analytic[pi++];
    if (!p.requires_grad) continue;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + h;
        const double up = loss(params);
        p.value(r, c) = saved - h;
        const double dn = loss(params);
        p.value(r, c) = saved;
        const double numeric = (up - dn) / (2.0 * h);
        const double a = ga(r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        double rel = std::abs(a - numeric) / denom;
        // A non-finite quotient is a failure for this coordinate, not a skip.
        if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst_param = name;
          res.worst_index = static_cast<int>(r * p.value.cols() + c);
          res.analytic = a;
          res.numeric = numeric;
        }
      }
    }
  }
  return res;
}

GradCheckResult gradient_check(ParamStore& params, const LossFn& loss_and_backward, double h) {
  // The analytic snapshot is taken before probing, so backward passes run
  // during probing only dirty p.grad; callers zero gradients afterwards.
  return gradient_check(params, loss_and_backward, loss_and_backward, h);
}

}  // namespace tagrpo
