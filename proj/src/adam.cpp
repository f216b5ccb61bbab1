#include "tagrpo/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace tagrpo {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw std::runtime_error("Adam: learning rate must be >= 0");
}

void Adam::step(ParamStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    if (!p.requires_grad) continue;
    if (!p.has_grad())
      throw std::runtime_error("Adam: parameter '" + name + "' has no gradient");
    auto [it, fresh] = state_.try_emplace(name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Matrix::Zero(p.value.rows(), p.value.cols());
      mo.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * p.grad;
    mo.v = beta2_ * mo.v.array() + (1.0 - beta2_) * p.grad.array().square();
    p.value.array() -= lr_ * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps_);
  }
  params.bump_version();
}

}  // namespace tagrpo
