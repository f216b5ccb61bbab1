#pragma once

#include <map>
#include <string>

#include "tagrpo/param_store.hpp"

namespace tagrpo {

// Adam with bias correction. Moment buffers are keyed by parameter name and
// created lazily on the first step.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One update over every requires_grad parameter. Each of those must carry a
  // populated gradient (an error names the parameter otherwise). Gradients
  // are left intact; the caller zeroes them. Bumps the store version.
  void step(ParamStore& params);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps_taken() const { return t_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace tagrpo
