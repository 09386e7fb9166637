#pragma once

#include <string>
#include <vector>

#include "smem/tensor.hpp"

namespace smem {

// Classical momentum: v <- mu*v - lr*(g + wd*theta); theta <- theta + v.
struct OptState {
  std::vector<double> velocity;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// Applies one update and clears the parameter's gradient.
// Usage error if the gradient is missing.
void sgd_momentum_step(Tensor& param, OptState& state);

// Bundles per-parameter states for a fixed parameter list.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor*> params, double lr, double momentum, double weight_decay);

  void set_learning_rate(double lr);
  void step();

 private:
  std::vector<Tensor*> params_;
  std::vector<OptState> states_;
};

// Learning-rate schedule: base halved once per period.
// epoch is zero-based, so the value used during the 13th epoch
// (epoch=12, period=6) is base/4.
double scheduled_lr(double base, int epoch, int halve_period);

}  // namespace smem
