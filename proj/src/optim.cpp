#include "smem/optim.hpp"

#include <cmath>

namespace smem {

void sgd_momentum_step(Tensor& param, OptState& state) {
  if (!param.has_grad()) fail(ErrorKind::kUsage, "sgd_momentum_step: parameter has no gradient");
  const auto& g = param.grad();
  if (state.velocity.empty()) state.velocity.assign(static_cast<size_t>(param.numel()), 0.0);
  if (state.velocity.size() != g.size())
    fail(ErrorKind::kDimension, "sgd_momentum_step: velocity size does not match parameter " + param.shape_string());
  double* p = param.data();
  for (size_t i = 0; i < g.size(); ++i) {
    double& v = state.velocity[i];
    v = state.momentum * v - state.learning_rate * (g[i] + state.weight_decay * p[i]);
    p[i] += v;
  }
  param.zero_grad();
}

SgdMomentum::SgdMomentum(std::vector<Tensor*> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), states_(params_.size()) {
  for (auto& s : states_) {
    s.learning_rate = lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
  }
}

void SgdMomentum::set_learning_rate(double lr) {
  for (auto& s : states_) s.learning_rate = lr;
}

void SgdMomentum::step() {
  for (size_t i = 0; i < params_.size(); ++i) sgd_momentum_step(*params_[i], states_[i]);
}

double scheduled_lr(double base, int epoch, int halve_period) {
  if (halve_period <= 0) return base;
  return base / std::exp2(static_cast<double>(epoch / halve_period));
}

}  // namespace smem
