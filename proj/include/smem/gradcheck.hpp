#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smem/rng.hpp"
#include "smem/tensor.hpp"

namespace smem {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of already-computed analytic gradients.
// loss_fn re-evaluates the loss at the current parameter values and must be
// deterministic. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. max_coords < 0 sweeps every coordinate; otherwise that many
// coordinates per tensor are sampled with sample_rng.
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<std::pair<std::string, Tensor*>>& params, double h,
                                  int max_coords = -1, Rng* sample_rng = nullptr);

}  // namespace smem
