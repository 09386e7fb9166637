#include "smem/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace smem {

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<std::pair<std::string, Tensor*>>& params, double h,
                                  int max_coords, Rng* sample_rng) {
  if (h <= 0) fail(ErrorKind::kUsage, "finite_diff_check: h must be positive");
  GradCheckReport report;
  for (const auto& [name, param] : params) {
    if (!param->has_grad())
      fail(ErrorKind::kUsage, "finite_diff_check: parameter " + name + " has no analytic gradient");
    const auto& analytic = param->grad();
    const int n = param->numel();

    std::vector<int> coords;
    if (max_coords < 0 || max_coords >= n) {
      coords.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      if (!sample_rng) fail(ErrorKind::kUsage, "finite_diff_check: sampling requires an rng");
      coords.reserve(static_cast<size_t>(max_coords));
      for (int i = 0; i < max_coords; ++i) coords.push_back(sample_rng->next_int(n));
    }

    for (int i : coords) {
      double* slot = param->data() + i;
      const double saved = *slot;
      *slot = saved + h;
      const double up = loss_fn();
      *slot = saved - h;
      const double down = loss_fn();
      *slot = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        fail(ErrorKind::kNumeric, "finite_diff_check: non-finite loss while perturbing " + name);
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[static_cast<size_t>(i)];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace smem
