// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace addm {

GradCheckReport grad_check(const LossFn64& f, const Point64& point, double h,
                           int64_t max_coords_per_param) {
  if (h <= 0.0) throw std::runtime_error("grad_check: h must be positive");
  GradMap64 analytic;
  f(point, &analytic);
  GradCheckReport report;
  for (const auto& kv : point) {
    const std::string& name = kv.first;
    auto ait = analytic.find(name);
    if (ait == analytic.end()) {
      throw std::runtime_error("grad_check: loss function returned no gradient for '" + name + "'");
    }
    const Tensor64& g = ait->second;
    if (!g.same_shape(kv.second)) {
      throw std::runtime_error("grad_check: gradient shape " + shape_str(g.shape) +
                               " does not match point entry '" + name + "' shape " +
                               shape_str(kv.second.shape));
    }
    const int64_t n = kv.second.numel();
    int64_t stride = 1;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      stride = (n + max_coords_per_param - 1) / max_coords_per_param;
    }
    for (int64_t i = 0; i < n; i += stride) {
      Point64 shifted = point;
      shifted[name].data[i] = kv.second.data[i] + h;
      const double fp = f(shifted, nullptr);
      shifted[name].data[i] = kv.second.data[i] - h;
      const double fm = f(shifted, nullptr);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = g.data[i];
      // Both sides at the cancellation floor: a dead coordinate, not signal.
      if (std::fabs(a) < 1e-7 && std::fabs(numeric) < 1e-7) {
        ++report.coords_checked;
        continue;
      }
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace addm
