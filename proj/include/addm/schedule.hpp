// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace addm {

// Per-step noise tables. Index helpers take 1-based t in [1, T]; tables are
// kept in double so long cumulative products stay accurate.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;
  // alpha_bar(t-1) with the t=1 convention alpha_bar(0) = 1.
  double alpha_bar_prev(int t) const;
};

// Linear beta ramp: beta_t = beta_min + (t-1) * (beta_max - beta_min) / (T-1).
// T=1 degenerates to a single step at beta_min; beta_max is ignored there.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

}  // namespace addm
