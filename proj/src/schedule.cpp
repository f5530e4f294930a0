// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/schedule.hpp"

#include <stdexcept>
#include <string>

namespace addm {

namespace {
int check_t(int t, int T) {
  if (t < 1 || t > T)
    throw std::runtime_error("schedule: step " + std::to_string(t) + " outside [1, " +
                             std::to_string(T) + "]");
  return t - 1;
}
}  // namespace

double NoiseSchedule::beta(int t) const { return betas[static_cast<size_t>(check_t(t, T))]; }
double NoiseSchedule::alpha(int t) const { return alphas[static_cast<size_t>(check_t(t, T))]; }
double NoiseSchedule::alpha_bar(int t) const {
  return alpha_bars[static_cast<size_t>(check_t(t, T))];
}
double NoiseSchedule::alpha_bar_prev(int t) const {
  check_t(t, T);
  return t == 1 ? 1.0 : alpha_bars[static_cast<size_t>(t - 2)];
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw std::runtime_error("make_schedule: T must be >= 1, got " + std::to_string(T));
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw std::runtime_error("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<size_t>(T));
  s.alphas.resize(static_cast<size_t>(T));
  s.alpha_bars.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double b =
        T == 1 ? beta_min : beta_min + (t - 1) * (beta_max - beta_min) / static_cast<double>(T - 1);
    s.betas[static_cast<size_t>(t - 1)] = b;
    s.alphas[static_cast<size_t>(t - 1)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
  }
  return s;
}

}  // namespace addm
