// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>

#include "addm/tensor.hpp"

namespace addm {

using GradMap64 = std::map<std::string, Tensor64>;
using Point64 = std::map<std::string, Tensor64>;

// Loss evaluator for gradient checking. Must return the scalar loss at
// `point`; when `grads` is non-null it must also run backward and store one
// gradient tensor per point entry. Implementations rebuild the graph on every
// call, so tapes stay single-use.
using LossFn64 = std::function<double(const Point64& point, GradMap64* grads)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t coords_checked = 0;
};

// Compares analytic gradients against central differences
// (f(x+h) - f(x-h)) / 2h in double precision. Relative error per coordinate
// is |a - n| / max(|a|, |n|, 1e-8); coordinates where both sides sit below
// 1e-7 count as exact (central differences of an O(1) loss bottom out near
// 1e-11 from cancellation, so such coordinates carry no signal either way).
// `max_coords_per_param` subsamples large tensors deterministically (stride
// over the flat index), 0 checks all.
GradCheckReport grad_check(const LossFn64& f, const Point64& point, double h = 1e-5,
                           int64_t max_coords_per_param = 0);

}  // namespace addm
