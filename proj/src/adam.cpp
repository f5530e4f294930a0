// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace addm {

void Adam::step(ParamStore& params, const GradMap& grads, int64_t step_index) {
  if (step_index < 1) throw std::runtime_error("Adam: step_index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_index));
  for (auto& kv : params.entries()) {
    if (!kv.second.trainable) continue;
    const std::string& name = kv.first;
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw std::runtime_error("Adam: missing gradient for trainable parameter '" + name + "'");
    }
    Tensor& w = kv.second.value;
    const Tensor& g = git->second;
    if (!w.same_shape(g)) {
      throw std::runtime_error("Adam: gradient shape " + shape_str(g.shape) +
                               " does not match parameter '" + name + "' shape " +
                               shape_str(w.shape));
    }
    Tensor& m = m_.try_emplace(name, Tensor::zeros(w.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(w.shape)).first->second;
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w.data[i] = static_cast<float>(w.data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
    if (!w.all_finite()) {
      throw std::runtime_error("Adam: non-finite parameter values after update of '" + name + "'");
    }
  }
}

}  // namespace addm
