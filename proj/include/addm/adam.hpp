// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "addm/param_store.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Adam with bias correction. Moment state is keyed by parameter name and
// allocated on first update, so the same optimizer can drive different
// trainable subsets across stages.
class Adam {
 public:
  struct Config {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-9;
  };

  explicit Adam(Config cfg) : cfg_(cfg) {}

  // Applies one update to every trainable parameter. `step_index` is 1-based
  // and drives bias correction; grads must cover all trainable names.
  void step(ParamStore& params, const GradMap& grads, int64_t step_index);

  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace addm
