// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "addm/prior.hpp"
#include "addm/rng.hpp"
#include "addm/schedule.hpp"
#include "addm/tape.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Predicts the injected noise from the noisy residual at step t. Conditioning
// (text encoding, speaker) is bound into the closure by the caller.
using DenoiserFn = std::function<Tensor(const Tensor& z_t, int t)>;

// Forward process in prior-residual space: subtracts the prior mean, then
// z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * sigma_prior (*) eps.
// eps must be a standard normal draw of x0's shape.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const ResolvedPrior& prior,
                const NoiseSchedule& schedule);

// One ancestral reverse step:
//   z_{t-1} = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
//             + [t > 1] * post_std_t * sigma_prior (*) xi
// with post_std_t^2 = beta_t * (1 - abar_{t-1}) / (1 - abar_t). The t=1 step
// is deterministic and draws nothing from rng.
Tensor p_sample_step(const DenoiserFn& denoiser, const Tensor& z_t, int t,
                     const ResolvedPrior& prior, const NoiseSchedule& schedule, RngStream& rng);

// Full reverse pass: z_T ~ N(0, diag(sigma_prior^2)), steps T..1, then adds
// the prior mean back. Output is (frames, bins) on the prior's frame grid.
// Noise draw order: frames-major for z_T, then per step t = T..2.
Tensor sample(const DenoiserFn& denoiser, const ResolvedPrior& prior,
              const NoiseSchedule& schedule, RngStream& rng);

// Appends the prior-weighted noise-prediction loss to the tape:
// mean((eps_hat - eps)^2 / sigma_prior^2). With a standard-Gaussian prior the
// weights are exactly one and this equals the plain MSE.
template <typename S>
int weighted_noise_loss(Tape<S>& tape, int eps_hat, const TensorT<S>& eps,
                        const TensorT<S>& inv_var);

extern template int weighted_noise_loss<float>(Tape<float>&, int, const Tensor&, const Tensor&);
extern template int weighted_noise_loss<double>(Tape<double>&, int, const Tensor64&,
                                                const Tensor64&);

}  // namespace addm
