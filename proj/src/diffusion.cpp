// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace addm {

namespace {
void check_step(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.T)
    throw std::runtime_error("diffusion: step " + std::to_string(t) + " outside [1, " +
                             std::to_string(s.T) + "]");
}

void check_grid(const Tensor& x, const ResolvedPrior& prior, const char* what) {
  if (!x.same_shape(prior.mu))
    throw std::runtime_error(std::string("diffusion: ") + what + " shape " + shape_str(x) +
                             " does not match prior frame grid " + shape_str(prior.mu));
}
}  // namespace

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const ResolvedPrior& prior,
                const NoiseSchedule& schedule) {
  check_step(t, schedule);
  check_grid(x0, prior, "x0");
  check_grid(eps, prior, "eps");
  const double abar = schedule.alpha_bar(t);
  const double c0 = std::sqrt(abar);
  const double cn = std::sqrt(1.0 - abar);
  Tensor z(x0.shape);
  for (int64_t i = 0; i < x0.numel(); ++i) {
    const double z0 = static_cast<double>(x0.at(i)) - prior.mu.at(i);
    z.at(i) = static_cast<float>(c0 * z0 + cn * prior.sigma.at(i) * eps.at(i));
  }
  return z;
}

Tensor p_sample_step(const DenoiserFn& denoiser, const Tensor& z_t, int t,
                     const ResolvedPrior& prior, const NoiseSchedule& schedule, RngStream& rng) {
  check_step(t, schedule);
  check_grid(z_t, prior, "z_t");
  const Tensor eps_hat = denoiser(z_t, t);
  check_grid(eps_hat, prior, "denoiser output");
  const double beta = schedule.beta(t);
  const double abar = schedule.alpha_bar(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double noise_coef = beta / std::sqrt(1.0 - abar);
  const double post_std =
      t > 1 ? std::sqrt(beta * (1.0 - schedule.alpha_bar_prev(t)) / (1.0 - abar)) : 0.0;
  Tensor z(z_t.shape);
  for (int64_t i = 0; i < z_t.numel(); ++i) {
    double v = (static_cast<double>(z_t.at(i)) - noise_coef * eps_hat.at(i)) * inv_sqrt_alpha;
    if (t > 1) v += post_std * prior.sigma.at(i) * rng.normal();
    z.at(i) = static_cast<float>(v);
  }
  return z;
}

Tensor sample(const DenoiserFn& denoiser, const ResolvedPrior& prior,
              const NoiseSchedule& schedule, RngStream& rng) {
  Tensor z(prior.mu.shape);
  for (int64_t i = 0; i < z.numel(); ++i)
    z.at(i) = static_cast<float>(prior.sigma.at(i) * rng.normal());
  for (int t = schedule.T; t >= 1; --t) z = p_sample_step(denoiser, z, t, prior, schedule, rng);
  Tensor x(z.shape);
  for (int64_t i = 0; i < z.numel(); ++i) x.at(i) = z.at(i) + prior.mu.at(i);
  if (!x.all_finite()) throw std::runtime_error("sample: non-finite output");
  return x;
}

template <typename S>
int weighted_noise_loss(Tape<S>& tape, int eps_hat, const TensorT<S>& eps,
                        const TensorT<S>& inv_var) {
  const int target = tape.constant(eps);
  const int weight = tape.constant(inv_var);
  return tape.apply(Op::WeightedMse, {eps_hat, target, weight});
}

template int weighted_noise_loss<float>(Tape<float>&, int, const Tensor&, const Tensor&);
template int weighted_noise_loss<double>(Tape<double>&, int, const Tensor64&, const Tensor64&);

}  // namespace addm
