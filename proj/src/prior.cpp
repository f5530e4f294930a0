// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/prior.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace addm {

const char* prior_mode_name(PriorMode m) {
  switch (m) {
    case PriorMode::StandardGaussian: return "standard_gaussian";
    case PriorMode::PhonemePrior: return "phoneme_prior";
    case PriorMode::GlobalPrior: return "global_prior";
  }
  return "?";
}

PriorMode parse_prior_mode(const std::string& s) {
  if (s == "standard_gaussian") return PriorMode::StandardGaussian;
  if (s == "phoneme_prior") return PriorMode::PhonemePrior;
  if (s == "global_prior") return PriorMode::GlobalPrior;
  throw std::runtime_error("unknown prior mode '" + s +
                           "' (want standard_gaussian|phoneme_prior|global_prior)");
}

PhonemePriorStats estimate_prior(const std::vector<AlignedFrames>& utts, int num_phonemes,
                                 double variance_floor) {
  if (num_phonemes < 1) throw std::runtime_error("estimate_prior: num_phonemes must be >= 1");
  if (variance_floor <= 0.0) throw std::runtime_error("estimate_prior: variance floor must be > 0");
  int64_t bins = -1;
  for (const AlignedFrames& u : utts) {
    if (!u.mel || !u.phonemes) throw std::runtime_error("estimate_prior: null utterance view");
    if (u.mel->rank() != 2)
      throw std::runtime_error("estimate_prior: mel must be (frames, bins), got " +
                               shape_str(*u.mel));
    if (bins < 0) bins = u.mel->cols();
    if (u.mel->cols() != bins) throw std::runtime_error("estimate_prior: inconsistent mel bins");
    if (u.mel->rows() != static_cast<int64_t>(u.phonemes->size()))
      throw std::runtime_error("estimate_prior: alignment length does not match frame count");
  }
  int64_t total_frames = 0;
  for (const AlignedFrames& u : utts) total_frames += u.mel->rows();
  if (total_frames == 0) throw std::runtime_error("estimate_prior: corpus has no frames");

  const int64_t v = num_phonemes, d = bins;
  std::vector<double> sum(static_cast<size_t>(v * d), 0.0), sum_sq(static_cast<size_t>(v * d), 0.0);
  std::vector<double> gsum(static_cast<size_t>(d), 0.0), gsum_sq(static_cast<size_t>(d), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(v), 0);
  for (const AlignedFrames& u : utts) {
    for (int64_t l = 0; l < u.mel->rows(); ++l) {
      const int p = (*u.phonemes)[static_cast<size_t>(l)];
      if (p < 0 || p >= num_phonemes)
        throw std::runtime_error("estimate_prior: phoneme id " + std::to_string(p) +
                                 " outside [0, " + std::to_string(num_phonemes) + ")");
      ++count[static_cast<size_t>(p)];
      for (int64_t i = 0; i < d; ++i) {
        const double x = u.mel->at(l, i);
        sum[static_cast<size_t>(p * d + i)] += x;
        sum_sq[static_cast<size_t>(p * d + i)] += x * x;
        gsum[static_cast<size_t>(i)] += x;
        gsum_sq[static_cast<size_t>(i)] += x * x;
      }
    }
  }

  PhonemePriorStats out;
  out.num_phonemes = num_phonemes;
  out.mel_bins = static_cast<int>(d);
  out.phoneme_mean = Tensor::zeros({v, d});
  out.phoneme_var = Tensor::zeros({v, d});
  out.global_mean = Tensor::zeros({d});
  out.global_var = Tensor::zeros({d});
  out.has_phoneme.assign(static_cast<size_t>(v), 0);
  for (int64_t i = 0; i < d; ++i) {
    const double mu = gsum[static_cast<size_t>(i)] / static_cast<double>(total_frames);
    const double var = gsum_sq[static_cast<size_t>(i)] / static_cast<double>(total_frames) - mu * mu;
    out.global_mean.at(i) = static_cast<float>(mu);
    out.global_var.at(i) = static_cast<float>(std::max(var, variance_floor));
  }
  for (int64_t p = 0; p < v; ++p) {
    if (count[static_cast<size_t>(p)] == 0) {
      // fallback rows keep the tables dense for serialization
      for (int64_t i = 0; i < d; ++i) {
        out.phoneme_mean.at(p, i) = out.global_mean.at(i);
        out.phoneme_var.at(p, i) = out.global_var.at(i);
      }
      continue;
    }
    out.has_phoneme[static_cast<size_t>(p)] = 1;
    const double n = static_cast<double>(count[static_cast<size_t>(p)]);
    for (int64_t i = 0; i < d; ++i) {
      const double mu = sum[static_cast<size_t>(p * d + i)] / n;
      const double var = sum_sq[static_cast<size_t>(p * d + i)] / n - mu * mu;
      out.phoneme_mean.at(p, i) = static_cast<float>(mu);
      out.phoneme_var.at(p, i) = static_cast<float>(std::max(var, variance_floor));
    }
  }
  return out;
}

ResolvedPrior resolve_prior(const PhonemePriorStats& stats, PriorMode mode,
                            const std::vector<int>& frame_phonemes) {
  const int64_t L = static_cast<int64_t>(frame_phonemes.size());
  const int64_t d = stats.mel_bins;
  if (L == 0) throw std::runtime_error("resolve_prior: empty frame alignment");
  ResolvedPrior out;
  out.mu = Tensor::zeros({L, d});
  out.sigma = Tensor::zeros({L, d});
  out.inv_var = Tensor::zeros({L, d});
  for (int64_t l = 0; l < L; ++l) {
    for (int64_t i = 0; i < d; ++i) {
      double mu = 0.0, var = 1.0;
      if (mode == PriorMode::GlobalPrior) {
        mu = stats.global_mean.at(i);
        var = stats.global_var.at(i);
      } else if (mode == PriorMode::PhonemePrior) {
        int p = frame_phonemes[static_cast<size_t>(l)];
        if (p < 0 || p >= stats.num_phonemes)
          throw std::runtime_error("resolve_prior: phoneme id " + std::to_string(p) +
                                   " outside [0, " + std::to_string(stats.num_phonemes) + ")");
        mu = stats.phoneme_mean.at(p, i);
        var = stats.phoneme_var.at(p, i);
      }
      out.mu.at(l, i) = static_cast<float>(mu);
      out.sigma.at(l, i) = static_cast<float>(std::sqrt(var));
      out.inv_var.at(l, i) = static_cast<float>(1.0 / var);
    }
  }
  return out;
}

}  // namespace addm
