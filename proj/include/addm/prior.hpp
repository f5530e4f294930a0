// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "addm/tensor.hpp"

namespace addm {

enum class PriorMode { StandardGaussian, PhonemePrior, GlobalPrior };

const char* prior_mode_name(PriorMode m);
PriorMode parse_prior_mode(const std::string& s);

// Mean/variance statistics of the training mels, per phoneme and pooled over
// everything. Diffusion runs in the residual space (mel - mean) with noise
// scaled by the matching standard deviation.
struct PhonemePriorStats {
  int num_phonemes = 0;
  int mel_bins = 0;
  Tensor phoneme_mean;              // (V, D)
  Tensor phoneme_var;               // (V, D), floored
  Tensor global_mean;               // (D)
  Tensor global_var;                // (D), floored
  std::vector<uint8_t> has_phoneme; // phonemes with zero frames fall back to global
};

// One utterance's frames ready for statistics: mel is (frames, bins) and
// phonemes holds one id per frame.
struct AlignedFrames {
  const Tensor* mel = nullptr;
  const std::vector<int>* phonemes = nullptr;
};

// Population mean/variance over all frames of all utterances, grouped by
// phoneme id and pooled globally. Variances are clamped from below so the
// weighted loss never divides by ~0.
PhonemePriorStats estimate_prior(const std::vector<AlignedFrames>& utts, int num_phonemes,
                                 double variance_floor);

// Per-frame prior tables for one utterance, all (frames, bins).
struct ResolvedPrior {
  Tensor mu;
  Tensor sigma;
  Tensor inv_var;
};

// StandardGaussian ignores the stats (mu=0, sigma=1); GlobalPrior broadcasts
// the pooled row; PhonemePrior indexes per-frame ids with global fallback.
ResolvedPrior resolve_prior(const PhonemePriorStats& stats, PriorMode mode,
                            const std::vector<int>& frame_phonemes);

}  // namespace addm
