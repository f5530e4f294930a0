// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "addm/corpus.hpp"
#include "addm/finetune.hpp"
#include "addm/model.hpp"
#include "addm/param_store.hpp"

namespace addm {

// Two-stage pretraining schedule. Stage 1 trains everything jointly; stage 2
// continues with the phoneme encoder frozen.
struct TrainPlan {
  int stage1 = 2000;
  int stage2 = 1000;
  int batch_frames = 256;  // utterances are drawn until this many frames
  double lr = 2e-3;

  void validate() const;  // stage1 >= stage2 > 0
};

// Speaker adaptation loop. Defaults follow the published recipe: 2000 steps
// at a fixed 2e-4 on 10 target utterances.
struct AdaptationConfig {
  int steps = 2000;
  double lr = 2e-4;
  int utterances = 10;  // upper bound on target utterances used

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_history;  // one entry per optimizer step
};

// Mean loss over the first / last `window` entries; clamps to the history
// length. Used for before/after training-curve comparisons.
double smoothed_initial_loss(const std::vector<double>& history, size_t window);
double smoothed_final_loss(const std::vector<double>& history, size_t window);

// Initializes a fresh model in `store` (which must be empty), attaches the
// corpus prior statistics, and runs both stages. After stage 1 the encoder
// parameters stay bit-identical. Throws with the step index if the loss
// stops being finite.
TrainResult pretrain(const Corpus& corpus, const ModelConfig& cfg, const TrainPlan& plan,
                     uint64_t seed, ParamStore& store);

// Resets the adaptation speaker slot to the mean of the pretrained rows.
void seed_adapt_row(ParamStore& store, const ModelConfig& cfg);

// Finetunes the adaptation speaker slot on `target` (capped at
// cfg.utterances). The slot row starts from the mean of the pretrained rows;
// only parameters selected by `set` change. The store keeps its trainable
// flags set to that mask on return.
TrainResult adapt(ParamStore& store, const ModelConfig& cfg,
                  const std::vector<const Utterance*>& target, FinetuneSet set,
                  const AdaptationConfig& acfg, uint64_t seed);

}  // namespace addm
