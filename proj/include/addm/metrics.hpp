// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "addm/corpus.hpp"
#include "addm/param_store.hpp"
#include "addm/tensor.hpp"

namespace addm {

// One evaluation outcome: which finetune setting produced it, the two
// reconstruction proxies, the probe cosine, and bookkeeping.
struct MetricsRow {
  std::string setting;
  double mse = 0.0;
  double lsd = 0.0;
  double cosine = 0.0;  // in [-1, 1]
  uint64_t seed = 0;
  double runtime_s = 0.0;
};

struct ReconstructionError {
  double mse = 0.0;
  double lsd = 0.0;  // mean over frames of the RMS per-bin difference
};

// Mels are range-normalized and log-like already, so LSD needs no transform.
ReconstructionError reconstruction_error(const Tensor& pred, const Tensor& ref);

// dot(a, b) / sqrt(|a|^2 |b|^2); exactly 1 for a vector against itself.
double cosine_similarity(const Tensor& a, const Tensor& b);

// Frame classifier over train-split speakers; its mean-pooled hidden layer
// is the utterance-level speaker embedding. Must reach the accuracy gate in
// train() before embeddings may be used.
class SpeakerProbe {
 public:
  struct Config {
    int hidden = 32;
    int steps = 400;
    int batch_frames = 256;
    double lr = 1e-2;
    double min_accuracy = 0.95;
  };

  SpeakerProbe() = default;
  explicit SpeakerProbe(Config cfg) : cfg_(cfg) {}

  // Trains on every train-split frame; throws if the accuracy gate fails.
  void train(const Corpus& corpus, uint64_t seed);

  bool trained() const { return trained_; }
  double train_accuracy() const;
  int num_speakers() const { return num_speakers_; }

  // Mean-pooled hidden activations of an (L, D) mel. Errors when untrained.
  Tensor embed(const Tensor& mel) const;

 private:
  Config cfg_;
  ParamStore params_;
  int num_speakers_ = 0;
  int mel_bins_ = 0;
  double accuracy_ = 0.0;
  bool trained_ = false;
};

// Cosine between the probe embedding of `pred_mel` and the centroid of the
// target speaker's real test-split utterances.
double speaker_similarity(const SpeakerProbe& probe, const Tensor& pred_mel, int target_speaker,
                          const Corpus& corpus);

}  // namespace addm
