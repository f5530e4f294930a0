// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addm/rng.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Deterministic synthetic multi-speaker corpus. Each utterance is a sequence
// of phoneme prototype envelopes expanded by per-phoneme durations, passed
// through a per-speaker gain/tilt transform, plus Gaussian frame jitter, then
// range-normalized to [-4, 4] with corpus-global constants.

enum class Split { Train, Adapt, Test };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ToyPhoneme {
  int id = 0;
  Tensor envelope;  // (mel_bins)
  int min_frames = 2;
  int max_frames = 6;
};

struct ToySpeaker {
  int id = 0;
  Tensor gain;  // (mel_bins), per-bin multiplicative, within [0.5, 2.0]
  Tensor tilt;  // (mel_bins), additive
  double jitter = 0.05;
};

struct Utterance {
  int id = 0;
  int speaker = 0;
  Split split = Split::Train;
  std::vector<int> phonemes;   // per-phoneme ids
  std::vector<int> durations;  // frames per phoneme, >= 1
  Tensor mel;                  // (frames, mel_bins), normalized

  int frames() const;
  // phoneme id of every frame, size == frames()
  std::vector<int> frame_phonemes() const;
};

struct CorpusConfig {
  int train_speakers = 12;
  int utts_per_speaker = 20;
  int heldout_speakers = 3;
  int adapt_utts = 10;
  int test_utts = 10;
  int vocab = 12;
  int mel_bins = 16;
  int min_frames = 2;
  int max_frames = 6;
  int min_phonemes = 4;
  int max_phonemes = 8;
  double jitter = 0.05;
  std::uint64_t seed = 1;
};

struct Corpus {
  CorpusConfig config;
  std::vector<ToyPhoneme> phonemes;
  std::vector<ToySpeaker> speakers;  // train speakers first, then held-out
  std::vector<Utterance> utterances;
  // raw range mapped linearly onto [-4, 4]
  double norm_lo = 0.0;
  double norm_hi = 1.0;

  int num_speakers() const { return static_cast<int>(speakers.size()); }
  std::vector<const Utterance*> split_view(Split s) const;
  std::vector<const Utterance*> speaker_view(int speaker_id, Split s) const;
  std::vector<int> heldout_speaker_ids() const;
};

Corpus gen_corpus(const CorpusConfig& cfg);

// Raw (pre-normalization) mel in double precision. Consumes mel_bins normal
// draws per frame from `noise`, frame-major; the same stream that gen_corpus
// uses per utterance (streams::sub(kUtterance, utterance id)) regenerates the
// stored mel exactly after normalize_mel.
Tensor64 raw_mel(const std::vector<ToyPhoneme>& phonemes, const ToySpeaker& speaker,
                 const std::vector<int>& phoneme_ids, const std::vector<int>& durations,
                 RngStream& noise);
Tensor normalize_mel(const Tensor64& raw, double lo, double hi);

// Closed-form ridge least-squares probe from single frames onto train-speaker
// one-hots, classified by argmax. High accuracy here certifies that frames
// carry linearly recoverable speaker identity.
double linear_probe_speaker_accuracy(const Corpus& corpus);

// Directory layout: meta.ckpt (prototypes, speaker transforms, config text),
// manifest.txt (one tab-separated line per utterance), utt_NNNNN.ten (one
// tensor record per utterance, checkpoint encoding).
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace addm
