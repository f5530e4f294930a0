// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addm/corpus.hpp"
#include "addm/denoiser.hpp"
#include "addm/diffusion.hpp"
#include "addm/param_store.hpp"
#include "addm/prior.hpp"
#include "addm/schedule.hpp"
#include "addm/tape.hpp"

namespace addm {

// End-to-end assembly: phoneme encoder (plain layer norm, never adapted),
// length regulation by ground-truth durations, K in {0..4} transformer
// decoder layers with speaker-conditioned layer norm, and the diffusion
// denoiser as post-net. With K = 0 the denoiser conditions directly on the
// length-regulated text encoding; with K >= 1 it conditions on the coarse
// mel, which also replaces the diffusion prior mean so the denoiser refines
// the coarse decoder's output.
struct ModelConfig {
  int vocab = 12;
  int mel_bins = 16;
  int num_speakers = 12;  // embedding table rows (train speakers)

  int enc_dim = 32;
  int enc_blocks = 2;
  int enc_ff = 64;

  int K = 0;  // transformer decoder layers, 0..4
  bool cln_in_denoiser = true;
  int dec_ff = 64;
  int speaker_dim = 16;

  int T = 50;
  double beta_min = 1e-3;
  double beta_max = 0.15;
  PriorMode prior_mode = PriorMode::GlobalPrior;
  double variance_floor = 1e-4;

  int denoiser_blocks = 4;
  int denoiser_channels = 32;
  int denoiser_kernel = 3;
  int denoiser_cycle = 4;
  int sinusoid_dim = 32;
  int step_hidden = 64;
  int block_cond_dim = 64;
  int step_cln_dim = 16;

  DenoiserConfig denoiser_config() const;
  NoiseSchedule schedule() const { return make_schedule(T, beta_min, beta_max); }
  void validate() const;
};

struct ModelParamCounts {
  int64_t encoder = 0;
  int64_t transformer = 0;  // decoder layers plus the mel projection
  int64_t postnet = 0;      // coarse-mel conditioning projection (K >= 1)
  int64_t denoiser = 0;
  int64_t speaker_table = 0;

  int64_t total() const { return encoder + transformer + postnet + denoiser + speaker_table; }
};

// Closed-form counts; equals ParamStore::total_params() after init for every
// (K, cln) cell.
ModelParamCounts model_count_params(const ModelConfig& cfg);

void init_model_params(const ModelConfig& cfg, ParamStore& store, RngStream& rng);

// Prior statistics ride along in the store as non-trainable "prior.*" entries
// so checkpoints stay self-contained.
void attach_prior_stats(ParamStore& store, const PhonemePriorStats& stats);
PhonemePriorStats prior_stats_from_store(const ParamStore& store);
PhonemePriorStats estimate_corpus_prior(const Corpus& corpus, const ModelConfig& cfg);

// Phoneme ids -> (count, enc_dim) text encoding.
template <typename S>
int encode_phonemes(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
                    const std::vector<int>& phoneme_ids);

// Row p of `encoded` repeated durations[p] times, in order.
template <typename S>
int length_regulate(Tape<S>& tape, int encoded, const std::vector<int>& durations);

// K post-norm layers of (self-attention -> CLN -> feed-forward -> CLN) with
// residuals, then projection to mel bins. `plain_ln` swaps every CLN for an
// unparameterized layer norm; at identity initialization the two paths are
// bit-identical.
template <typename S>
int transformer_decode(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg, int frames,
                       int speaker_vec, bool plain_ln = false);

// Training loss for one utterance: the prior-weighted noise prediction error,
// plus the coarse-mel MSE when K >= 1. Draws one step index and one noise
// tensor from `rng` (two uniform ticks then frames*bins normal pairs).
template <typename S>
int utterance_loss(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
                   const Utterance& utt, int speaker_id, const PhonemePriorStats& stats,
                   const NoiseSchedule& schedule, RngStream& rng);

// Mean of per-utterance losses. speaker_ids[i] may differ from
// utts[i]->speaker during adaptation (the adapt slot).
template <typename S>
int batch_loss(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
               const std::vector<const Utterance*>& utts, const std::vector<int>& speaker_ids,
               const PhonemePriorStats& stats, const NoiseSchedule& schedule, RngStream& rng);

// Full reverse-diffusion synthesis. Deterministic in (store, rng state).
Tensor synthesize(const ParamStore& store, const ModelConfig& cfg,
                  const std::vector<int>& phoneme_ids, const std::vector<int>& durations,
                  int speaker_id, const PhonemePriorStats& stats, RngStream& rng);

extern template int encode_phonemes<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                                           const std::vector<int>&);
extern template int encode_phonemes<double>(Tape<double>&, TapedParams<double>&,
                                            const ModelConfig&, const std::vector<int>&);
extern template int length_regulate<float>(Tape<float>&, int, const std::vector<int>&);
extern template int length_regulate<double>(Tape<double>&, int, const std::vector<int>&);
extern template int transformer_decode<float>(Tape<float>&, TapedParams<float>&,
                                              const ModelConfig&, int, int, bool);
extern template int transformer_decode<double>(Tape<double>&, TapedParams<double>&,
                                               const ModelConfig&, int, int, bool);
extern template int utterance_loss<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                                          const Utterance&, int, const PhonemePriorStats&,
                                          const NoiseSchedule&, RngStream&);
extern template int utterance_loss<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                           const Utterance&, int, const PhonemePriorStats&,
                                           const NoiseSchedule&, RngStream&);
extern template int batch_loss<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                                      const std::vector<const Utterance*>&,
                                      const std::vector<int>&, const PhonemePriorStats&,
                                      const NoiseSchedule&, RngStream&);
extern template int batch_loss<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                       const std::vector<const Utterance*>&,
                                       const std::vector<int>&, const PhonemePriorStats&,
                                       const NoiseSchedule&, RngStream&);

}  // namespace addm
