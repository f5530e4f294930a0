// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "addm/param_store.hpp"
#include "addm/tape.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Bidirectional dilated-convolution noise predictor. Activations are
// (frames, channels); conditioning is per-utterance (speaker, step) plus a
// frame-aligned encoder output.
struct DenoiserConfig {
  int blocks = 4;
  int channels = 32;
  int kernel = 3;
  int cycle = 4;          // dilation of block i is 2^(i mod cycle)
  int mel_bins = 16;
  int sinusoid_dim = 64;  // step encoding size, even
  int step_hidden = 128;
  int block_cond_dim = 128;
  int enc_cond_dim = 64;
  int speaker_dim = 256;
  int step_cln_dim = 256;
  bool cln = true;  // off: plain layer norm after the input conv, no speaker path

  int cln_cond_dim() const { return speaker_dim + step_cln_dim; }
  int dilation(int block) const;
  // frames farther than this from an edit are unaffected by it
  int receptive_radius() const;
  void validate() const;
};

// N=12, C=128 at 80 mel bins with 256-dim conditions throughout.
DenoiserConfig paper_scale_config();

// Exact parameter counts per group, derived from the config alone. The final
// block carries no residual conv (nothing consumes its output), which the
// blocks total reflects.
struct ParamAccounting {
  int64_t input_conv = 0;
  int64_t blocks = 0;
  int64_t output_head = 0;
  int64_t step_mlp = 0;
  int64_t cln_generators = 0;  // 0 when cln is off
  int64_t layer_norm = 0;      // 0 when cln is on
  int64_t speaker_row = 0;     // one embedding row

  int64_t denoiser_total() const {
    return input_conv + blocks + output_head + step_mlp + cln_generators + layer_norm;
  }
  int64_t finetune_spk_emb() const { return speaker_row; }
  int64_t finetune_spk_emb_cln() const { return speaker_row + cln_generators; }
  int64_t finetune_whole() const { return speaker_row + denoiser_total(); }
};

ParamAccounting count_params(const DenoiserConfig& cfg);

// Creates all "denoiser.*" parameters. CLN generators start as the exact
// identity (gamma weights 0, bias 1; beta weights 0, bias 0) so the first
// forward equals a plain layer norm bit for bit.
void init_denoiser_params(const DenoiserConfig& cfg, ParamStore& store, RngStream& rng);

// Speaker table: rows "speaker.row_000".. plus one "speaker.adapt" slot.
void init_speaker_table(int num_speakers, int dim, ParamStore& store, RngStream& rng);
constexpr int kAdaptSpeaker = -1;
std::string speaker_param_name(int speaker_id, int num_speakers);

// Geometric frequencies from 1 to 10^4 over interleaved (sin, cos) pairs;
// the lowest-frequency pair at t is (sin t, cos t).
Tensor step_sinusoid(int t, int dim);

// Node ids of the two step-embedding heads on the tape.
struct StepCond {
  int block_vec = -1;
  int cln_vec = -1;
};

template <typename S>
StepCond step_embed(Tape<S>& tape, TapedParams<S>& params, const DenoiserConfig& cfg, int t);

// h' = LN(h) * gamma(cond) + beta(cond) using the "denoiser.cln.*" generators.
template <typename S>
int cln_apply(Tape<S>& tape, TapedParams<S>& params, int h, int cond_vec);

// Full noise prediction: z_t (L, D) and cond_frames (L, enc_cond) node ids,
// speaker_vec is the speaker embedding node (ignored when cln is off, pass
// -1). Returns the (L, D) prediction node.
template <typename S>
int denoiser_forward(Tape<S>& tape, TapedParams<S>& params, const DenoiserConfig& cfg, int z_t,
                     int cond_frames, int t, int speaker_vec);

extern template StepCond step_embed<float>(Tape<float>&, TapedParams<float>&,
                                           const DenoiserConfig&, int);
extern template StepCond step_embed<double>(Tape<double>&, TapedParams<double>&,
                                            const DenoiserConfig&, int);
extern template int cln_apply<float>(Tape<float>&, TapedParams<float>&, int, int);
extern template int cln_apply<double>(Tape<double>&, TapedParams<double>&, int, int);
extern template int denoiser_forward<float>(Tape<float>&, TapedParams<float>&,
                                            const DenoiserConfig&, int, int, int, int);
extern template int denoiser_forward<double>(Tape<double>&, TapedParams<double>&,
                                             const DenoiserConfig&, int, int, int, int);

}  // namespace addm
