// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace addm {

namespace {
std::string block_prefix(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "denoiser.block%02d.", i);
  return buf;
}

void add_linear(ParamStore& store, const std::string& prefix, int64_t in, int64_t out,
                RngStream& rng) {
  store.add(prefix + ".w", init_linear(in, {in, out}, rng));
  store.add(prefix + ".b", Tensor::zeros({out}));
}

void add_conv(ParamStore& store, const std::string& prefix, int64_t cin, int64_t cout, int64_t k,
              RngStream& rng) {
  store.add(prefix + ".w", init_linear(cin * k, {cout, cin, k}, rng));
  store.add(prefix + ".b", Tensor::zeros({cout}));
}
}  // namespace

int DenoiserConfig::dilation(int block) const { return 1 << (block % cycle); }

int DenoiserConfig::receptive_radius() const {
  int r = 0;
  for (int i = 0; i < blocks; ++i) r += dilation(i) * (kernel - 1) / 2;
  return r;
}

void DenoiserConfig::validate() const {
  if (blocks < 1) throw std::runtime_error("denoiser config: blocks must be >= 1");
  if (channels < 1) throw std::runtime_error("denoiser config: channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0)
    throw std::runtime_error("denoiser config: kernel must be odd and >= 1");
  if (cycle < 1) throw std::runtime_error("denoiser config: cycle must be >= 1");
  if (mel_bins < 1) throw std::runtime_error("denoiser config: mel_bins must be >= 1");
  if (sinusoid_dim < 2 || sinusoid_dim % 2 != 0)
    throw std::runtime_error("denoiser config: sinusoid_dim must be even and >= 2");
  if (step_hidden < 1 || block_cond_dim < 1 || enc_cond_dim < 1 || speaker_dim < 1 ||
      step_cln_dim < 1)
    throw std::runtime_error("denoiser config: dims must be >= 1");
}

DenoiserConfig paper_scale_config() {
  DenoiserConfig cfg;
  cfg.blocks = 12;
  cfg.channels = 128;
  cfg.kernel = 3;
  cfg.cycle = 4;
  cfg.mel_bins = 80;
  cfg.sinusoid_dim = 128;
  cfg.step_hidden = 256;
  cfg.block_cond_dim = 256;
  cfg.enc_cond_dim = 256;
  cfg.speaker_dim = 256;
  cfg.step_cln_dim = 256;
  cfg.cln = true;
  return cfg;
}

ParamAccounting count_params(const DenoiserConfig& cfg) {
  cfg.validate();
  const int64_t c = cfg.channels, d = cfg.mel_bins, k = cfg.kernel;
  ParamAccounting a;
  a.input_conv = c * d * 1 + c;
  const int64_t dil = 2 * c * c * k + 2 * c;
  const int64_t stepproj = static_cast<int64_t>(cfg.block_cond_dim) * 2 * c + 2 * c;
  const int64_t condconv = 2 * c * cfg.enc_cond_dim + 2 * c;
  const int64_t one_by_one = c * c + c;
  a.blocks = cfg.blocks * (dil + stepproj + condconv + one_by_one /*skip*/) +
             (cfg.blocks - 1) * one_by_one /*res, absent in the final block*/;
  a.output_head = (c * c + c) + (d * c + d);
  a.step_mlp = (static_cast<int64_t>(cfg.sinusoid_dim) * cfg.step_hidden + cfg.step_hidden) +
               (static_cast<int64_t>(cfg.step_hidden) * cfg.step_hidden + cfg.step_hidden) +
               (static_cast<int64_t>(cfg.step_hidden) * cfg.block_cond_dim + cfg.block_cond_dim);
  if (cfg.cln) {
    a.step_mlp += static_cast<int64_t>(cfg.step_hidden) * cfg.step_cln_dim + cfg.step_cln_dim;
    a.cln_generators = 2 * (static_cast<int64_t>(cfg.cln_cond_dim()) * c + c);
  } else {
    a.layer_norm = 2 * c;
  }
  a.speaker_row = cfg.speaker_dim;
  return a;
}

void init_denoiser_params(const DenoiserConfig& cfg, ParamStore& store, RngStream& rng) {
  cfg.validate();
  const int64_t c = cfg.channels, d = cfg.mel_bins;
  add_conv(store, "denoiser.input_conv", d, c, 1, rng);
  if (cfg.cln) {
    const int64_t cond = cfg.cln_cond_dim();
    store.add("denoiser.cln.wg", Tensor::zeros({cond, c}));
    store.add("denoiser.cln.bg", Tensor::full({c}, 1.0f));
    store.add("denoiser.cln.wb", Tensor::zeros({cond, c}));
    store.add("denoiser.cln.bb", Tensor::zeros({c}));
  } else {
    store.add("denoiser.ln.gamma", Tensor::full({c}, 1.0f));
    store.add("denoiser.ln.beta", Tensor::zeros({c}));
  }
  add_linear(store, "denoiser.step.mlp1", cfg.sinusoid_dim, cfg.step_hidden, rng);
  add_linear(store, "denoiser.step.mlp2", cfg.step_hidden, cfg.step_hidden, rng);
  add_linear(store, "denoiser.step.head_block", cfg.step_hidden, cfg.block_cond_dim, rng);
  if (cfg.cln) add_linear(store, "denoiser.step.head_cln", cfg.step_hidden, cfg.step_cln_dim, rng);
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string p = block_prefix(i);
    add_conv(store, p + "dil", c, 2 * c, cfg.kernel, rng);
    add_linear(store, p + "stepproj", cfg.block_cond_dim, 2 * c, rng);
    add_conv(store, p + "cond", cfg.enc_cond_dim, 2 * c, 1, rng);
    if (i + 1 < cfg.blocks) add_conv(store, p + "res", c, c, 1, rng);
    add_conv(store, p + "skip", c, c, 1, rng);
  }
  add_conv(store, "denoiser.head.conv1", c, c, 1, rng);
  add_conv(store, "denoiser.head.conv2", c, d, 1, rng);
}

void init_speaker_table(int num_speakers, int dim, ParamStore& store, RngStream& rng) {
  if (num_speakers < 1) throw std::runtime_error("speaker table: need at least one speaker");
  for (int i = 0; i < num_speakers; ++i)
    store.add(speaker_param_name(i, num_speakers), init_normal({dim}, 0.1, rng));
  store.add("speaker.adapt", Tensor::zeros({dim}));
}

std::string speaker_param_name(int speaker_id, int num_speakers) {
  if (speaker_id == kAdaptSpeaker) return "speaker.adapt";
  if (speaker_id < 0 || speaker_id >= num_speakers)
    throw std::runtime_error("unknown speaker id " + std::to_string(speaker_id) +
                             " (table has " + std::to_string(num_speakers) + " rows)");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "speaker.row_%03d", speaker_id);
  return buf;
}

Tensor step_sinusoid(int t, int dim) {
  if (t < 1) throw std::runtime_error("step_sinusoid: t must be >= 1, got " + std::to_string(t));
  if (dim < 2 || dim % 2 != 0) throw std::runtime_error("step_sinusoid: dim must be even >= 2");
  const int half = dim / 2;
  Tensor enc({dim});
  for (int j = 0; j < half; ++j) {
    const double freq =
        half == 1 ? 1.0 : std::pow(10000.0, static_cast<double>(j) / (half - 1));
    enc.at(2 * j) = static_cast<float>(std::sin(t * freq));
    enc.at(2 * j + 1) = static_cast<float>(std::cos(t * freq));
  }
  return enc;
}

namespace {
template <typename S>
int linear(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int x) {
  const int y = tape.apply(Op::Matmul, {x, params.node(prefix + ".w")});
  return tape.apply(Op::Add, {y, params.node(prefix + ".b")});
}

template <typename S>
int conv(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int x,
         int64_t dilation = 1) {
  OpAttrs attrs;
  attrs.dilation = dilation;
  return tape.apply(Op::Conv1d, {x, params.node(prefix + ".w"), params.node(prefix + ".b")},
                    attrs);
}
}  // namespace

template <typename S>
StepCond step_embed(Tape<S>& tape, TapedParams<S>& params, const DenoiserConfig& cfg, int t) {
  const int enc = tape.constant(cast_to<S>(step_sinusoid(t, cfg.sinusoid_dim)));
  const int h1 = tape.apply(Op::Tanh, {linear(tape, params, "denoiser.step.mlp1", enc)});
  const int h2 = tape.apply(Op::Tanh, {linear(tape, params, "denoiser.step.mlp2", h1)});
  StepCond out;
  out.block_vec = linear(tape, params, "denoiser.step.head_block", h2);
  if (cfg.cln) out.cln_vec = linear(tape, params, "denoiser.step.head_cln", h2);
  return out;
}

template <typename S>
int cln_apply(Tape<S>& tape, TapedParams<S>& params, int h, int cond_vec) {
  const int64_t c = tape.value(h).cols();
  const int ln = tape.apply(
      Op::LayerNorm, {h, tape.constant(TensorT<S>::full({c}, S(1))),
                      tape.constant(TensorT<S>::zeros({c}))});
  const int gamma = tape.apply(
      Op::Add, {tape.apply(Op::Matmul, {cond_vec, params.node("denoiser.cln.wg")}),
                params.node("denoiser.cln.bg")});
  const int beta = tape.apply(
      Op::Add, {tape.apply(Op::Matmul, {cond_vec, params.node("denoiser.cln.wb")}),
                params.node("denoiser.cln.bb")});
  return tape.apply(Op::Affine, {ln, gamma, beta});
}

template <typename S>
int denoiser_forward(Tape<S>& tape, TapedParams<S>& params, const DenoiserConfig& cfg, int z_t,
                     int cond_frames, int t, int speaker_vec) {
  cfg.validate();
  const TensorT<S>& z = tape.value(z_t);
  const TensorT<S>& cond = tape.value(cond_frames);
  if (z.rank() != 2 || z.cols() != cfg.mel_bins)
    throw std::runtime_error("denoiser: input must be (frames, " +
                             std::to_string(cfg.mel_bins) + "), got " + shape_str(z));
  if (cond.rank() != 2 || cond.cols() != cfg.enc_cond_dim)
    throw std::runtime_error("denoiser: condition must be (frames, " +
                             std::to_string(cfg.enc_cond_dim) + "), got " + shape_str(cond));
  if (z.rows() != cond.rows())
    throw std::runtime_error("denoiser: length mismatch between input " + shape_str(z) +
                             " and condition " + shape_str(cond));

  const StepCond step = step_embed(tape, params, cfg, t);
  int x = conv(tape, params, "denoiser.input_conv", z_t);
  if (cfg.cln) {
    if (speaker_vec < 0) throw std::runtime_error("denoiser: cln requires a speaker embedding");
    const TensorT<S>& spk = tape.value(speaker_vec);
    if (spk.rank() != 1 || spk.numel() != cfg.speaker_dim)
      throw std::runtime_error("denoiser: speaker embedding must be (" +
                               std::to_string(cfg.speaker_dim) + "), got " + shape_str(spk));
    const int cond_vec = tape.apply(Op::Concat, {speaker_vec, step.cln_vec});
    x = cln_apply(tape, params, x, cond_vec);
  } else {
    x = tape.apply(Op::LayerNorm, {x, params.node("denoiser.ln.gamma"),
                                   params.node("denoiser.ln.beta")});
  }

  int skip_sum = -1;
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string p = block_prefix(i);
    int y = conv(tape, params, p + "dil", x, cfg.dilation(i));
    y = tape.apply(Op::Add, {y, linear(tape, params, p + "stepproj", step.block_vec)});
    y = tape.apply(Op::Add, {y, conv(tape, params, p + "cond", cond_frames)});
    const int g = tape.apply(Op::GatedTanhSigmoid, {y});
    const int skip = conv(tape, params, p + "skip", g);
    skip_sum = i == 0 ? skip : tape.apply(Op::Add, {skip_sum, skip});
    if (i + 1 < cfg.blocks) x = tape.apply(Op::Add, {x, conv(tape, params, p + "res", g)});
  }

  const int64_t c = cfg.channels;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(cfg.blocks)));
  int h = tape.apply(Op::Affine, {skip_sum, tape.constant(TensorT<S>::full({c}, scale)),
                                  tape.constant(TensorT<S>::zeros({c}))});
  h = tape.apply(Op::Relu, {h});
  h = conv(tape, params, "denoiser.head.conv1", h);
  h = tape.apply(Op::Relu, {h});
  return conv(tape, params, "denoiser.head.conv2", h);
}

template StepCond step_embed<float>(Tape<float>&, TapedParams<float>&, const DenoiserConfig&, int);
template StepCond step_embed<double>(Tape<double>&, TapedParams<double>&, const DenoiserConfig&,
                                     int);
template int cln_apply<float>(Tape<float>&, TapedParams<float>&, int, int);
template int cln_apply<double>(Tape<double>&, TapedParams<double>&, int, int);
template int denoiser_forward<float>(Tape<float>&, TapedParams<float>&, const DenoiserConfig&,
                                     int, int, int, int);
template int denoiser_forward<double>(Tape<double>&, TapedParams<double>&, const DenoiserConfig&,
                                      int, int, int, int);

}  // namespace addm
