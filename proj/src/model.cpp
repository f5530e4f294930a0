// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace addm {

namespace {

std::string fmt(const char* pattern, int v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

void add_linear(ParamStore& store, const std::string& prefix, int64_t in, int64_t out,
                RngStream& rng) {
  store.add(prefix + ".w", init_linear(in, {in, out}, rng));
  store.add(prefix + ".b", Tensor::zeros({out}));
}

// Identity at init: generated gamma is exactly 1, generated beta exactly 0.
void add_cln_generators(ParamStore& store, const std::string& prefix, int64_t cond, int64_t width) {
  store.add(prefix + ".wg", Tensor::zeros({cond, width}));
  store.add(prefix + ".bg", Tensor::full({width}, 1.0f));
  store.add(prefix + ".wb", Tensor::zeros({cond, width}));
  store.add(prefix + ".bb", Tensor::zeros({width}));
}

void add_layer_norm(ParamStore& store, const std::string& prefix, int64_t width) {
  store.add(prefix + ".gamma", Tensor::full({width}, 1.0f));
  store.add(prefix + ".beta", Tensor::zeros({width}));
}

int64_t linear_count(int64_t in, int64_t out) { return in * out + out; }
int64_t attn_count(int64_t dim) { return 4 * linear_count(dim, dim); }
int64_t cln_count(int64_t cond, int64_t width) { return 2 * (cond * width + width); }

template <typename S>
int linear(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int x) {
  const int y = tape.apply(Op::Matmul, {x, params.node(prefix + ".w")});
  return tape.apply(Op::Add, {y, params.node(prefix + ".b")});
}

template <typename S>
int self_attention(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int h,
                   int64_t dim) {
  const int q = linear(tape, params, prefix + ".wq", h);
  const int k = linear(tape, params, prefix + ".wk", h);
  const int v = linear(tape, params, prefix + ".wv", h);
  OpAttrs tb;
  tb.transpose_b = true;
  const int scores = tape.apply(Op::Matmul, {q, k}, tb);
  const int64_t rows = tape.value(scores).cols();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dim)));
  const int scaled =
      tape.apply(Op::Affine, {scores, tape.constant(TensorT<S>::full({rows}, scale)),
                              tape.constant(TensorT<S>::zeros({rows}))});
  const int att = tape.apply(Op::Softmax, {scaled});
  const int ctx = tape.apply(Op::Matmul, {att, v});
  return linear(tape, params, prefix + ".wo", ctx);
}

template <typename S>
int feed_forward(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int h) {
  const int mid = tape.apply(Op::Relu, {linear(tape, params, prefix + ".fc1", h)});
  return linear(tape, params, prefix + ".fc2", mid);
}

// LN(h) rescaled by speaker-generated gamma/beta; with plain_ln the
// unparameterized norm alone.
template <typename S>
int speaker_cln(Tape<S>& tape, TapedParams<S>& params, const std::string& prefix, int h,
                int speaker_vec, bool plain_ln) {
  const int64_t c = tape.value(h).cols();
  const int ln = tape.apply(Op::LayerNorm, {h, tape.constant(TensorT<S>::full({c}, S(1))),
                                            tape.constant(TensorT<S>::zeros({c}))});
  if (plain_ln) return ln;
  const int gamma =
      tape.apply(Op::Add, {tape.apply(Op::Matmul, {speaker_vec, params.node(prefix + ".wg")}),
                           params.node(prefix + ".bg")});
  const int beta =
      tape.apply(Op::Add, {tape.apply(Op::Matmul, {speaker_vec, params.node(prefix + ".wb")}),
                           params.node(prefix + ".bb")});
  return tape.apply(Op::Affine, {ln, gamma, beta});
}

template <typename S>
int scale_scalar(Tape<S>& tape, int node, double scale) {
  return tape.apply(Op::Affine, {node, tape.constant(TensorT<S>::full({1}, static_cast<S>(scale))),
                                 tape.constant(TensorT<S>::zeros({1}))});
}

}  // namespace

DenoiserConfig ModelConfig::denoiser_config() const {
  DenoiserConfig d;
  d.blocks = denoiser_blocks;
  d.channels = denoiser_channels;
  d.kernel = denoiser_kernel;
  d.cycle = denoiser_cycle;
  d.mel_bins = mel_bins;
  d.sinusoid_dim = sinusoid_dim;
  d.step_hidden = step_hidden;
  d.block_cond_dim = block_cond_dim;
  d.enc_cond_dim = enc_dim;
  d.speaker_dim = speaker_dim;
  d.step_cln_dim = step_cln_dim;
  d.cln = cln_in_denoiser;
  return d;
}

void ModelConfig::validate() const {
  if (vocab < 2) throw std::runtime_error("model config: vocab must be >= 2");
  if (mel_bins < 1) throw std::runtime_error("model config: mel_bins must be >= 1");
  if (num_speakers < 1) throw std::runtime_error("model config: num_speakers must be >= 1");
  if (enc_dim < 1 || enc_ff < 1 || dec_ff < 1)
    throw std::runtime_error("model config: encoder/feed-forward dims must be >= 1");
  if (enc_blocks < 1) throw std::runtime_error("model config: enc_blocks must be >= 1");
  if (K < 0 || K > 4)
    throw std::runtime_error("model config: K must be in 0..4, got " + std::to_string(K));
  if (speaker_dim < 1) throw std::runtime_error("model config: speaker_dim must be >= 1");
  if (variance_floor <= 0.0) throw std::runtime_error("model config: variance_floor must be > 0");
  denoiser_config().validate();
  make_schedule(T, beta_min, beta_max);  // validates T and the beta range
}

ModelParamCounts model_count_params(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t e = cfg.enc_dim, d = cfg.mel_bins;
  ModelParamCounts c;
  c.encoder = static_cast<int64_t>(cfg.vocab) * e +
              cfg.enc_blocks * (attn_count(e) + 2 * (2 * e) + linear_count(e, cfg.enc_ff) +
                                linear_count(cfg.enc_ff, e));
  c.transformer = cfg.K * (attn_count(e) + 2 * cln_count(cfg.speaker_dim, e) +
                           linear_count(e, cfg.dec_ff) + linear_count(cfg.dec_ff, e));
  if (cfg.K >= 1) {
    c.transformer += linear_count(e, d);  // mel projection
    c.postnet = linear_count(d, e);
  }
  c.denoiser = count_params(cfg.denoiser_config()).denoiser_total();
  c.speaker_table = static_cast<int64_t>(cfg.num_speakers + 1) * cfg.speaker_dim;
  return c;
}

void init_model_params(const ModelConfig& cfg, ParamStore& store, RngStream& rng) {
  cfg.validate();
  store.add("encoder.embed",
            init_normal({cfg.vocab, cfg.enc_dim}, 1.0 / std::sqrt(cfg.enc_dim), rng));
  for (int b = 0; b < cfg.enc_blocks; ++b) {
    const std::string p = fmt("encoder.block%02d.", b);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      add_linear(store, p + w, cfg.enc_dim, cfg.enc_dim, rng);
    add_layer_norm(store, p + "ln1", cfg.enc_dim);
    add_linear(store, p + "ff.fc1", cfg.enc_dim, cfg.enc_ff, rng);
    add_linear(store, p + "ff.fc2", cfg.enc_ff, cfg.enc_dim, rng);
    add_layer_norm(store, p + "ln2", cfg.enc_dim);
  }
  for (int l = 0; l < cfg.K; ++l) {
    const std::string p = fmt("decoder.layer%02d.", l);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      add_linear(store, p + w, cfg.enc_dim, cfg.enc_dim, rng);
    add_cln_generators(store, p + "cln1", cfg.speaker_dim, cfg.enc_dim);
    add_linear(store, p + "ff.fc1", cfg.enc_dim, cfg.dec_ff, rng);
    add_linear(store, p + "ff.fc2", cfg.dec_ff, cfg.enc_dim, rng);
    add_cln_generators(store, p + "cln2", cfg.speaker_dim, cfg.enc_dim);
  }
  if (cfg.K >= 1) {
    add_linear(store, "decoder.out_proj", cfg.enc_dim, cfg.mel_bins, rng);
    add_linear(store, "postnet.cond_proj", cfg.mel_bins, cfg.enc_dim, rng);
  }
  init_denoiser_params(cfg.denoiser_config(), store, rng);
  init_speaker_table(cfg.num_speakers, cfg.speaker_dim, store, rng);
}

void attach_prior_stats(ParamStore& store, const PhonemePriorStats& stats) {
  Tensor seen({static_cast<int64_t>(stats.has_phoneme.size())});
  for (size_t i = 0; i < stats.has_phoneme.size(); ++i) seen.at(static_cast<int64_t>(i)) = stats.has_phoneme[i];
  store.add("prior.phoneme_mean", stats.phoneme_mean, false);
  store.add("prior.phoneme_var", stats.phoneme_var, false);
  store.add("prior.global_mean", stats.global_mean, false);
  store.add("prior.global_var", stats.global_var, false);
  store.add("prior.has_phoneme", seen, false);
}

PhonemePriorStats prior_stats_from_store(const ParamStore& store) {
  PhonemePriorStats stats;
  stats.phoneme_mean = store.at("prior.phoneme_mean");
  stats.phoneme_var = store.at("prior.phoneme_var");
  stats.global_mean = store.at("prior.global_mean");
  stats.global_var = store.at("prior.global_var");
  const Tensor& seen = store.at("prior.has_phoneme");
  stats.num_phonemes = static_cast<int>(seen.numel());
  stats.mel_bins = static_cast<int>(stats.global_mean.numel());
  stats.has_phoneme.resize(static_cast<size_t>(seen.numel()));
  for (int64_t i = 0; i < seen.numel(); ++i)
    stats.has_phoneme[static_cast<size_t>(i)] = seen.at(i) != 0.0f;
  return stats;
}

PhonemePriorStats estimate_corpus_prior(const Corpus& corpus, const ModelConfig& cfg) {
  const auto train = corpus.split_view(Split::Train);
  std::vector<std::vector<int>> frame_ids;
  frame_ids.reserve(train.size());
  std::vector<AlignedFrames> frames;
  frames.reserve(train.size());
  for (const Utterance* u : train) {
    frame_ids.push_back(u->frame_phonemes());
    frames.push_back(AlignedFrames{&u->mel, &frame_ids.back()});
  }
  return estimate_prior(frames, cfg.vocab, cfg.variance_floor);
}

template <typename S>
int encode_phonemes(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
                    const std::vector<int>& phoneme_ids) {
  if (phoneme_ids.empty()) throw std::runtime_error("encoder: empty phoneme sequence");
  OpAttrs lookup;
  for (int id : phoneme_ids) {
    if (id < 0 || id >= cfg.vocab)
      throw std::runtime_error("encoder: unknown phoneme id " + std::to_string(id) +
                               " (vocab " + std::to_string(cfg.vocab) + ")");
    lookup.ids.push_back(id);
  }
  const int emb = tape.apply(Op::EmbeddingLookup, {params.node("encoder.embed")}, lookup);
  TensorT<S> pos({static_cast<int64_t>(phoneme_ids.size()), cfg.enc_dim});
  for (size_t p = 0; p < phoneme_ids.size(); ++p) {
    const TensorT<S> row = cast_to<S>(step_sinusoid(static_cast<int>(p) + 1, cfg.enc_dim));
    for (int64_t i = 0; i < cfg.enc_dim; ++i) pos.at(static_cast<int64_t>(p), i) = row.at(i);
  }
  // constant-first Add keeps the result rank 2 even for single-phoneme input
  int h = tape.apply(Op::Add, {tape.constant(std::move(pos)), emb});
  for (int b = 0; b < cfg.enc_blocks; ++b) {
    const std::string p = fmt("encoder.block%02d.", b);
    int a = tape.apply(Op::Add, {h, self_attention(tape, params, p + "attn", h, cfg.enc_dim)});
    h = tape.apply(Op::LayerNorm,
                   {a, params.node(p + "ln1.gamma"), params.node(p + "ln1.beta")});
    int f = tape.apply(Op::Add, {h, feed_forward(tape, params, p + "ff", h)});
    h = tape.apply(Op::LayerNorm,
                   {f, params.node(p + "ln2.gamma"), params.node(p + "ln2.beta")});
  }
  return h;
}

template <typename S>
int length_regulate(Tape<S>& tape, int encoded, const std::vector<int>& durations) {
  const TensorT<S>& enc = tape.value(encoded);
  if (enc.rank() != 2) throw std::runtime_error("length regulation: encoding must be rank 2");
  if (static_cast<int64_t>(durations.size()) != enc.rows())
    throw std::runtime_error("length regulation: " + std::to_string(durations.size()) +
                             " durations for " + std::to_string(enc.rows()) + " phonemes");
  OpAttrs expand;
  for (size_t p = 0; p < durations.size(); ++p) {
    if (durations[p] < 1) throw std::runtime_error("length regulation: durations must be >= 1");
    for (int k = 0; k < durations[p]; ++k) expand.ids.push_back(static_cast<int64_t>(p));
  }
  if (expand.ids.size() < 2)
    throw std::runtime_error("length regulation: need at least 2 total frames");
  return tape.apply(Op::EmbeddingLookup, {encoded}, expand);
}

template <typename S>
int transformer_decode(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg, int frames,
                       int speaker_vec, bool plain_ln) {
  if (cfg.K < 1)
    throw std::runtime_error("transformer decoder: K must be >= 1 (bypass when K is 0)");
  int h = frames;
  for (int l = 0; l < cfg.K; ++l) {
    const std::string p = fmt("decoder.layer%02d.", l);
    const int a = tape.apply(Op::Add, {h, self_attention(tape, params, p + "attn", h, cfg.enc_dim)});
    h = speaker_cln(tape, params, p + "cln1", a, speaker_vec, plain_ln);
    const int f = tape.apply(Op::Add, {h, feed_forward(tape, params, p + "ff", h)});
    h = speaker_cln(tape, params, p + "cln2", f, speaker_vec, plain_ln);
  }
  return linear(tape, params, "decoder.out_proj", h);
}

template <typename S>
int utterance_loss(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
                   const Utterance& utt, int speaker_id, const PhonemePriorStats& stats,
                   const NoiseSchedule& schedule, RngStream& rng) {
  const int64_t frames = utt.frames();
  if (utt.mel.rank() != 2 || utt.mel.rows() != frames || utt.mel.cols() != cfg.mel_bins)
    throw std::runtime_error("model loss: utterance mel is " + shape_str(utt.mel) +
                             ", expected (" + std::to_string(frames) + ", " +
                             std::to_string(cfg.mel_bins) + ")");

  const int enc = encode_phonemes(tape, params, cfg, utt.phonemes);
  const int lr = length_regulate(tape, enc, utt.durations);
  const bool wants_speaker = cfg.K >= 1 || cfg.cln_in_denoiser;
  const int spk =
      wants_speaker ? params.node(speaker_param_name(speaker_id, cfg.num_speakers)) : -1;
  const ResolvedPrior prior = resolve_prior(stats, cfg.prior_mode, utt.frame_phonemes());

  int coarse = -1;
  int cond = -1;
  int mu = -1;
  if (cfg.K >= 1) {
    coarse = transformer_decode(tape, params, cfg, lr, spk);
    cond = linear(tape, params, "postnet.cond_proj", coarse);
    mu = coarse;  // the denoiser refines the coarse decoder's residual
  } else {
    cond = lr;
    mu = tape.constant(cast_to<S>(prior.mu));
  }

  const int t = static_cast<int>(rng.uniform_int(1, schedule.T));
  const Tensor eps = rng.normal_tensor({frames, cfg.mel_bins});
  const double root_abar = std::sqrt(schedule.alpha_bar(t));
  const double root_rem = std::sqrt(1.0 - schedule.alpha_bar(t));
  // z_t = root_abar * (x0 - mu) + root_rem * sigma (*) eps, with everything
  // except mu folded into one constant so prior-mean gradients flow when the
  // mean is the coarse mel.
  Tensor fixed({frames, cfg.mel_bins});
  for (int64_t i = 0; i < fixed.numel(); ++i)
    fixed.at(i) = static_cast<float>(root_abar * utt.mel.at(i) +
                                     root_rem * static_cast<double>(prior.sigma.at(i)) * eps.at(i));
  const int z_t = tape.apply(
      Op::Add,
      {tape.apply(Op::Affine,
                  {mu, tape.constant(TensorT<S>::full({cfg.mel_bins}, static_cast<S>(-root_abar))),
                   tape.constant(TensorT<S>::zeros({cfg.mel_bins}))}),
       tape.constant(cast_to<S>(fixed))});

  const int eps_hat = denoiser_forward(tape, params, cfg.denoiser_config(), z_t, cond, t,
                                       cfg.cln_in_denoiser ? spk : -1);
  // The reverse step subtracts eps_hat without rescaling, so the regression
  // target is the sigma-scaled draw; the prior weights divide sigma back out.
  Tensor sigma_eps({frames, cfg.mel_bins});
  for (int64_t i = 0; i < sigma_eps.numel(); ++i)
    sigma_eps.at(i) = prior.sigma.at(i) * eps.at(i);
  int loss = weighted_noise_loss(tape, eps_hat, cast_to<S>(sigma_eps), cast_to<S>(prior.inv_var));
  if (cfg.K >= 1) {
    const int coarse_mse = tape.apply(Op::Mse, {coarse, tape.constant(cast_to<S>(utt.mel))});
    loss = tape.apply(Op::Add, {loss, coarse_mse});
  }
  return loss;
}

template <typename S>
int batch_loss(Tape<S>& tape, TapedParams<S>& params, const ModelConfig& cfg,
               const std::vector<const Utterance*>& utts, const std::vector<int>& speaker_ids,
               const PhonemePriorStats& stats, const NoiseSchedule& schedule, RngStream& rng) {
  if (utts.empty()) throw std::runtime_error("model loss: empty batch");
  if (speaker_ids.size() != utts.size())
    throw std::runtime_error("model loss: speaker id count does not match batch size");
  int total = -1;
  for (size_t i = 0; i < utts.size(); ++i) {
    const int one =
        utterance_loss(tape, params, cfg, *utts[i], speaker_ids[i], stats, schedule, rng);
    total = i == 0 ? one : tape.apply(Op::Add, {total, one});
  }
  return scale_scalar(tape, total, 1.0 / static_cast<double>(utts.size()));
}

Tensor synthesize(const ParamStore& store, const ModelConfig& cfg,
                  const std::vector<int>& phoneme_ids, const std::vector<int>& durations,
                  int speaker_id, const PhonemePriorStats& stats, RngStream& rng) {
  cfg.validate();
  std::vector<int> frame_ids;
  for (size_t p = 0; p < phoneme_ids.size(); ++p)
    for (int k = 0; k < (p < durations.size() ? durations[p] : 0); ++k)
      frame_ids.push_back(phoneme_ids[p]);
  ResolvedPrior prior = resolve_prior(stats, cfg.prior_mode, frame_ids);

  const std::string spk_name = speaker_param_name(speaker_id, cfg.num_speakers);
  Tensor cond_frames;
  {
    Tape<float> pre;
    TapedParams<float> pp(pre, store);
    const int enc = encode_phonemes(pre, pp, cfg, phoneme_ids);
    const int lr = length_regulate(pre, enc, durations);
    if (cfg.K >= 1) {
      const int coarse = transformer_decode(pre, pp, cfg, lr, pp.node(spk_name));
      cond_frames = pre.value(linear(pre, pp, "postnet.cond_proj", coarse));
      prior.mu = pre.value(coarse);
    } else {
      cond_frames = pre.value(lr);
    }
  }

  const NoiseSchedule schedule = cfg.schedule();
  const DenoiserConfig dcfg = cfg.denoiser_config();
  const DenoiserFn denoiser = [&](const Tensor& z_t, int t) {
    Tape<float> tape;
    TapedParams<float> tp(tape, store);
    const int out = denoiser_forward(tape, tp, dcfg, tape.constant(z_t),
                                     tape.constant(cond_frames), t,
                                     dcfg.cln ? tp.node(spk_name) : -1);
    return tape.value(out);
  };
  return sample(denoiser, prior, schedule, rng);
}

template int encode_phonemes<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                                    const std::vector<int>&);
template int encode_phonemes<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                     const std::vector<int>&);
template int length_regulate<float>(Tape<float>&, int, const std::vector<int>&);
template int length_regulate<double>(Tape<double>&, int, const std::vector<int>&);
template int transformer_decode<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&, int,
                                       int, bool);
template int transformer_decode<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                        int, int, bool);
template int utterance_loss<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                                   const Utterance&, int, const PhonemePriorStats&,
                                   const NoiseSchedule&, RngStream&);
template int utterance_loss<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                    const Utterance&, int, const PhonemePriorStats&,
                                    const NoiseSchedule&, RngStream&);
template int batch_loss<float>(Tape<float>&, TapedParams<float>&, const ModelConfig&,
                               const std::vector<const Utterance*>&, const std::vector<int>&,
                               const PhonemePriorStats&, const NoiseSchedule&, RngStream&);
template int batch_loss<double>(Tape<double>&, TapedParams<double>&, const ModelConfig&,
                                const std::vector<const Utterance*>&, const std::vector<int>&,
                                const PhonemePriorStats&, const NoiseSchedule&, RngStream&);

}  // namespace addm
