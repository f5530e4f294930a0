// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "addm/corpus.hpp"
#include "addm/grad_check.hpp"
#include "addm/model.hpp"
#include "addm/rng.hpp"
#include "doctest.h"

using namespace addm;

namespace {

// Small enough for finite differences, large enough that every path is live.
ModelConfig tiny_config(int K) {
  ModelConfig cfg;
  cfg.vocab = 5;
  cfg.mel_bins = 3;
  cfg.num_speakers = 2;
  cfg.enc_dim = 6;
  cfg.enc_blocks = 1;
  cfg.enc_ff = 8;
  cfg.K = K;
  cfg.dec_ff = 8;
  cfg.speaker_dim = 4;
  cfg.T = 6;
  cfg.denoiser_blocks = 2;
  cfg.denoiser_channels = 4;
  cfg.denoiser_kernel = 3;
  cfg.denoiser_cycle = 2;
  cfg.sinusoid_dim = 4;
  cfg.step_hidden = 6;
  cfg.block_cond_dim = 5;
  cfg.step_cln_dim = 4;
  return cfg;
}

ParamStore make_store(const ModelConfig& cfg, uint64_t seed) {
  ParamStore store;
  RngStream rng(seed, streams::kParamInit);
  init_model_params(cfg, store, rng);
  return store;
}

PhonemePriorStats hand_stats(int vocab, int mel_bins, uint64_t seed) {
  PhonemePriorStats stats;
  stats.num_phonemes = vocab;
  stats.mel_bins = mel_bins;
  RngStream rng(seed, 21);
  stats.phoneme_mean = rng.normal_tensor({vocab, mel_bins});
  stats.phoneme_var = Tensor({vocab, mel_bins});
  for (auto& v : stats.phoneme_var.data) {
    const float g = rng.normal_f();
    v = 0.3f + 0.5f * g * g;
  }
  stats.global_mean = rng.normal_tensor({mel_bins});
  stats.global_var = Tensor({mel_bins});
  for (auto& v : stats.global_var.data) {
    const float g = rng.normal_f();
    v = 0.4f + 0.3f * g * g;
  }
  stats.has_phoneme.assign(static_cast<size_t>(vocab), 1);
  return stats;
}

Utterance hand_utterance(const ModelConfig& cfg, uint64_t seed) {
  Utterance u;
  u.id = 0;
  u.speaker = 0;
  u.split = Split::Train;
  u.phonemes = {0, 2, 1};
  u.durations = {2, 1, 2};
  RngStream rng(seed, 22);
  u.mel = rng.normal_tensor({u.frames(), cfg.mel_bins});
  return u;
}

Tensor encode_once(const ParamStore& store, const ModelConfig& cfg, const std::vector<int>& ids) {
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  return tape.value(encode_phonemes(tape, params, cfg, ids));
}

// Mirrors the tape's layer norm: biased variance, epsilon inside the root.
void norm_rows(Tensor& x, float eps) {
  const int64_t n = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r) {
    float mu = 0;
    for (int64_t i = 0; i < n; ++i) mu += x.at(r, i);
    mu /= static_cast<float>(n);
    float var = 0;
    for (int64_t i = 0; i < n; ++i) {
      const float d = x.at(r, i) - mu;
      var += d * d;
    }
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int64_t i = 0; i < n; ++i) x.at(r, i) = (x.at(r, i) - mu) * inv;
  }
}

}  // namespace

TEST_CASE("closed-form parameter counts match construction for every decoder cell") {
  for (int K = 0; K <= 4; ++K) {
    for (bool cln : {true, false}) {
      ModelConfig cfg = tiny_config(K);
      cfg.cln_in_denoiser = cln;
      const ParamStore store = make_store(cfg, 3);
      const ModelParamCounts counts = model_count_params(cfg);
      CAPTURE(K);
      CAPTURE(cln);
      CHECK(counts.total() == store.total_params());
      CHECK(counts.speaker_table == (cfg.num_speakers + 1) * cfg.speaker_dim);
      if (K == 0) {
        CHECK(counts.transformer == 0);
        CHECK(counts.postnet == 0);
      } else {
        CHECK(counts.transformer > 0);
        CHECK(counts.postnet > 0);
      }
    }
  }
  const ModelConfig defaults;
  const ParamStore store = make_store(defaults, 4);
  CHECK(model_count_params(defaults).total() == store.total_params());
}

TEST_CASE("config validation rejects out-of-range settings") {
  ModelConfig bad = tiny_config(0);
  bad.vocab = 1;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("vocab"), std::runtime_error);
  bad = tiny_config(0);
  bad.K = 5;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("K must be in 0..4"),
                       std::runtime_error);
  bad = tiny_config(0);
  bad.variance_floor = 0.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("variance_floor"), std::runtime_error);
}

TEST_CASE("encoder emits one row per phoneme, deterministically") {
  const ModelConfig cfg = tiny_config(0);
  const ParamStore store = make_store(cfg, 5);
  const std::vector<int> ids = {0, 3, 1, 1, 4};
  const Tensor a = encode_once(store, cfg, ids);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == cfg.enc_dim);
  CHECK(a.all_finite());
  CHECK(bit_equal(a, encode_once(store, cfg, ids)));

  const Tensor single = encode_once(store, cfg, {2});
  CHECK(single.rank() == 2);
  CHECK(single.rows() == 1);
}

TEST_CASE("encoder is sensitive to phoneme order and content") {
  const ModelConfig cfg = tiny_config(0);
  const ParamStore store = make_store(cfg, 5);
  const Tensor a = encode_once(store, cfg, {0, 3, 1, 4});
  const Tensor swapped = encode_once(store, cfg, {3, 0, 1, 4});
  const Tensor replaced = encode_once(store, cfg, {0, 3, 1, 2});
  CHECK_FALSE(bit_equal(a, swapped));
  CHECK_FALSE(bit_equal(a, replaced));
}

TEST_CASE("encoder rejects ids outside the vocabulary") {
  const ModelConfig cfg = tiny_config(0);
  const ParamStore store = make_store(cfg, 5);
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  CHECK_THROWS_WITH_AS(encode_phonemes(tape, params, cfg, {0, cfg.vocab}),
                       doctest::Contains("unknown phoneme id"), std::runtime_error);
  CHECK_THROWS_WITH_AS(encode_phonemes(tape, params, cfg, {-1}),
                       doctest::Contains("unknown phoneme id"), std::runtime_error);
}

TEST_CASE("length regulation repeats rows in order") {
  const ModelConfig cfg = tiny_config(0);
  const ParamStore store = make_store(cfg, 6);
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  const int enc = encode_phonemes(tape, params, cfg, {0, 1, 2});
  const Tensor& e = tape.value(enc);

  SUBCASE("durations of one copy the input") {
    const Tensor out = tape.value(length_regulate(tape, enc, {1, 1, 1}));
    CHECK(bit_equal(out, e));
  }
  SUBCASE("pattern [2,3] expands to AABBB") {
    const int two = encode_phonemes(tape, params, cfg, {0, 1});
    const Tensor& e2 = tape.value(two);
    const Tensor out = tape.value(length_regulate(tape, two, {2, 3}));
    REQUIRE(out.rows() == 5);
    for (int64_t c = 0; c < e2.cols(); ++c) {
      CHECK(out.at(0, c) == e2.at(0, c));
      CHECK(out.at(1, c) == e2.at(0, c));
      CHECK(out.at(2, c) == e2.at(1, c));
      CHECK(out.at(3, c) == e2.at(1, c));
      CHECK(out.at(4, c) == e2.at(1, c));
    }
  }
  SUBCASE("total frames equal the duration sum") {
    RngStream rng(9, 23);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<int> durations = {static_cast<int>(rng.uniform_int(1, 4)),
                                    static_cast<int>(rng.uniform_int(1, 4)),
                                    static_cast<int>(rng.uniform_int(1, 4))};
      const int total = durations[0] + durations[1] + durations[2];
      CHECK(tape.value(length_regulate(tape, enc, durations)).rows() == total);
    }
  }
  SUBCASE("mismatched or degenerate durations are rejected") {
    CHECK_THROWS_WITH_AS(length_regulate(tape, enc, {1, 1}),
                         doctest::Contains("2 durations for 3 phonemes"), std::runtime_error);
    CHECK_THROWS_WITH_AS(length_regulate(tape, enc, {1, 0, 1}),
                         doctest::Contains("durations must be >= 1"), std::runtime_error);
  }
}

TEST_CASE("transformer decoder requires at least one layer") {
  const ModelConfig cfg = tiny_config(0);
  const ParamStore store = make_store(cfg, 6);
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  const int frames = tape.constant(Tensor::zeros({4, cfg.enc_dim}));
  CHECK_THROWS_WITH_AS(transformer_decode(tape, params, cfg, frames, -1),
                       doctest::Contains("K must be >= 1"), std::runtime_error);
}

TEST_CASE("zeroed sublayers reduce the decoder to a projection of the normalized input") {
  const ModelConfig cfg = tiny_config(2);
  ParamStore store = make_store(cfg, 7);
  for (const auto& name : store.names()) {
    if (name.rfind("decoder.layer", 0) == 0 &&
        (name.find(".attn.") != std::string::npos || name.find(".ff.") != std::string::npos))
      for (auto& v : store.at(name).data) v = 0.0f;
  }
  RngStream rng(8, 24);
  const Tensor frames = rng.normal_tensor({4, cfg.enc_dim});
  const Tensor spk = rng.normal_tensor({cfg.speaker_dim});

  Tape<float> tape;
  TapedParams<float> params(tape, store);
  const Tensor out = tape.value(
      transformer_decode(tape, params, cfg, tape.constant(frames), tape.constant(spk)));

  // Residuals pass the input through untouched; each of the 2K identity CLNs
  // is a plain row normalization, and only the final projection mixes bins.
  Tensor h = frames;
  for (int i = 0; i < 2 * cfg.K; ++i) norm_rows(h, 1e-5f);
  const Tensor& w = store.at("decoder.out_proj.w");
  const Tensor& b = store.at("decoder.out_proj.b");
  REQUIRE(out.rows() == 4);
  REQUIRE(out.cols() == cfg.mel_bins);
  for (int64_t r = 0; r < out.rows(); ++r) {
    for (int64_t c = 0; c < out.cols(); ++c) {
      double want = b.at(c);
      for (int64_t k = 0; k < h.cols(); ++k) want += h.at(r, k) * w.at(k, c);
      CHECK(out.at(r, c) == doctest::Approx(want).epsilon(1e-5));
    }
  }
}

TEST_CASE("speaker-conditioned norm at identity init equals plain layer norm bit-exactly") {
  const ModelConfig cfg = tiny_config(3);
  const ParamStore store = make_store(cfg, 9);
  RngStream rng(10, 25);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor frames = rng.normal_tensor({3, cfg.enc_dim});
    const Tensor spk = rng.normal_tensor({cfg.speaker_dim});
    Tape<float> with_cln;
    TapedParams<float> pc(with_cln, store);
    const Tensor a = with_cln.value(transformer_decode(
        with_cln, pc, cfg, with_cln.constant(frames), with_cln.constant(spk)));
    Tape<float> with_ln;
    TapedParams<float> pl(with_ln, store);
    const Tensor b = with_ln.value(transformer_decode(
        with_ln, pl, cfg, with_ln.constant(frames), -1, /*plain_ln=*/true));
    CHECK(bit_equal(a, b));
  }
}

TEST_CASE("one decoder layer passes a finite-difference gradient check") {
  const ModelConfig cfg = tiny_config(1);
  const ParamStore store = make_store(cfg, 11);
  RngStream rng(12, 26);
  const Tensor64 frames = widen(rng.normal_tensor({4, cfg.enc_dim}));
  const Tensor64 target = widen(rng.normal_tensor({4, cfg.mel_bins}));

  Point64 point;
  RngStream jitter(13, 27);
  for (const auto& name : store.names())
    if (name.rfind("decoder.", 0) == 0 || name == "speaker.row_000") {
      Tensor64 v = widen(store.at(name));
      for (auto& x : v.data) x += 0.05 * jitter.normal();
      point[name] = std::move(v);
    }

  const LossFn64 f = [&](const Point64& p, GradMap64* grads) {
    Tape<double> tape;
    TapedParams<double> params(tape, store);
    for (const auto& kv : p) params.override_value(kv.first, kv.second);
    if (grads) params.track_all();
    const int out = transformer_decode(tape, params, cfg, tape.constant(frames),
                                       params.node("speaker.row_000"));
    const int loss = tape.apply(Op::Mse, {out, tape.constant(target)});
    const double value = tape.value(loss).data[0];
    if (grads) {
      tape.backward(loss);
      *grads = collect_grads(tape, params.used());
    }
    return value;
  };
  const GradCheckReport rep = grad_check(f, point, 1e-5);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("utterance loss agrees with finite differences end to end") {
  for (int K : {0, 1}) {
    const ModelConfig cfg = tiny_config(K);
    const ParamStore store = make_store(cfg, 14 + static_cast<uint64_t>(K));
    const PhonemePriorStats stats = hand_stats(cfg.vocab, cfg.mel_bins, 15);
    const Utterance utt = hand_utterance(cfg, 16);
    const NoiseSchedule schedule = cfg.schedule();

    Point64 point;
    RngStream jitter(17, 28);
    for (const auto& name : store.names()) {
      if (name.rfind("speaker.", 0) == 0 && name != "speaker.row_000") continue;
      Tensor64 v = widen(store.at(name));
      for (auto& x : v.data) x += 0.05 * jitter.normal();
      point[name] = std::move(v);
    }

    const LossFn64 f = [&](const Point64& p, GradMap64* grads) {
      Tape<double> tape;
      TapedParams<double> params(tape, store);
      for (const auto& kv : p) params.override_value(kv.first, kv.second);
      if (grads) params.track_all();
      RngStream noise(18, streams::kTrainNoise);
      const int loss = utterance_loss(tape, params, cfg, utt, 0, stats, schedule, noise);
      const double value = tape.value(loss).data[0];
      if (grads) {
        tape.backward(loss);
        *grads = collect_grads(tape, params.used());
      }
      return value;
    };
    const GradCheckReport rep = grad_check(f, point, 1e-5, /*max_coords_per_param=*/4);
    CAPTURE(K);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("batch loss is the mean of per-utterance losses") {
  const ModelConfig cfg = tiny_config(1);
  const ParamStore store = make_store(cfg, 19);
  const PhonemePriorStats stats = hand_stats(cfg.vocab, cfg.mel_bins, 20);
  const NoiseSchedule schedule = cfg.schedule();
  Utterance u0 = hand_utterance(cfg, 21);
  Utterance u1 = hand_utterance(cfg, 22);
  u1.phonemes = {4, 0};
  u1.durations = {3, 2};
  RngStream mel_rng(23, 29);
  u1.mel = mel_rng.normal_tensor({u1.frames(), cfg.mel_bins});

  RngStream batch_rng(24, streams::kTrainNoise);
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  const double batch = tape.value(batch_loss(tape, params, cfg, {&u0, &u1}, {0, 1}, stats,
                                             schedule, batch_rng))
                           .data[0];

  RngStream manual_rng(24, streams::kTrainNoise);
  Tape<float> t0;
  TapedParams<float> p0(t0, store);
  const double l0 =
      t0.value(utterance_loss(t0, p0, cfg, u0, 0, stats, schedule, manual_rng)).data[0];
  Tape<float> t1;
  TapedParams<float> p1(t1, store);
  const double l1 =
      t1.value(utterance_loss(t1, p1, cfg, u1, 1, stats, schedule, manual_rng)).data[0];
  CHECK(batch == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-5));
}

TEST_CASE("loss graph has no speaker dependence when nothing consumes the embedding") {
  ModelConfig cfg = tiny_config(0);
  cfg.cln_in_denoiser = false;
  const ParamStore store = make_store(cfg, 25);
  const PhonemePriorStats stats = hand_stats(cfg.vocab, cfg.mel_bins, 26);
  const Utterance utt = hand_utterance(cfg, 27);
  RngStream noise(28, streams::kTrainNoise);
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  params.track_all();
  const int loss =
      utterance_loss(tape, params, cfg, utt, 0, stats, cfg.schedule(), noise);
  CHECK(std::isfinite(tape.value(loss).data[0]));
  for (const auto& kv : params.used()) CHECK(kv.first.rfind("speaker.", 0) != 0);
}

TEST_CASE("synthesis is deterministic, finite, and correctly shaped") {
  for (int K : {0, 2}) {
    const ModelConfig cfg = tiny_config(K);
    const ParamStore store = make_store(cfg, 29);
    const PhonemePriorStats stats = hand_stats(cfg.vocab, cfg.mel_bins, 30);
    const std::vector<int> ids = {1, 4, 0};
    const std::vector<int> durations = {2, 2, 3};

    RngStream r1(31, streams::kSampler);
    const Tensor a = synthesize(store, cfg, ids, durations, 0, stats, r1);
    RngStream r2(31, streams::kSampler);
    const Tensor b = synthesize(store, cfg, ids, durations, 0, stats, r2);
    RngStream r3(32, streams::kSampler);
    const Tensor c = synthesize(store, cfg, ids, durations, 0, stats, r3);

    CAPTURE(K);
    CHECK(a.rows() == 7);
    CHECK(a.cols() == cfg.mel_bins);
    CHECK(a.all_finite());
    CHECK(bit_equal(a, b));
    CHECK_FALSE(bit_equal(a, c));
  }
}

TEST_CASE("prior statistics round-trip through the parameter store") {
  const PhonemePriorStats stats = hand_stats(4, 3, 33);
  ParamStore store;
  attach_prior_stats(store, stats);
  CHECK_FALSE(store.is_trainable("prior.global_mean"));
  CHECK_FALSE(store.is_trainable("prior.phoneme_var"));
  const PhonemePriorStats back = prior_stats_from_store(store);
  CHECK(back.num_phonemes == stats.num_phonemes);
  CHECK(back.mel_bins == stats.mel_bins);
  CHECK(bit_equal(back.phoneme_mean, stats.phoneme_mean));
  CHECK(bit_equal(back.phoneme_var, stats.phoneme_var));
  CHECK(bit_equal(back.global_mean, stats.global_mean));
  CHECK(bit_equal(back.global_var, stats.global_var));
  CHECK(back.has_phoneme == stats.has_phoneme);
}

TEST_CASE("corpus prior covers every phoneme of the default corpus") {
  CorpusConfig cc;
  cc.train_speakers = 4;
  cc.utts_per_speaker = 3;
  cc.heldout_speakers = 2;
  cc.adapt_utts = 2;
  cc.test_utts = 2;
  cc.vocab = 5;
  cc.mel_bins = 8;
  cc.seed = 11;
  const Corpus corpus = gen_corpus(cc);
  ModelConfig cfg = tiny_config(0);
  cfg.vocab = cc.vocab;
  cfg.mel_bins = cc.mel_bins;
  const PhonemePriorStats stats = estimate_corpus_prior(corpus, cfg);
  CHECK(stats.num_phonemes == cc.vocab);
  CHECK(stats.mel_bins == cc.mel_bins);
  for (int v = 0; v < cc.vocab; ++v) CHECK(stats.has_phoneme[static_cast<size_t>(v)] == 1);
  for (const float v : stats.global_var.data) CHECK(v >= cfg.variance_floor);
}
