// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "addm/adam.hpp"
#include "addm/rng.hpp"
#include "addm/tape.hpp"

namespace addm {

ReconstructionError reconstruction_error(const Tensor& pred, const Tensor& ref) {
  if (!pred.same_shape(ref))
    throw std::runtime_error("reconstruction error: shapes " + shape_str(pred) + " and " +
                             shape_str(ref) + " differ");
  if (pred.rank() != 2) throw std::runtime_error("reconstruction error: mels must be rank 2");
  ReconstructionError out;
  const int64_t frames = pred.rows(), bins = pred.cols();
  for (int64_t f = 0; f < frames; ++f) {
    double frame_sq = 0.0;
    for (int64_t b = 0; b < bins; ++b) {
      const double d = static_cast<double>(pred.at(f, b)) - static_cast<double>(ref.at(f, b));
      frame_sq += d * d;
    }
    out.mse += frame_sq;
    out.lsd += std::sqrt(frame_sq / static_cast<double>(bins));
  }
  out.mse /= static_cast<double>(frames * bins);
  out.lsd /= static_cast<double>(frames);
  return out;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::runtime_error("cosine: shapes " + shape_str(a) + " and " + shape_str(b) +
                             " differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += static_cast<double>(a.at(i)) * b.at(i);
    na += static_cast<double>(a.at(i)) * a.at(i);
    nb += static_cast<double>(b.at(i)) * b.at(i);
  }
  if (na == 0.0 || nb == 0.0) throw std::runtime_error("cosine: zero-norm embedding");
  return dot / std::sqrt(na * nb);
}

namespace {

// All train-split frames stacked to (N, D) with per-frame speaker labels.
void collect_frames(const Corpus& corpus, Tensor* frames, std::vector<int>* labels) {
  int64_t total = 0;
  for (const Utterance* u : corpus.split_view(Split::Train)) total += u->frames();
  *frames = Tensor({total, corpus.config.mel_bins});
  labels->clear();
  labels->reserve(static_cast<size_t>(total));
  int64_t row = 0;
  for (const Utterance* u : corpus.split_view(Split::Train)) {
    for (int64_t f = 0; f < u->frames(); ++f, ++row) {
      for (int64_t b = 0; b < corpus.config.mel_bins; ++b)
        frames->at(row, b) = u->mel.at(f, b);
      labels->push_back(u->speaker);
    }
  }
}

}  // namespace

void SpeakerProbe::train(const Corpus& corpus, uint64_t seed) {
  if (cfg_.hidden < 1 || cfg_.steps < 1 || cfg_.batch_frames < 1)
    throw std::runtime_error("speaker probe: invalid config");
  num_speakers_ = corpus.config.train_speakers;
  mel_bins_ = corpus.config.mel_bins;

  Tensor frames;
  std::vector<int> labels;
  collect_frames(corpus, &frames, &labels);
  const int64_t n = frames.rows();
  if (n == 0) throw std::runtime_error("speaker probe: corpus has no training frames");

  params_ = ParamStore();
  RngStream rng(seed, streams::kProbe);
  params_.add("probe.fc1.w", init_linear(mel_bins_, {mel_bins_, cfg_.hidden}, rng));
  params_.add("probe.fc1.b", Tensor::zeros({cfg_.hidden}));
  params_.add("probe.fc2.w", init_linear(cfg_.hidden, {cfg_.hidden, num_speakers_}, rng));
  params_.add("probe.fc2.b", Tensor::zeros({num_speakers_}));

  Adam::Config ocfg;
  ocfg.lr = cfg_.lr;
  Adam opt(ocfg);
  for (int step = 1; step <= cfg_.steps; ++step) {
    const int64_t batch = std::min<int64_t>(cfg_.batch_frames, n);
    Tensor x({batch, mel_bins_});
    Tensor onehot = Tensor::zeros({batch, num_speakers_});
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t pick = rng.uniform_int(0, n - 1);
      for (int64_t b = 0; b < mel_bins_; ++b) x.at(i, b) = frames.at(pick, b);
      onehot.at(i, labels[static_cast<size_t>(pick)]) = 1.0f;
    }
    Tape<float> tape;
    TapedParams<float> params(tape, params_);
    params.track_all();
    const int h = tape.apply(
        Op::Tanh, {tape.apply(Op::Add, {tape.apply(Op::Matmul, {tape.constant(std::move(x)),
                                                                params.node("probe.fc1.w")}),
                                        params.node("probe.fc1.b")})});
    const int logits = tape.apply(
        Op::Add, {tape.apply(Op::Matmul, {h, params.node("probe.fc2.w")}),
                  params.node("probe.fc2.b")});
    const int loss = tape.apply(Op::Mse, {logits, tape.constant(std::move(onehot))});
    if (!std::isfinite(tape.value(loss).data[0]))
      throw std::runtime_error("speaker probe diverged at step " + std::to_string(step));
    tape.backward(loss);
    opt.step(params_, collect_grads(tape, params.used()), step);
  }
  trained_ = true;

  int64_t correct = 0;
  for (int64_t f = 0; f < n; ++f) {
    Tensor row({1, mel_bins_});
    for (int64_t b = 0; b < mel_bins_; ++b) row.at(0, b) = frames.at(f, b);
    const Tensor e = embed(row);
    const Tensor& w2 = params_.at("probe.fc2.w");
    const Tensor& b2 = params_.at("probe.fc2.b");
    int best = 0;
    double best_score = -1e300;
    for (int s = 0; s < num_speakers_; ++s) {
      double score = b2.at(s);
      for (int64_t k = 0; k < cfg_.hidden; ++k) score += static_cast<double>(e.at(k)) * w2.at(k, s);
      if (score > best_score) {
        best_score = score;
        best = s;
      }
    }
    if (best == labels[static_cast<size_t>(f)]) ++correct;
  }
  accuracy_ = static_cast<double>(correct) / static_cast<double>(n);
  if (accuracy_ < cfg_.min_accuracy) {
    trained_ = false;
    throw std::runtime_error("speaker probe reached " + std::to_string(accuracy_) +
                             " train accuracy, below the " + std::to_string(cfg_.min_accuracy) +
                             " gate");
  }
}

double SpeakerProbe::train_accuracy() const {
  if (!trained_) throw std::runtime_error("speaker probe: not trained");
  return accuracy_;
}

Tensor SpeakerProbe::embed(const Tensor& mel) const {
  if (!trained_) throw std::runtime_error("speaker probe: not trained");
  if (mel.rank() != 2 || mel.cols() != mel_bins_)
    throw std::runtime_error("speaker probe: mel must be (frames, " + std::to_string(mel_bins_) +
                             "), got " + shape_str(mel));
  const Tensor& w1 = params_.at("probe.fc1.w");
  const Tensor& b1 = params_.at("probe.fc1.b");
  Tensor pooled = Tensor::zeros({cfg_.hidden});
  for (int64_t f = 0; f < mel.rows(); ++f) {
    for (int64_t k = 0; k < cfg_.hidden; ++k) {
      double act = b1.at(k);
      for (int64_t b = 0; b < mel_bins_; ++b)
        act += static_cast<double>(mel.at(f, b)) * w1.at(b, k);
      pooled.at(k) += static_cast<float>(std::tanh(act));
    }
  }
  for (int64_t k = 0; k < cfg_.hidden; ++k) pooled.at(k) /= static_cast<float>(mel.rows());
  return pooled;
}

double speaker_similarity(const SpeakerProbe& probe, const Tensor& pred_mel, int target_speaker,
                          const Corpus& corpus) {
  if (!probe.trained()) throw std::runtime_error("speaker probe: not trained");
  const auto refs = corpus.speaker_view(target_speaker, Split::Test);
  if (refs.empty())
    throw std::runtime_error("speaker similarity: speaker " + std::to_string(target_speaker) +
                             " has no test utterances");
  Tensor centroid;
  for (size_t i = 0; i < refs.size(); ++i) {
    const Tensor e = probe.embed(refs[i]->mel);
    if (i == 0) {
      centroid = e;
    } else {
      for (int64_t k = 0; k < centroid.numel(); ++k) centroid.at(k) += e.at(k);
    }
  }
  for (int64_t k = 0; k < centroid.numel(); ++k)
    centroid.at(k) /= static_cast<float>(refs.size());
  return cosine_similarity(probe.embed(pred_mel), centroid);
}

}  // namespace addm
