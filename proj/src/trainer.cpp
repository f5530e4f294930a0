// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "addm/adam.hpp"
#include "addm/denoiser.hpp"
#include "addm/rng.hpp"
#include "addm/tape.hpp"

namespace addm {

namespace {

double window_mean(const std::vector<double>& history, size_t begin, size_t end) {
  if (history.empty()) throw std::runtime_error("trainer: empty loss history");
  double sum = 0.0;
  for (size_t i = begin; i < end; ++i) sum += history[i];
  return sum / static_cast<double>(end - begin);
}

// One optimizer step over a fixed batch. Returns the (possibly non-finite)
// loss; the caller owns the divergence policy.
double one_step(ParamStore& store, const ModelConfig& cfg,
                const std::vector<const Utterance*>& batch, const std::vector<int>& speaker_ids,
                const PhonemePriorStats& stats, const NoiseSchedule& schedule,
                const std::set<std::string>& tracked, Adam& opt, int64_t step_index,
                RngStream& noise) {
  Tape<float> tape;
  TapedParams<float> params(tape, store);
  params.track_names(tracked);
  const int loss = batch_loss(tape, params, cfg, batch, speaker_ids, stats, schedule, noise);
  const double value = tape.value(loss).data[0];
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  GradMap grads = collect_grads(tape, params.used());
  // Parameters outside this batch's graph (unused speaker rows, paths gated
  // off by the config) still need an entry for the optimizer contract.
  for (const auto& name : tracked)
    if (grads.find(name) == grads.end()) grads.emplace(name, Tensor::zeros(store.at(name).shape));
  opt.step(store, grads, step_index);
  return value;
}

// Non-finite values anywhere in the step (graph construction, loss, or the
// optimizer update) count as divergence and report the step index.
double guarded_step(const char* phase, ParamStore& store, const ModelConfig& cfg,
                    const std::vector<const Utterance*>& batch,
                    const std::vector<int>& speaker_ids, const PhonemePriorStats& stats,
                    const NoiseSchedule& schedule, const std::set<std::string>& tracked,
                    Adam& opt, int64_t step_index, RngStream& noise) {
  double value;
  try {
    value = one_step(store, cfg, batch, speaker_ids, stats, schedule, tracked, opt, step_index,
                     noise);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).find("non-finite") != std::string::npos)
      throw std::runtime_error(std::string(phase) + " diverged at step " +
                               std::to_string(step_index) + ": " + e.what());
    throw;
  }
  if (!std::isfinite(value))
    throw std::runtime_error(std::string(phase) + " diverged at step " +
                             std::to_string(step_index));
  return value;
}

std::set<std::string> trainable_names(const ParamStore& store) {
  std::set<std::string> names;
  for (const auto& name : store.names())
    if (store.is_trainable(name)) names.insert(name);
  return names;
}

}  // namespace

void TrainPlan::validate() const {
  if (stage2 <= 0 || stage1 < stage2)
    throw std::runtime_error("train plan: need stage1 >= stage2 > 0, got " +
                             std::to_string(stage1) + "/" + std::to_string(stage2));
  if (batch_frames < 1) throw std::runtime_error("train plan: batch_frames must be >= 1");
  if (lr <= 0.0) throw std::runtime_error("train plan: learning rate must be > 0");
}

void AdaptationConfig::validate() const {
  if (steps < 1) throw std::runtime_error("adaptation config: steps must be >= 1");
  if (lr <= 0.0) throw std::runtime_error("adaptation config: learning rate must be > 0");
  if (utterances < 1) throw std::runtime_error("adaptation config: utterances must be >= 1");
}

double smoothed_initial_loss(const std::vector<double>& history, size_t window) {
  return window_mean(history, 0, std::min(window, history.size()));
}

double smoothed_final_loss(const std::vector<double>& history, size_t window) {
  const size_t n = history.size();
  return window_mean(history, n - std::min(window, n), n);
}

TrainResult pretrain(const Corpus& corpus, const ModelConfig& cfg, const TrainPlan& plan,
                     uint64_t seed, ParamStore& store) {
  plan.validate();
  cfg.validate();
  if (!store.names().empty())
    throw std::runtime_error("pretrain: parameter store must start empty");
  if (cfg.num_speakers != corpus.config.train_speakers)
    throw std::runtime_error("pretrain: config expects " + std::to_string(cfg.num_speakers) +
                             " speakers but the corpus trains " +
                             std::to_string(corpus.config.train_speakers));
  if (cfg.vocab != corpus.config.vocab || cfg.mel_bins != corpus.config.mel_bins)
    throw std::runtime_error("pretrain: vocab/mel_bins disagree with the corpus");

  RngStream init_rng(seed, streams::kParamInit);
  init_model_params(cfg, store, init_rng);
  const PhonemePriorStats stats = estimate_corpus_prior(corpus, cfg);
  attach_prior_stats(store, stats);
  const NoiseSchedule schedule = cfg.schedule();

  const auto train = corpus.split_view(Split::Train);
  if (train.empty()) throw std::runtime_error("pretrain: corpus has no training utterances");

  Adam::Config ocfg;
  ocfg.lr = plan.lr;
  Adam opt(ocfg);
  std::set<std::string> tracked = trainable_names(store);

  RngStream batch_rng(seed, streams::kBatch);
  TrainResult result;
  const int total = plan.stage1 + plan.stage2;
  result.loss_history.reserve(static_cast<size_t>(total));
  for (int step = 1; step <= total; ++step) {
    if (step == plan.stage1 + 1) {
      for (const auto& name : store.names_with_prefix("encoder.")) {
        store.set_trainable(name, false);
        tracked.erase(name);
      }
    }
    std::vector<const Utterance*> batch;
    std::vector<int> speaker_ids;
    int64_t frames = 0;
    while (frames < plan.batch_frames) {
      const Utterance* u = train[static_cast<size_t>(
          batch_rng.uniform_int(0, static_cast<int64_t>(train.size()) - 1))];
      batch.push_back(u);
      speaker_ids.push_back(u->speaker);
      frames += u->frames();
    }
    RngStream noise(seed, streams::sub(streams::kTrainNoise, static_cast<uint64_t>(step)));
    result.loss_history.push_back(guarded_step("pretraining", store, cfg, batch, speaker_ids,
                                               stats, schedule, tracked, opt, step, noise));
  }
  return result;
}

void seed_adapt_row(ParamStore& store, const ModelConfig& cfg) {
  // Neutral starting voice: the mean of every pretrained speaker row.
  Tensor& slot = store.at(speaker_param_name(kAdaptSpeaker, cfg.num_speakers));
  for (int64_t d = 0; d < slot.numel(); ++d) {
    double acc = 0.0;
    for (int s = 0; s < cfg.num_speakers; ++s)
      acc += store.at(speaker_param_name(s, cfg.num_speakers)).at(d);
    slot.at(d) = static_cast<float>(acc / cfg.num_speakers);
  }
}

TrainResult adapt(ParamStore& store, const ModelConfig& cfg,
                  const std::vector<const Utterance*>& target, FinetuneSet set,
                  const AdaptationConfig& acfg, uint64_t seed) {
  acfg.validate();
  cfg.validate();
  if (target.empty()) throw std::runtime_error("adaptation: no target utterances");
  if (!store.has("prior.global_mean"))
    throw std::runtime_error("adaptation: checkpoint carries no prior statistics");

  const std::vector<const Utterance*> batch(
      target.begin(),
      target.begin() + std::min<size_t>(target.size(), static_cast<size_t>(acfg.utterances)));
  const std::vector<int> speaker_ids(batch.size(), kAdaptSpeaker);

  seed_adapt_row(store, cfg);

  const std::set<std::string> mask = select_trainable(store, cfg, set, kAdaptSpeaker);
  for (const auto& name : store.names()) store.set_trainable(name, mask.count(name) > 0);

  const PhonemePriorStats stats = prior_stats_from_store(store);
  const NoiseSchedule schedule = cfg.schedule();
  Adam::Config ocfg;
  ocfg.lr = acfg.lr;
  Adam opt(ocfg);

  TrainResult result;
  result.loss_history.reserve(static_cast<size_t>(acfg.steps));
  for (int step = 1; step <= acfg.steps; ++step) {
    RngStream noise(seed, streams::sub(streams::kTrainNoise, static_cast<uint64_t>(step)));
    result.loss_history.push_back(guarded_step("adaptation", store, cfg, batch, speaker_ids,
                                               stats, schedule, mask, opt, step, noise));
  }
  return result;
}

}  // namespace addm
