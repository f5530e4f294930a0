// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addm/corpus.hpp"
#include "addm/finetune.hpp"
#include "addm/metrics.hpp"
#include "addm/model.hpp"
#include "addm/trainer.hpp"

namespace addm {

// Every tunable of a run, parseable from "key = value" text. Parsing is
// strict: unknown keys are errors, because a silently ignored typo is the
// fastest way to an unreproducible experiment.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;  // vocab, mel_bins, num_speakers follow the corpus
  TrainPlan plan;
  AdaptationConfig adapt;
  FinetuneSet finetune_set = FinetuneSet::SpkEmbPlusCLN;
  SpeakerProbe::Config probe;
  std::vector<uint64_t> eval_seeds = {1, 2, 3, 4, 5};
  int sample_speaker = kAdaptSpeaker;
  int sample_count = 3;

  RunConfig() { adapt.steps = 200; }  // desk-scale default; 2000 is the published recipe

  // The model config with corpus-derived fields filled in.
  ModelConfig resolved_model() const;
};

// Parses config text; lines are "key = value", '#' starts a comment.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Emits every key with its current value; parse_run_config(dump(x)) == x.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace addm
