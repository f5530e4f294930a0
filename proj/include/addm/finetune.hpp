// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "addm/model.hpp"
#include "addm/param_store.hpp"

namespace addm {

// Which parameters an adaptation run may touch. The sets nest:
// SpkEmbOnly < SpkEmbPlusCLN < WholeDecoder (strictly, whenever conditional
// layer norm is present). The phoneme encoder is never adaptable.
enum class FinetuneSet {
  SpkEmbOnly,     // one speaker embedding row
  SpkEmbPlusCLN,  // + every conditional layer norm generator
  WholeDecoder,   // + the full denoiser and transformer decoder stack
};

const char* finetune_set_name(FinetuneSet set);
FinetuneSet parse_finetune_set(const std::string& name);

// Parameter names `set` may modify for the given target speaker
// (kAdaptSpeaker selects the adaptation slot). Never includes encoder or
// prior entries.
std::set<std::string> select_trainable(const ParamStore& store, const ModelConfig& cfg,
                                       FinetuneSet set, int speaker_id);

struct FinetuneAccounting {
  int64_t spk_emb_only = 0;
  int64_t spk_emb_plus_cln = 0;
  int64_t whole_decoder = 0;

  int64_t of(FinetuneSet set) const;
};

// Trainable count per finetune set, cross-checked against the actual
// select_trainable mask sizes (throws on any mismatch).
FinetuneAccounting finetune_accounting(const ParamStore& store, const ModelConfig& cfg,
                                       int speaker_id);

}  // namespace addm
