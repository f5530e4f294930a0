// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/finetune.hpp"

#include <stdexcept>

#include "addm/denoiser.hpp"

namespace addm {

const char* finetune_set_name(FinetuneSet set) {
  switch (set) {
    case FinetuneSet::SpkEmbOnly: return "spk_emb_only";
    case FinetuneSet::SpkEmbPlusCLN: return "spk_emb_plus_cln";
    case FinetuneSet::WholeDecoder: return "whole_decoder";
  }
  throw std::runtime_error("finetune: invalid set value");
}

FinetuneSet parse_finetune_set(const std::string& name) {
  if (name == "spk_emb_only") return FinetuneSet::SpkEmbOnly;
  if (name == "spk_emb_plus_cln") return FinetuneSet::SpkEmbPlusCLN;
  if (name == "whole_decoder") return FinetuneSet::WholeDecoder;
  throw std::runtime_error("finetune: unknown set '" + name + "'");
}

std::set<std::string> select_trainable(const ParamStore& store, const ModelConfig& cfg,
                                       FinetuneSet set, int speaker_id) {
  const std::string row = speaker_param_name(speaker_id, cfg.num_speakers);
  if (!store.has(row)) throw std::runtime_error("finetune: missing speaker row " + row);

  std::set<std::string> mask = {row};
  if (set == FinetuneSet::SpkEmbOnly) return mask;

  if (cfg.cln_in_denoiser)
    for (const auto& name : store.names_with_prefix("denoiser.cln.")) mask.insert(name);
  for (const auto& name : store.names_with_prefix("decoder.layer")) {
    if (name.find(".cln1.") != std::string::npos || name.find(".cln2.") != std::string::npos)
      mask.insert(name);
  }
  if (set == FinetuneSet::SpkEmbPlusCLN) return mask;

  if (set != FinetuneSet::WholeDecoder) throw std::runtime_error("finetune: invalid set value");
  for (const char* prefix : {"denoiser.", "decoder.", "postnet."})
    for (const auto& name : store.names_with_prefix(prefix)) mask.insert(name);
  return mask;
}

int64_t FinetuneAccounting::of(FinetuneSet set) const {
  switch (set) {
    case FinetuneSet::SpkEmbOnly: return spk_emb_only;
    case FinetuneSet::SpkEmbPlusCLN: return spk_emb_plus_cln;
    case FinetuneSet::WholeDecoder: return whole_decoder;
  }
  throw std::runtime_error("finetune: invalid set value");
}

FinetuneAccounting finetune_accounting(const ParamStore& store, const ModelConfig& cfg,
                                       int speaker_id) {
  const ModelParamCounts counts = model_count_params(cfg);
  const ParamAccounting da = count_params(cfg.denoiser_config());

  FinetuneAccounting acc;
  acc.spk_emb_only = cfg.speaker_dim;
  acc.spk_emb_plus_cln = cfg.speaker_dim + (cfg.cln_in_denoiser ? da.cln_generators : 0) +
                         static_cast<int64_t>(cfg.K) * 2 *
                             (2 * (static_cast<int64_t>(cfg.speaker_dim) * cfg.enc_dim + cfg.enc_dim));
  acc.whole_decoder = cfg.speaker_dim + counts.denoiser + counts.transformer + counts.postnet;

  for (const FinetuneSet set :
       {FinetuneSet::SpkEmbOnly, FinetuneSet::SpkEmbPlusCLN, FinetuneSet::WholeDecoder}) {
    int64_t from_mask = 0;
    for (const auto& name : select_trainable(store, cfg, set, speaker_id))
      from_mask += store.at(name).numel();
    if (from_mask != acc.of(set))
      throw std::runtime_error(std::string("finetune accounting: closed form for ") +
                               finetune_set_name(set) + " gives " + std::to_string(acc.of(set)) +
                               " but the mask covers " + std::to_string(from_mask));
  }
  return acc;
}

}  // namespace addm
