// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addm/corpus.hpp"
#include "addm/metrics.hpp"
#include "addm/model.hpp"
#include "addm/trainer.hpp"

namespace addm {

// Per-(setting, seed) rows for the three finetune sets adapted to every
// held-out speaker of a K=0 checkpoint. Rows are grouped by setting in the
// order WholeDecoder, SpkEmbPlusCLN, SpkEmbOnly, then by seed.
struct CompareResult {
  std::vector<MetricsRow> rows;
};

CompareResult compare_settings(const ParamStore& pretrained, const ModelConfig& cfg,
                               const Corpus& corpus, const SpeakerProbe& probe,
                               const std::vector<uint64_t>& seeds, const AdaptationConfig& acfg);

struct GridCell {
  int K = 0;
  bool cln = false;
  std::vector<MetricsRow> rows;  // one per adaptation seed
  double mean_mse = 0.0, std_mse = 0.0;
  double mean_lsd = 0.0, std_lsd = 0.0;
  double mean_cosine = 0.0, std_cosine = 0.0;
};

// All 10 (K, cln_in_denoiser) cells, K-major with cln=off before cln=on.
struct GridResult {
  std::vector<GridCell> cells;
};

const GridCell& grid_cell(const GridResult& grid, int K, bool cln);

// Pretrains one model per cell (same seed), adapts it to every held-out
// speaker under SpkEmbPlusCLN once per adaptation seed, and aggregates.
// A cell whose training or evaluation fails raises an error naming the cell.
GridResult run_grid(const Corpus& corpus, const ModelConfig& base, const TrainPlan& plan,
                    const SpeakerProbe& probe, const std::vector<uint64_t>& seeds,
                    const AdaptationConfig& acfg, uint64_t pretrain_seed);

// Plot-ready long format. runtime_s is wall-clock and varies run to run;
// strip it when comparing CSVs for reproducibility.
const char* metrics_csv_header();  // "setting,K,cln,seed,mse,lsd,cosine,runtime_s"
std::string compare_csv(const CompareResult& result, const ModelConfig& cfg);
std::string grid_csv(const GridResult& grid);

}  // namespace addm
