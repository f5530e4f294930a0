// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/evalrun.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "addm/denoiser.hpp"
#include "addm/rng.hpp"

namespace addm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Adapts a copy of `pretrained` to one held-out speaker and scores its
// test-split transcripts. Sampling streams are keyed by utterance id, so
// metrics depend only on (checkpoint, seed).
void eval_one_speaker(const ParamStore& pretrained, const ModelConfig& cfg, const Corpus& corpus,
                      const SpeakerProbe& probe, FinetuneSet set, const AdaptationConfig& acfg,
                      int speaker, uint64_t seed, double* mse, double* lsd, double* cosine,
                      int64_t* count) {
  const auto target = corpus.speaker_view(speaker, Split::Adapt);
  ParamStore adapted = pretrained;
  adapt(adapted, cfg, target, set, acfg, streams::sub(seed, static_cast<uint64_t>(speaker)));
  const PhonemePriorStats stats = prior_stats_from_store(adapted);
  for (const Utterance* u : corpus.speaker_view(speaker, Split::Test)) {
    RngStream rng(seed, streams::sub(streams::kSampler, static_cast<uint64_t>(u->id)));
    const Tensor pred =
        synthesize(adapted, cfg, u->phonemes, u->durations, kAdaptSpeaker, stats, rng);
    const ReconstructionError err = reconstruction_error(pred, u->mel);
    *mse += err.mse;
    *lsd += err.lsd;
    *cosine += speaker_similarity(probe, pred, speaker, corpus);
    ++*count;
  }
}

MetricsRow eval_setting(const ParamStore& pretrained, const ModelConfig& cfg,
                        const Corpus& corpus, const SpeakerProbe& probe, FinetuneSet set,
                        const AdaptationConfig& acfg, uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  double mse = 0.0, lsd = 0.0, cosine = 0.0;
  int64_t count = 0;
  for (const int speaker : corpus.heldout_speaker_ids())
    eval_one_speaker(pretrained, cfg, corpus, probe, set, acfg, speaker, seed, &mse, &lsd,
                     &cosine, &count);
  if (count == 0) throw std::runtime_error("evaluation: corpus has no held-out test utterances");
  MetricsRow row;
  row.setting = finetune_set_name(set);
  row.mse = mse / static_cast<double>(count);
  row.lsd = lsd / static_cast<double>(count);
  row.cosine = cosine / static_cast<double>(count);
  row.seed = seed;
  row.runtime_s = seconds_since(start);
  if (!std::isfinite(row.mse) || !std::isfinite(row.lsd) || !std::isfinite(row.cosine))
    throw std::runtime_error("evaluation: non-finite metrics for " + row.setting);
  return row;
}

void append_row(std::string* out, const MetricsRow& row, int K, bool cln) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%s,%llu,%.9g,%.9g,%.9g,%.3f\n", row.setting.c_str(), K,
                cln ? "on" : "off", static_cast<unsigned long long>(row.seed), row.mse, row.lsd,
                row.cosine, row.runtime_s);
  *out += buf;
}

void fill_aggregates(GridCell* cell) {
  const double n = static_cast<double>(cell->rows.size());
  double sm = 0, sl = 0, sc = 0;
  for (const MetricsRow& r : cell->rows) {
    sm += r.mse;
    sl += r.lsd;
    sc += r.cosine;
  }
  cell->mean_mse = sm / n;
  cell->mean_lsd = sl / n;
  cell->mean_cosine = sc / n;
  if (cell->rows.size() > 1) {
    double vm = 0, vl = 0, vc = 0;
    for (const MetricsRow& r : cell->rows) {
      vm += (r.mse - cell->mean_mse) * (r.mse - cell->mean_mse);
      vl += (r.lsd - cell->mean_lsd) * (r.lsd - cell->mean_lsd);
      vc += (r.cosine - cell->mean_cosine) * (r.cosine - cell->mean_cosine);
    }
    cell->std_mse = std::sqrt(vm / (n - 1));
    cell->std_lsd = std::sqrt(vl / (n - 1));
    cell->std_cosine = std::sqrt(vc / (n - 1));
  }
}

std::string cell_name(int K, bool cln) {
  return "K=" + std::to_string(K) + " cln=" + (cln ? "on" : "off");
}

}  // namespace

CompareResult compare_settings(const ParamStore& pretrained, const ModelConfig& cfg,
                               const Corpus& corpus, const SpeakerProbe& probe,
                               const std::vector<uint64_t>& seeds, const AdaptationConfig& acfg) {
  if (cfg.K != 0)
    throw std::runtime_error("compare_settings: requires a K=0 configuration, got K=" +
                             std::to_string(cfg.K));
  if (seeds.empty()) throw std::runtime_error("compare_settings: no seeds");
  CompareResult result;
  for (const FinetuneSet set :
       {FinetuneSet::WholeDecoder, FinetuneSet::SpkEmbPlusCLN, FinetuneSet::SpkEmbOnly})
    for (const uint64_t seed : seeds)
      result.rows.push_back(eval_setting(pretrained, cfg, corpus, probe, set, acfg, seed));
  return result;
}

const GridCell& grid_cell(const GridResult& grid, int K, bool cln) {
  for (const GridCell& cell : grid.cells)
    if (cell.K == K && cell.cln == cln) return cell;
  throw std::runtime_error("grid: no cell " + cell_name(K, cln));
}

GridResult run_grid(const Corpus& corpus, const ModelConfig& base, const TrainPlan& plan,
                    const SpeakerProbe& probe, const std::vector<uint64_t>& seeds,
                    const AdaptationConfig& acfg, uint64_t pretrain_seed) {
  if (seeds.empty()) throw std::runtime_error("grid: no seeds");
  GridResult grid;
  for (int K = 0; K <= 4; ++K) {
    for (const bool cln : {false, true}) {
      ModelConfig cfg = base;
      cfg.K = K;
      cfg.cln_in_denoiser = cln;
      GridCell cell;
      cell.K = K;
      cell.cln = cln;
      try {
        ParamStore store;
        pretrain(corpus, cfg, plan, pretrain_seed, store);
        for (const uint64_t seed : seeds)
          cell.rows.push_back(eval_setting(store, cfg, corpus, probe,
                                           FinetuneSet::SpkEmbPlusCLN, acfg, seed));
      } catch (const std::exception& e) {
        throw std::runtime_error("grid cell " + cell_name(K, cln) + " failed: " + e.what());
      }
      fill_aggregates(&cell);
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

const char* metrics_csv_header() { return "setting,K,cln,seed,mse,lsd,cosine,runtime_s"; }

std::string compare_csv(const CompareResult& result, const ModelConfig& cfg) {
  std::string out = metrics_csv_header();
  out += '\n';
  for (const MetricsRow& row : result.rows)
    append_row(&out, row, cfg.K, cfg.cln_in_denoiser);
  return out;
}

std::string grid_csv(const GridResult& grid) {
  std::string out = metrics_csv_header();
  out += '\n';
  for (const GridCell& cell : grid.cells)
    for (const MetricsRow& row : cell.rows) append_row(&out, row, cell.K, cell.cln);
  return out;
}

}  // namespace addm
