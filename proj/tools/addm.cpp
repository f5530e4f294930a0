// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface. Every artifact-producing subcommand takes an
// exclusive lock on its --out directory and finishes by writing
// MANIFEST.txt with a content hash per produced file, so reruns can be
// diffed for nondeterminism with `cmp`.
//
// Model and corpus geometry always travel inside checkpoints; `adapt`,
// `sample` and `eval` read them from --ckpt and take only run-control
// settings (steps, rates, seeds, finetune set) from --config.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "addm/checkpoint.hpp"
#include "addm/config.hpp"
#include "addm/corpus.hpp"
#include "addm/evalrun.hpp"
#include "addm/finetune.hpp"
#include "addm/metrics.hpp"
#include "addm/model.hpp"
#include "addm/rng.hpp"
#include "addm/runio.hpp"
#include "addm/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace addm;

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

// Run-control settings a user config may layer on top of a checkpoint's
// embedded config. Geometry (corpus, model) stays with the checkpoint.
void apply_run_controls(RunConfig& cfg, const RunConfig& user) {
  cfg.plan = user.plan;
  cfg.adapt = user.adapt;
  cfg.finetune_set = user.finetune_set;
  cfg.probe = user.probe;
  cfg.eval_seeds = user.eval_seeds;
  cfg.sample_speaker = user.sample_speaker;
  cfg.sample_count = user.sample_count;
}

struct LoadedModel {
  RunConfig cfg;
  ParamStore store;
};

LoadedModel load_model(const std::string& ckpt_path, const std::string& config_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedModel m;
  m.cfg = parse_run_config(ckpt.config_text);
  if (!config_path.empty()) apply_run_controls(m.cfg, load_run_config(config_path));
  m.store = checkpoint_to_store(ckpt);
  return m;
}

void check_corpus_matches(const CorpusConfig& data, const CorpusConfig& ckpt,
                          const std::string& dir) {
  if (data.vocab != ckpt.vocab || data.mel_bins != ckpt.mel_bins ||
      data.train_speakers != ckpt.train_speakers ||
      data.heldout_speakers != ckpt.heldout_speakers || data.seed != ckpt.seed)
    throw std::runtime_error("corpus at '" + dir + "' does not match the checkpoint's corpus");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string loss_csv(const std::vector<double>& history) {
  std::string text = "step,loss\n";
  char line[64];
  for (size_t i = 0; i < history.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i + 1, history[i]);
    text += line;
  }
  return text;
}

void cmd_gen_data(const std::string& config_path, bool seed_set, uint64_t seed,
                  const std::string& out) {
  RunConfig cfg = config_or_default(config_path);
  if (seed_set) cfg.corpus.seed = seed;
  RunLock lock(out);
  save_corpus(gen_corpus(cfg.corpus), out);
  write_manifest(out);
}

void cmd_train(const std::string& config_path, uint64_t seed, const std::string& data,
               const std::string& out) {
  RunConfig cfg = config_or_default(config_path);
  const Corpus corpus = load_corpus(data);
  cfg.corpus = corpus.config;  // the data on disk defines the geometry
  RunLock lock(out);
  ParamStore store;
  const TrainResult result = pretrain(corpus, cfg.resolved_model(), cfg.plan, seed, store);
  save_checkpoint((fs::path(out) / "model.ckpt").string(),
                  store_to_checkpoint(store, dump_run_config(cfg)));
  write_text(fs::path(out) / "pretrain_loss.csv", loss_csv(result.loss_history));
  write_manifest(out);
}

void cmd_adapt(const std::string& config_path, uint64_t seed, const std::string& data,
               const std::string& ckpt, bool speaker_set, int speaker, const std::string& out) {
  LoadedModel m = load_model(ckpt, config_path);
  const Corpus corpus = load_corpus(data);
  check_corpus_matches(corpus.config, m.cfg.corpus, data);
  if (!speaker_set) speaker = corpus.config.train_speakers;  // first held-out speaker
  const auto target = corpus.speaker_view(speaker, Split::Adapt);
  if (target.empty())
    throw std::runtime_error("speaker " + std::to_string(speaker) +
                             " has no adaptation utterances");
  RunLock lock(out);
  const TrainResult result =
      adapt(m.store, m.cfg.resolved_model(), target, m.cfg.finetune_set, m.cfg.adapt, seed);
  save_checkpoint((fs::path(out) / "adapted.ckpt").string(),
                  store_to_checkpoint(m.store, dump_run_config(m.cfg)));
  write_text(fs::path(out) / "adapt_loss.csv", loss_csv(result.loss_history));
  write_manifest(out);
}

void cmd_sample(const std::string& config_path, uint64_t seed, const std::string& data,
                const std::string& ckpt, bool speaker_set, int speaker, bool count_set, int count,
                const std::string& out) {
  LoadedModel m = load_model(ckpt, config_path);
  const ModelConfig model = m.cfg.resolved_model();
  const Corpus corpus = load_corpus(data);
  check_corpus_matches(corpus.config, m.cfg.corpus, data);
  if (!speaker_set) speaker = m.cfg.sample_speaker;
  if (!count_set) count = m.cfg.sample_count;
  if (speaker != kAdaptSpeaker && (speaker < 0 || speaker >= model.num_speakers))
    throw std::runtime_error("speaker " + std::to_string(speaker) +
                             " is not in the model table (use -1 for the adaptation slot)");
  if (count < 1) throw std::runtime_error("sample: count must be >= 1");

  // Transcript source: the speaker's own test split when it has one,
  // otherwise the first held-out speaker's, otherwise train-split text.
  std::vector<const Utterance*> transcripts;
  if (speaker >= 0) transcripts = corpus.speaker_view(speaker, Split::Test);
  for (int h = 0; transcripts.empty() && h < corpus.config.heldout_speakers; ++h)
    transcripts = corpus.speaker_view(corpus.config.train_speakers + h, Split::Test);
  if (transcripts.empty() && speaker >= 0) transcripts = corpus.speaker_view(speaker, Split::Train);
  if (transcripts.empty()) transcripts = corpus.speaker_view(0, Split::Train);
  if (transcripts.empty()) throw std::runtime_error("sample: corpus has no usable transcripts");

  const PhonemePriorStats stats = prior_stats_from_store(m.store);
  RunLock lock(out);
  const size_t n = std::min(static_cast<size_t>(count), transcripts.size());
  for (size_t i = 0; i < n; ++i) {
    const Utterance* utt = transcripts[i];
    RngStream rng(seed, streams::sub(streams::kSampler, static_cast<uint64_t>(utt->id)));
    const Tensor mel =
        synthesize(m.store, model, utt->phonemes, utt->durations, speaker, stats, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03zu", i);
    std::ofstream ten(fs::path(out) / (std::string(name) + ".ten"), std::ios::binary);
    if (!ten) throw std::runtime_error("cannot write sample tensors under '" + out + "'");
    write_tensor_record(ten, "mel", mel);
    ten.close();
    emit_pgm(mel, (fs::path(out) / (std::string(name) + ".pgm")).string());
  }
  write_manifest(out);
}

void cmd_eval(const std::string& config_path, uint64_t seed, const std::string& data,
              const std::string& ckpt, const std::string& out) {
  LoadedModel m = load_model(ckpt, config_path);
  const Corpus corpus = load_corpus(data);
  check_corpus_matches(corpus.config, m.cfg.corpus, data);
  SpeakerProbe probe(m.cfg.probe);
  probe.train(corpus, seed);
  RunLock lock(out);
  const CompareResult result = compare_settings(m.store, m.cfg.resolved_model(), corpus, probe,
                                                m.cfg.eval_seeds, m.cfg.adapt);
  write_text(fs::path(out) / "compare.csv", compare_csv(result, m.cfg.resolved_model()));
  write_manifest(out);
}

void cmd_grid(const std::string& config_path, uint64_t seed, const std::string& data,
              const std::string& out) {
  RunConfig cfg = config_or_default(config_path);
  const Corpus corpus = load_corpus(data);
  cfg.corpus = corpus.config;
  SpeakerProbe probe(cfg.probe);
  probe.train(corpus, seed);
  RunLock lock(out);
  const GridResult grid = run_grid(corpus, cfg.resolved_model(), cfg.plan, probe, cfg.eval_seeds,
                                   cfg.adapt, seed);
  write_text(fs::path(out) / "grid.csv", grid_csv(grid));
  write_manifest(out);
}

std::string count_params_table(const RunConfig& cfg) {
  const ModelConfig model = cfg.resolved_model();
  ParamStore store;
  RngStream init(1, streams::kParamInit);
  init_model_params(model, store, init);
  const ModelParamCounts counts = model_count_params(model);
  const FinetuneAccounting sets = finetune_accounting(store, model, kAdaptSpeaker);
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "component          parameters\n"
                "  encoder          %10" PRId64 "\n"
                "  transformer      %10" PRId64 "\n"
                "  postnet          %10" PRId64 "\n"
                "  denoiser         %10" PRId64 "\n"
                "  speaker table    %10" PRId64 "\n"
                "  total            %10" PRId64 "\n"
                "finetune set        trainable\n"
                "  spk_emb_only     %10" PRId64 "\n"
                "  spk_emb_plus_cln %10" PRId64 "\n"
                "  whole_decoder    %10" PRId64 "\n",
                counts.encoder, counts.transformer, counts.postnet, counts.denoiser,
                counts.speaker_table, counts.total(), sets.spk_emb_only, sets.spk_emb_plus_cln,
                sets.whole_decoder);
  return buf;
}

void emit_report(const std::string& text, const std::string& out, const char* filename) {
  std::fputs(text.c_str(), stdout);
  if (!out.empty()) {
    RunLock lock(out);
    write_text(fs::path(out) / filename, text);
    write_manifest(out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speaker-adaptive diffusion mel synthesizer"};
  app.require_subcommand(1);

  std::string config_path, data_dir, ckpt_path, out_dir;
  uint64_t seed = 1;
  int speaker = kAdaptSpeaker;
  int count = 0;

  const auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "config file (key = value lines)");
    CLI::Option* s = sub->add_option("--seed", seed, "seed for every random stream of this run");
    CLI::Option* o = sub->add_option("--out", out_dir, "output directory");
    if (needs_out) o->required();
    return s;
  };
  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", data_dir, "corpus directory")->required();
  };
  const auto add_ckpt = [&](CLI::App* sub) {
    sub->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  CLI::Option* gen_seed = add_common(gen, true);

  CLI::App* train = app.add_subcommand("train", "pretrain a model on a corpus");
  add_common(train, true);
  add_data(train);

  CLI::App* adapt_cmd = app.add_subcommand("adapt", "finetune a checkpoint to a held-out speaker");
  add_common(adapt_cmd, true);
  add_data(adapt_cmd);
  add_ckpt(adapt_cmd);
  CLI::Option* adapt_spk = adapt_cmd->add_option("--speaker", speaker, "target speaker id");

  CLI::App* sample = app.add_subcommand("sample", "synthesize mels from a checkpoint");
  add_common(sample, true);
  add_data(sample);
  add_ckpt(sample);
  CLI::Option* sample_spk = sample->add_option("--speaker", speaker, "speaker id (-1 = adaptation slot)");
  CLI::Option* sample_cnt = sample->add_option("--count", count, "number of utterances");

  CLI::App* eval = app.add_subcommand("eval", "compare finetune sets on held-out speakers");
  add_common(eval, true);
  add_data(eval);
  add_ckpt(eval);

  CLI::App* grid = app.add_subcommand("grid", "run the (K, cln) ablation grid");
  add_common(grid, true);
  add_data(grid);

  CLI::App* countp = app.add_subcommand("count-params", "print the parameter accounting table");
  add_common(countp, false);

  CLI::App* dump = app.add_subcommand("dump-config", "print the effective configuration");
  add_common(dump, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) cmd_gen_data(config_path, gen_seed->count() > 0, seed, out_dir);
    else if (train->parsed()) cmd_train(config_path, seed, data_dir, out_dir);
    else if (adapt_cmd->parsed())
      cmd_adapt(config_path, seed, data_dir, ckpt_path, adapt_spk->count() > 0, speaker, out_dir);
    else if (sample->parsed())
      cmd_sample(config_path, seed, data_dir, ckpt_path, sample_spk->count() > 0, speaker,
                 sample_cnt->count() > 0, count, out_dir);
    else if (eval->parsed()) cmd_eval(config_path, seed, data_dir, ckpt_path, out_dir);
    else if (grid->parsed()) cmd_grid(config_path, seed, data_dir, out_dir);
    else if (countp->parsed()) emit_report(count_params_table(config_or_default(config_path)),
                                           out_dir, "count_params.txt");
    else if (dump->parsed())
      emit_report(dump_run_config(config_or_default(config_path)), out_dir, "effective.cfg");
  } catch (const std::exception& e) {
    std::cerr << "addm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
