// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace addm {

namespace {

std::string trim(const std::string& s) {
  const size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::runtime_error("config: bad value '" + value + "' for key '" + key + "'");
}

int64_t to_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  int64_t out;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  size_t used = 0;
  double out;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value);
}

std::vector<uint64_t> to_seeds(const std::string& key, const std::string& value) {
  std::vector<uint64_t> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const int64_t v = to_int(key, item);
    if (v < 0) bad_value(key, value);
    out.push_back(static_cast<uint64_t>(v));
  }
  if (out.empty()) bad_value(key, value);
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_seeds(const std::vector<uint64_t>& seeds) {
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto i = [&] { return static_cast<int>(to_int(key, value)); };
  const auto d = [&] { return to_double(key, value); };

  if (key == "train_speakers") cfg.corpus.train_speakers = i();
  else if (key == "utts_per_speaker") cfg.corpus.utts_per_speaker = i();
  else if (key == "heldout_speakers") cfg.corpus.heldout_speakers = i();
  else if (key == "adapt_utts") cfg.corpus.adapt_utts = i();
  else if (key == "test_utts") cfg.corpus.test_utts = i();
  else if (key == "vocab") cfg.corpus.vocab = i();
  else if (key == "mel_bins") cfg.corpus.mel_bins = i();
  else if (key == "min_frames") cfg.corpus.min_frames = i();
  else if (key == "max_frames") cfg.corpus.max_frames = i();
  else if (key == "min_phonemes") cfg.corpus.min_phonemes = i();
  else if (key == "max_phonemes") cfg.corpus.max_phonemes = i();
  else if (key == "jitter") cfg.corpus.jitter = d();
  else if (key == "corpus_seed") cfg.corpus.seed = static_cast<uint64_t>(to_int(key, value));
  else if (key == "enc_dim") cfg.model.enc_dim = i();
  else if (key == "enc_blocks") cfg.model.enc_blocks = i();
  else if (key == "enc_ff") cfg.model.enc_ff = i();
  else if (key == "K") cfg.model.K = i();
  else if (key == "cln_in_denoiser") cfg.model.cln_in_denoiser = to_bool(key, value);
  else if (key == "dec_ff") cfg.model.dec_ff = i();
  else if (key == "speaker_dim") cfg.model.speaker_dim = i();
  else if (key == "T") cfg.model.T = i();
  else if (key == "beta_min") cfg.model.beta_min = d();
  else if (key == "beta_max") cfg.model.beta_max = d();
  else if (key == "prior_mode") cfg.model.prior_mode = parse_prior_mode(value);
  else if (key == "variance_floor") cfg.model.variance_floor = d();
  else if (key == "denoiser_blocks") cfg.model.denoiser_blocks = i();
  else if (key == "denoiser_channels") cfg.model.denoiser_channels = i();
  else if (key == "denoiser_kernel") cfg.model.denoiser_kernel = i();
  else if (key == "denoiser_cycle") cfg.model.denoiser_cycle = i();
  else if (key == "sinusoid_dim") cfg.model.sinusoid_dim = i();
  else if (key == "step_hidden") cfg.model.step_hidden = i();
  else if (key == "block_cond_dim") cfg.model.block_cond_dim = i();
  else if (key == "step_cln_dim") cfg.model.step_cln_dim = i();
  else if (key == "stage1_steps") cfg.plan.stage1 = i();
  else if (key == "stage2_steps") cfg.plan.stage2 = i();
  else if (key == "batch_frames") cfg.plan.batch_frames = i();
  else if (key == "pretrain_lr") cfg.plan.lr = d();
  else if (key == "adapt_steps") cfg.adapt.steps = i();
  else if (key == "adapt_lr") cfg.adapt.lr = d();
  else if (key == "adapt_utterances") cfg.adapt.utterances = i();
  else if (key == "finetune_set") cfg.finetune_set = parse_finetune_set(value);
  else if (key == "probe_hidden") cfg.probe.hidden = i();
  else if (key == "probe_steps") cfg.probe.steps = i();
  else if (key == "probe_batch_frames") cfg.probe.batch_frames = i();
  else if (key == "probe_lr") cfg.probe.lr = d();
  else if (key == "probe_min_accuracy") cfg.probe.min_accuracy = d();
  else if (key == "eval_seeds") cfg.eval_seeds = to_seeds(key, value);
  else if (key == "sample_speaker") cfg.sample_speaker = i();
  else if (key == "sample_count") cfg.sample_count = i();
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

}  // namespace

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.vocab = corpus.vocab;
  m.mel_bins = corpus.mel_bins;
  m.num_speakers = corpus.train_speakers;
  return m;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
    apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# synthetic corpus\n"
      << "train_speakers = " << cfg.corpus.train_speakers << "\n"
      << "utts_per_speaker = " << cfg.corpus.utts_per_speaker << "\n"
      << "heldout_speakers = " << cfg.corpus.heldout_speakers << "\n"
      << "adapt_utts = " << cfg.corpus.adapt_utts << "\n"
      << "test_utts = " << cfg.corpus.test_utts << "\n"
      << "vocab = " << cfg.corpus.vocab << "\n"
      << "mel_bins = " << cfg.corpus.mel_bins << "\n"
      << "min_frames = " << cfg.corpus.min_frames << "\n"
      << "max_frames = " << cfg.corpus.max_frames << "\n"
      << "min_phonemes = " << cfg.corpus.min_phonemes << "\n"
      << "max_phonemes = " << cfg.corpus.max_phonemes << "\n"
      << "jitter = " << fmt_double(cfg.corpus.jitter) << "\n"
      << "corpus_seed = " << cfg.corpus.seed << "\n"
      << "\n# model\n"
      << "enc_dim = " << cfg.model.enc_dim << "\n"
      << "enc_blocks = " << cfg.model.enc_blocks << "\n"
      << "enc_ff = " << cfg.model.enc_ff << "\n"
      << "K = " << cfg.model.K << "\n"
      << "cln_in_denoiser = " << (cfg.model.cln_in_denoiser ? "true" : "false") << "\n"
      << "dec_ff = " << cfg.model.dec_ff << "\n"
      << "speaker_dim = " << cfg.model.speaker_dim << "\n"
      << "T = " << cfg.model.T << "\n"
      << "beta_min = " << fmt_double(cfg.model.beta_min) << "\n"
      << "beta_max = " << fmt_double(cfg.model.beta_max) << "\n"
      << "prior_mode = " << prior_mode_name(cfg.model.prior_mode) << "\n"
      << "variance_floor = " << fmt_double(cfg.model.variance_floor) << "\n"
      << "denoiser_blocks = " << cfg.model.denoiser_blocks << "\n"
      << "denoiser_channels = " << cfg.model.denoiser_channels << "\n"
      << "denoiser_kernel = " << cfg.model.denoiser_kernel << "\n"
      << "denoiser_cycle = " << cfg.model.denoiser_cycle << "\n"
      << "sinusoid_dim = " << cfg.model.sinusoid_dim << "\n"
      << "step_hidden = " << cfg.model.step_hidden << "\n"
      << "block_cond_dim = " << cfg.model.block_cond_dim << "\n"
      << "step_cln_dim = " << cfg.model.step_cln_dim << "\n"
      << "\n# pretraining\n"
      << "stage1_steps = " << cfg.plan.stage1 << "\n"
      << "stage2_steps = " << cfg.plan.stage2 << "\n"
      << "batch_frames = " << cfg.plan.batch_frames << "\n"
      << "pretrain_lr = " << fmt_double(cfg.plan.lr) << "\n"
      << "\n# adaptation\n"
      << "adapt_steps = " << cfg.adapt.steps << "\n"
      << "adapt_lr = " << fmt_double(cfg.adapt.lr) << "\n"
      << "adapt_utterances = " << cfg.adapt.utterances << "\n"
      << "finetune_set = " << finetune_set_name(cfg.finetune_set) << "\n"
      << "\n# speaker probe\n"
      << "probe_hidden = " << cfg.probe.hidden << "\n"
      << "probe_steps = " << cfg.probe.steps << "\n"
      << "probe_batch_frames = " << cfg.probe.batch_frames << "\n"
      << "probe_lr = " << fmt_double(cfg.probe.lr) << "\n"
      << "probe_min_accuracy = " << fmt_double(cfg.probe.min_accuracy) << "\n"
      << "\n# evaluation and sampling\n"
      << "eval_seeds = " << fmt_seeds(cfg.eval_seeds) << "\n"
      << "sample_speaker = " << cfg.sample_speaker << "\n"
      << "sample_count = " << cfg.sample_count << "\n";
  return out.str();
}

}  // namespace addm
