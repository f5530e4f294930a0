// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "addm/checkpoint.hpp"

namespace addm {

namespace {

// Shared held-out transcripts live in their own transcript-stream index range
// so they can never collide with per-utterance transcript streams.
constexpr std::uint64_t kSharedTranscriptBase = 0x40000000ull;

std::string fmt(const char* pattern, int v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string fmt_hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void validate_config(const CorpusConfig& cfg) {
  if (cfg.train_speakers < 2) throw std::runtime_error("corpus: need at least 2 train speakers");
  if (cfg.vocab < 2) throw std::runtime_error("corpus: vocab must be >= 2");
  if (cfg.heldout_speakers < 0) throw std::runtime_error("corpus: heldout_speakers must be >= 0");
  if (cfg.utts_per_speaker < 1) throw std::runtime_error("corpus: utts_per_speaker must be >= 1");
  if (cfg.adapt_utts < 0 || cfg.test_utts < 0)
    throw std::runtime_error("corpus: adapt/test utterance counts must be >= 0");
  if (cfg.mel_bins < 2) throw std::runtime_error("corpus: mel_bins must be >= 2");
  if (cfg.min_frames < 1 || cfg.max_frames < cfg.min_frames)
    throw std::runtime_error("corpus: need 1 <= min_frames <= max_frames");
  if (cfg.min_phonemes < 1 || cfg.max_phonemes < cfg.min_phonemes)
    throw std::runtime_error("corpus: need 1 <= min_phonemes <= max_phonemes");
  if (cfg.jitter < 0.0) throw std::runtime_error("corpus: jitter must be >= 0");
}

ToyPhoneme make_phoneme(const CorpusConfig& cfg, int v) {
  RngStream rng(cfg.seed, streams::sub(streams::kPhonemeProto, static_cast<std::uint64_t>(v)));
  ToyPhoneme p;
  p.id = v;
  p.min_frames = cfg.min_frames;
  p.max_frames = cfg.max_frames;
  p.envelope = Tensor::zeros({cfg.mel_bins});
  const double center = (v + 0.5) * static_cast<double>(cfg.mel_bins) / cfg.vocab;
  for (int d = 0; d < cfg.mel_bins; ++d) {
    const double r = (d - center) / 1.5;
    p.envelope.at(d) = static_cast<float>(2.0 * std::exp(-0.5 * r * r) + 0.3 * rng.normal());
  }
  return p;
}

ToySpeaker make_speaker(const CorpusConfig& cfg, int s) {
  RngStream rng(cfg.seed, streams::sub(streams::kSpeakerProto, static_cast<std::uint64_t>(s)));
  ToySpeaker spk;
  spk.id = s;
  spk.jitter = cfg.jitter;
  spk.gain = Tensor::zeros({cfg.mel_bins});
  spk.tilt = Tensor::zeros({cfg.mel_bins});
  const double slope = 2.0 * rng.uniform() - 1.0;
  for (int d = 0; d < cfg.mel_bins; ++d)
    spk.gain.at(d) = static_cast<float>(std::exp(-0.22 + 0.44 * rng.uniform()));
  for (int d = 0; d < cfg.mel_bins; ++d) {
    const double ramp = static_cast<double>(d) / (cfg.mel_bins - 1) - 0.5;
    spk.tilt.at(d) = static_cast<float>(slope * ramp + 0.35 * rng.normal());
  }
  return spk;
}

double pairwise_l2(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double diff = static_cast<double>(a.data[i]) - b.data[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

Tensor l2_normalized(const Tensor& a) {
  double norm = 0.0;
  for (float v : a.data) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  Tensor out = a;
  if (norm > 0.0)
    for (float& v : out.data) v = static_cast<float>(v / norm);
  return out;
}

void check_distinctness(const Corpus& corpus) {
  const auto& ph = corpus.phonemes;
  for (size_t i = 0; i < ph.size(); ++i)
    for (size_t j = i + 1; j < ph.size(); ++j)
      if (pairwise_l2(l2_normalized(ph[i].envelope), l2_normalized(ph[j].envelope)) <= 0.1)
        throw std::runtime_error("corpus: phoneme envelopes " + std::to_string(i) + " and " +
                                 std::to_string(j) + " are not distinct");
  const auto& sp = corpus.speakers;
  for (size_t i = 0; i < sp.size(); ++i)
    for (size_t j = i + 1; j < sp.size(); ++j)
      if (pairwise_l2(sp[i].tilt, sp[j].tilt) <= 0.05)
        throw std::runtime_error("corpus: speaker tilts " + std::to_string(i) + " and " +
                                 std::to_string(j) + " are not distinct");
}

struct Transcript {
  std::vector<int> phonemes;
  std::vector<int> durations;
};

Transcript draw_transcript(const Corpus& corpus, std::uint64_t transcript_index) {
  const CorpusConfig& cfg = corpus.config;
  RngStream rng(cfg.seed, streams::sub(streams::kTranscript, transcript_index));
  Transcript t;
  const int count = static_cast<int>(rng.uniform_int(cfg.min_phonemes, cfg.max_phonemes));
  t.phonemes.reserve(count);
  t.durations.reserve(count);
  for (int i = 0; i < count; ++i)
    t.phonemes.push_back(static_cast<int>(rng.uniform_int(0, cfg.vocab - 1)));
  for (int i = 0; i < count; ++i) {
    const ToyPhoneme& p = corpus.phonemes[static_cast<size_t>(t.phonemes[i])];
    t.durations.push_back(static_cast<int>(rng.uniform_int(p.min_frames, p.max_frames)));
  }
  return t;
}

// Simple SPD solve (Cholesky, in place) for the closed-form probe.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, int n, int nrhs) {
  for (int j = 0; j < n; ++j) {
    double diag = a[static_cast<size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) diag -= a[static_cast<size_t>(j) * n + k] * a[static_cast<size_t>(j) * n + k];
    if (diag <= 0.0) throw std::runtime_error("corpus probe: normal equations not positive definite");
    const double ljj = std::sqrt(diag);
    a[static_cast<size_t>(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double v = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) v -= a[static_cast<size_t>(i) * n + k] * a[static_cast<size_t>(j) * n + k];
      a[static_cast<size_t>(i) * n + j] = v / ljj;
    }
  }
  for (int r = 0; r < nrhs; ++r) {
    for (int i = 0; i < n; ++i) {
      double v = b[static_cast<size_t>(i) * nrhs + r];
      for (int k = 0; k < i; ++k) v -= a[static_cast<size_t>(i) * n + k] * b[static_cast<size_t>(k) * nrhs + r];
      b[static_cast<size_t>(i) * nrhs + r] = v / a[static_cast<size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double v = b[static_cast<size_t>(i) * nrhs + r];
      for (int k = i + 1; k < n; ++k) v -= a[static_cast<size_t>(k) * n + i] * b[static_cast<size_t>(k) * nrhs + r];
      b[static_cast<size_t>(i) * nrhs + r] = v / a[static_cast<size_t>(i) * n + i];
    }
  }
  return b;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Adapt: return "adapt";
    case Split::Test: return "test";
  }
  throw std::runtime_error("corpus: invalid split value");
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "adapt") return Split::Adapt;
  if (name == "test") return Split::Test;
  throw std::runtime_error("corpus: unknown split tag '" + name + "'");
}

int Utterance::frames() const {
  int total = 0;
  for (int d : durations) total += d;
  return total;
}

std::vector<int> Utterance::frame_phonemes() const {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(frames()));
  for (size_t i = 0; i < phonemes.size(); ++i)
    for (int k = 0; k < durations[i]; ++k) out.push_back(phonemes[i]);
  return out;
}

std::vector<const Utterance*> Corpus::split_view(Split s) const {
  std::vector<const Utterance*> out;
  for (const Utterance& u : utterances)
    if (u.split == s) out.push_back(&u);
  return out;
}

std::vector<const Utterance*> Corpus::speaker_view(int speaker_id, Split s) const {
  std::vector<const Utterance*> out;
  for (const Utterance& u : utterances)
    if (u.speaker == speaker_id && u.split == s) out.push_back(&u);
  return out;
}

std::vector<int> Corpus::heldout_speaker_ids() const {
  std::vector<int> out;
  for (int h = 0; h < config.heldout_speakers; ++h) out.push_back(config.train_speakers + h);
  return out;
}

Tensor64 raw_mel(const std::vector<ToyPhoneme>& phonemes, const ToySpeaker& speaker,
                 const std::vector<int>& phoneme_ids, const std::vector<int>& durations,
                 RngStream& noise) {
  if (phoneme_ids.size() != durations.size())
    throw std::runtime_error("corpus: phoneme/duration count mismatch");
  if (phoneme_ids.empty()) throw std::runtime_error("corpus: empty transcript");
  const int64_t bins = speaker.gain.numel();
  int64_t frames = 0;
  for (int d : durations) {
    if (d < 1) throw std::runtime_error("corpus: durations must be >= 1");
    frames += d;
  }
  Tensor64 out({frames, bins});
  int64_t f = 0;
  for (size_t p = 0; p < phoneme_ids.size(); ++p) {
    const int v = phoneme_ids[p];
    if (v < 0 || static_cast<size_t>(v) >= phonemes.size())
      throw std::runtime_error("corpus: phoneme id out of range: " + std::to_string(v));
    const Tensor& env = phonemes[static_cast<size_t>(v)].envelope;
    for (int k = 0; k < durations[p]; ++k, ++f) {
      for (int64_t d = 0; d < bins; ++d) {
        const double clean = static_cast<double>(speaker.gain.at(d)) * env.at(d) + speaker.tilt.at(d);
        out.at(f, d) = clean + speaker.jitter * noise.normal();
      }
    }
  }
  return out;
}

Tensor normalize_mel(const Tensor64& raw, double lo, double hi) {
  if (!(hi > lo)) throw std::runtime_error("corpus: degenerate normalization range");
  const double scale = 8.0 / (hi - lo);
  Tensor out(raw.shape);
  for (int64_t i = 0; i < raw.numel(); ++i)
    out.data[static_cast<size_t>(i)] = static_cast<float>(-4.0 + (raw.data[static_cast<size_t>(i)] - lo) * scale);
  return out;
}

Corpus gen_corpus(const CorpusConfig& cfg) {
  validate_config(cfg);
  Corpus corpus;
  corpus.config = cfg;
  corpus.phonemes.reserve(static_cast<size_t>(cfg.vocab));
  for (int v = 0; v < cfg.vocab; ++v) corpus.phonemes.push_back(make_phoneme(cfg, v));
  const int total_speakers = cfg.train_speakers + cfg.heldout_speakers;
  corpus.speakers.reserve(static_cast<size_t>(total_speakers));
  for (int s = 0; s < total_speakers; ++s) corpus.speakers.push_back(make_speaker(cfg, s));
  check_distinctness(corpus);

  struct Pending {
    Utterance utt;
    Tensor64 raw;
  };
  std::vector<Pending> pending;
  auto add_utterance = [&](int speaker_id, Split split, const Transcript& t) {
    Pending p;
    p.utt.id = static_cast<int>(pending.size());
    p.utt.speaker = speaker_id;
    p.utt.split = split;
    p.utt.phonemes = t.phonemes;
    p.utt.durations = t.durations;
    RngStream noise(cfg.seed,
                    streams::sub(streams::kUtterance, static_cast<std::uint64_t>(p.utt.id)));
    p.raw = raw_mel(corpus.phonemes, corpus.speakers[static_cast<size_t>(speaker_id)],
                    t.phonemes, t.durations, noise);
    pending.push_back(std::move(p));
  };

  for (int s = 0; s < cfg.train_speakers; ++s)
    for (int k = 0; k < cfg.utts_per_speaker; ++k)
      add_utterance(s, Split::Train,
                    draw_transcript(corpus, static_cast<std::uint64_t>(pending.size())));

  // Held-out speakers share one transcript list: the first adapt_utts entries
  // are the adaptation set, the rest the test set, identical across speakers.
  std::vector<Transcript> shared;
  for (int j = 0; j < cfg.adapt_utts + cfg.test_utts; ++j)
    shared.push_back(draw_transcript(corpus, kSharedTranscriptBase + static_cast<std::uint64_t>(j)));
  for (int h = 0; h < cfg.heldout_speakers; ++h) {
    const int speaker_id = cfg.train_speakers + h;
    for (int j = 0; j < cfg.adapt_utts; ++j)
      add_utterance(speaker_id, Split::Adapt, shared[static_cast<size_t>(j)]);
    for (int j = 0; j < cfg.test_utts; ++j)
      add_utterance(speaker_id, Split::Test, shared[static_cast<size_t>(cfg.adapt_utts + j)]);
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Pending& p : pending)
    for (double v : p.raw.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  corpus.norm_lo = lo;
  corpus.norm_hi = hi;
  corpus.utterances.reserve(pending.size());
  for (Pending& p : pending) {
    p.utt.mel = normalize_mel(p.raw, lo, hi);
    corpus.utterances.push_back(std::move(p.utt));
  }
  return corpus;
}

double linear_probe_speaker_accuracy(const Corpus& corpus) {
  const int bins = corpus.config.mel_bins;
  const int classes = corpus.config.train_speakers;
  const int dim = bins + 1;  // appended bias feature
  const auto train = corpus.split_view(Split::Train);
  if (train.empty()) throw std::runtime_error("corpus probe: empty train split");

  std::vector<double> xtx(static_cast<size_t>(dim) * dim, 0.0);
  std::vector<double> xty(static_cast<size_t>(dim) * classes, 0.0);
  int64_t n = 0;
  std::vector<double> x(static_cast<size_t>(dim));
  auto each_frame = [&](auto&& fn) {
    for (const Utterance* u : train) {
      for (int64_t f = 0; f < u->mel.shape[0]; ++f) {
        for (int d = 0; d < bins; ++d) x[static_cast<size_t>(d)] = u->mel.at(f, d);
        x[static_cast<size_t>(bins)] = 1.0;
        fn(u->speaker);
      }
    }
  };
  each_frame([&](int label) {
    ++n;
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) xtx[static_cast<size_t>(i) * dim + j] += x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
      xty[static_cast<size_t>(i) * classes + label] += x[static_cast<size_t>(i)];
    }
  });
  const double ridge = 1e-6 * static_cast<double>(n);
  for (int i = 0; i < dim; ++i) xtx[static_cast<size_t>(i) * dim + i] += ridge;
  const std::vector<double> w = solve_spd(std::move(xtx), std::move(xty), dim, classes);

  int64_t correct = 0;
  each_frame([&](int label) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      double score = 0.0;
      for (int i = 0; i < dim; ++i) score += x[static_cast<size_t>(i)] * w[static_cast<size_t>(i) * classes + c];
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    if (best == label) ++correct;
  });
  return static_cast<double>(correct) / static_cast<double>(n);
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  Checkpoint meta;
  {
    std::ostringstream cfg;
    const CorpusConfig& c = corpus.config;
    cfg << "train_speakers=" << c.train_speakers << "\n"
        << "utts_per_speaker=" << c.utts_per_speaker << "\n"
        << "heldout_speakers=" << c.heldout_speakers << "\n"
        << "adapt_utts=" << c.adapt_utts << "\n"
        << "test_utts=" << c.test_utts << "\n"
        << "vocab=" << c.vocab << "\n"
        << "mel_bins=" << c.mel_bins << "\n"
        << "min_frames=" << c.min_frames << "\n"
        << "max_frames=" << c.max_frames << "\n"
        << "min_phonemes=" << c.min_phonemes << "\n"
        << "max_phonemes=" << c.max_phonemes << "\n"
        << "jitter=" << fmt_hex_double(c.jitter) << "\n"
        << "seed=" << c.seed << "\n"
        << "norm_lo=" << fmt_hex_double(corpus.norm_lo) << "\n"
        << "norm_hi=" << fmt_hex_double(corpus.norm_hi) << "\n";
    meta.config_text = cfg.str();
  }
  for (const ToyPhoneme& p : corpus.phonemes)
    meta.tensors.emplace(fmt("phoneme.env_%02d", p.id), p.envelope);
  for (const ToySpeaker& s : corpus.speakers) {
    meta.tensors.emplace(fmt("speaker.gain_%03d", s.id), s.gain);
    meta.tensors.emplace(fmt("speaker.tilt_%03d", s.id), s.tilt);
  }
  save_checkpoint(dir + "/meta.ckpt", meta);

  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("corpus: cannot write manifest in " + dir);
  for (const Utterance& u : corpus.utterances) {
    const std::string file = fmt("utt_%05d.ten", u.id);
    std::ofstream ten(dir + "/" + file, std::ios::binary | std::ios::trunc);
    if (!ten) throw std::runtime_error("corpus: cannot write " + file);
    write_tensor_record(ten, "mel", u.mel);
    manifest << u.id << '\t' << u.speaker << '\t' << split_name(u.split) << '\t';
    for (size_t i = 0; i < u.phonemes.size(); ++i)
      manifest << (i ? "," : "") << u.phonemes[i];
    manifest << '\t';
    for (size_t i = 0; i < u.durations.size(); ++i)
      manifest << (i ? "," : "") << u.durations[i];
    manifest << '\t' << file << '\n';
  }
  if (!manifest) throw std::runtime_error("corpus: manifest write failed in " + dir);
}

namespace {
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
  return out;
}
}  // namespace

Corpus load_corpus(const std::string& dir) {
  const Checkpoint meta = load_checkpoint(dir + "/meta.ckpt");
  Corpus corpus;
  CorpusConfig& cfg = corpus.config;
  {
    std::istringstream in(meta.config_text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos) throw std::runtime_error("corpus meta: malformed line: " + line);
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "train_speakers") cfg.train_speakers = std::stoi(value);
      else if (key == "utts_per_speaker") cfg.utts_per_speaker = std::stoi(value);
      else if (key == "heldout_speakers") cfg.heldout_speakers = std::stoi(value);
      else if (key == "adapt_utts") cfg.adapt_utts = std::stoi(value);
      else if (key == "test_utts") cfg.test_utts = std::stoi(value);
      else if (key == "vocab") cfg.vocab = std::stoi(value);
      else if (key == "mel_bins") cfg.mel_bins = std::stoi(value);
      else if (key == "min_frames") cfg.min_frames = std::stoi(value);
      else if (key == "max_frames") cfg.max_frames = std::stoi(value);
      else if (key == "min_phonemes") cfg.min_phonemes = std::stoi(value);
      else if (key == "max_phonemes") cfg.max_phonemes = std::stoi(value);
      else if (key == "jitter") cfg.jitter = std::strtod(value.c_str(), nullptr);
      else if (key == "seed") cfg.seed = std::strtoull(value.c_str(), nullptr, 10);
      else if (key == "norm_lo") corpus.norm_lo = std::strtod(value.c_str(), nullptr);
      else if (key == "norm_hi") corpus.norm_hi = std::strtod(value.c_str(), nullptr);
      else throw std::runtime_error("corpus meta: unknown key '" + key + "'");
    }
  }
  for (int v = 0; v < cfg.vocab; ++v) {
    ToyPhoneme p;
    p.id = v;
    p.min_frames = cfg.min_frames;
    p.max_frames = cfg.max_frames;
    p.envelope = meta.tensors.at(fmt("phoneme.env_%02d", v));
    corpus.phonemes.push_back(std::move(p));
  }
  const int total_speakers = cfg.train_speakers + cfg.heldout_speakers;
  for (int s = 0; s < total_speakers; ++s) {
    ToySpeaker spk;
    spk.id = s;
    spk.jitter = cfg.jitter;
    spk.gain = meta.tensors.at(fmt("speaker.gain_%03d", s));
    spk.tilt = meta.tensors.at(fmt("speaker.tilt_%03d", s));
    corpus.speakers.push_back(std::move(spk));
  }

  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("corpus: cannot open manifest in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string id_s, speaker_s, split_s, phonemes_s, durations_s, file_s;
    if (!std::getline(in, id_s, '\t') || !std::getline(in, speaker_s, '\t') ||
        !std::getline(in, split_s, '\t') || !std::getline(in, phonemes_s, '\t') ||
        !std::getline(in, durations_s, '\t') || !std::getline(in, file_s))
      throw std::runtime_error("corpus: malformed manifest line: " + line);
    Utterance u;
    u.id = std::stoi(id_s);
    u.speaker = std::stoi(speaker_s);
    u.split = parse_split(split_s);
    u.phonemes = parse_int_list(phonemes_s);
    u.durations = parse_int_list(durations_s);
    std::ifstream ten(dir + "/" + file_s, std::ios::binary);
    if (!ten) throw std::runtime_error("corpus: cannot open " + file_s);
    auto [name, mel] = read_tensor_record(ten);
    if (name != "mel") throw std::runtime_error("corpus: unexpected tensor '" + name + "' in " + file_s);
    if (mel.shape.size() != 2 || mel.shape[0] != u.frames() || mel.shape[1] != cfg.mel_bins)
      throw std::runtime_error("corpus: mel shape mismatch in " + file_s);
    u.mel = std::move(mel);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace addm
