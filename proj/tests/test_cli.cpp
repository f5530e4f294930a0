// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the command-line binary at miniature scale. ADDM_CLI
// and ADDM_CONFIG_DIR are injected by the build so the tests are working
// directory independent.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "addm/checkpoint.hpp"
#include "addm/config.hpp"
#include "addm/runio.hpp"
#include "doctest.h"

using namespace addm;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "addm_cli_suite";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs the binary, captures stdout+stderr, returns the exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = kRoot / "last_output.txt";
  const std::string cmd = std::string(ADDM_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

// Miniature run: a few seconds end to end on one core.
const char* kTinyCfg =
    "train_speakers = 4\n"
    "utts_per_speaker = 6\n"
    "heldout_speakers = 2\n"
    "adapt_utts = 3\n"
    "test_utts = 3\n"
    "vocab = 8\n"
    "mel_bins = 8\n"
    "enc_dim = 16\n"
    "enc_blocks = 1\n"
    "enc_ff = 24\n"
    "speaker_dim = 8\n"
    "T = 8\n"
    "denoiser_blocks = 2\n"
    "denoiser_channels = 12\n"
    "denoiser_cycle = 2\n"
    "sinusoid_dim = 8\n"
    "step_hidden = 16\n"
    "block_cond_dim = 16\n"
    "step_cln_dim = 8\n"
    "stage1_steps = 30\n"
    "stage2_steps = 10\n"
    "batch_frames = 32\n"
    "adapt_steps = 12\n"
    "adapt_utterances = 3\n"
    "probe_steps = 150\n"
    "probe_min_accuracy = 0.5\n"
    "eval_seeds = 1,2\n"
    "sample_count = 2\n";

struct Fixture {
  fs::path cfg = kRoot / "tiny.cfg";
  fs::path data = kRoot / "data";
  fs::path run = kRoot / "train";

  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream(cfg) << kTinyCfg;
  }

  std::string flags() const { return "--config '" + cfg.string() + "'"; }

  void gen(const fs::path& out, int seed) {
    REQUIRE(run_cli("gen-data " + flags() + " --seed " + std::to_string(seed) + " --out '" +
                    out.string() + "'") == 0);
  }
  void train() {
    gen(data, 7);
    REQUIRE(run_cli("train " + flags() + " --seed 3 --data '" + data.string() + "' --out '" +
                    run.string() + "'") == 0);
  }
};

std::string strip_runtime_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(','));
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("data generation is deterministic and seed-sensitive") {
  Fixture fx;
  fx.gen(kRoot / "d1", 7);
  fx.gen(kRoot / "d2", 7);
  fx.gen(kRoot / "d3", 8);
  CHECK(slurp(kRoot / "d1" / "MANIFEST.txt") == slurp(kRoot / "d2" / "MANIFEST.txt"));
  CHECK(slurp(kRoot / "d1" / "MANIFEST.txt") != slurp(kRoot / "d3" / "MANIFEST.txt"));
}

TEST_CASE("count-params prints the full-scale accounting table") {
  Fixture fx;
  std::string out;
  REQUIRE(run_cli("count-params --config '" + std::string(ADDM_CONFIG_DIR) + "/paper_scale.cfg'",
                  &out) == 0);
  CHECK(out.find("spk_emb_plus_cln     131584") != std::string::npos);
  CHECK(out.find("denoiser") != std::string::npos);
  CHECK(out.find("total") != std::string::npos);
}

TEST_CASE("dump-config output parses back and reflects the input file") {
  Fixture fx;
  std::string out;
  REQUIRE(run_cli("dump-config " + fx.flags(), &out) == 0);
  const RunConfig cfg = parse_run_config(out);
  CHECK(cfg.corpus.train_speakers == 4);
  CHECK(cfg.plan.stage1 == 30);
  CHECK(cfg.eval_seeds == std::vector<uint64_t>{1, 2});
  CHECK(dump_run_config(cfg) == out);
}

TEST_CASE("train, adapt, and sample form a reproducible artifact chain") {
  Fixture fx;
  fx.train();
  CHECK(fs::exists(fx.run / "model.ckpt"));
  const std::string loss_csv = slurp(fx.run / "pretrain_loss.csv");
  CHECK(loss_csv.substr(0, 10) == "step,loss\n");
  CHECK(std::count(loss_csv.begin(), loss_csv.end(), '\n') == 41);  // header + 30 + 10 steps

  // Same (config, seed, data): bit-identical artifacts.
  REQUIRE(run_cli("train " + fx.flags() + " --seed 3 --data '" + fx.data.string() + "' --out '" +
                  (kRoot / "train_b").string() + "'") == 0);
  CHECK(slurp(fx.run / "MANIFEST.txt") == slurp(kRoot / "train_b" / "MANIFEST.txt"));

  // The checkpoint carries the full effective config.
  const Checkpoint ckpt = load_checkpoint((fx.run / "model.ckpt").string());
  const RunConfig carried = parse_run_config(ckpt.config_text);
  CHECK(carried.corpus.train_speakers == 4);
  CHECK(carried.model.T == 8);

  REQUIRE(run_cli("adapt " + fx.flags() + " --seed 5 --data '" + fx.data.string() + "' --ckpt '" +
                  (fx.run / "model.ckpt").string() + "' --out '" + (kRoot / "ad").string() +
                  "'") == 0);
  CHECK(fs::exists(kRoot / "ad" / "adapted.ckpt"));
  CHECK(slurp(kRoot / "ad" / "adapt_loss.csv").substr(0, 10) == "step,loss\n");

  REQUIRE(run_cli("sample --seed 5 --data '" + fx.data.string() + "' --ckpt '" +
                  (kRoot / "ad" / "adapted.ckpt").string() + "' --out '" +
                  (kRoot / "sm").string() + "'") == 0);
  for (const char* name : {"sample_000", "sample_001"}) {
    CHECK(fs::exists(kRoot / "sm" / (std::string(name) + ".pgm")));
    std::ifstream ten(kRoot / "sm" / (std::string(name) + ".ten"), std::ios::binary);
    REQUIRE(static_cast<bool>(ten));
    const auto [tname, mel] = read_tensor_record(ten);
    CHECK(tname == "mel");
    REQUIRE(mel.rank() == 2);
    CHECK(mel.cols() == 8);
    CHECK(mel.all_finite());
    const PgmHeader h = parse_pgm_header((kRoot / "sm" / (std::string(name) + ".pgm")).string());
    CHECK(h.width == mel.rows());
    CHECK(h.height == 8);
  }
}

TEST_CASE("eval emits one reproducible row per setting and seed") {
  Fixture fx;
  fx.train();
  const std::string eval_args = "eval " + fx.flags() + " --seed 2 --data '" + fx.data.string() +
                                "' --ckpt '" + (fx.run / "model.ckpt").string() + "'";
  REQUIRE(run_cli(eval_args + " --out '" + (kRoot / "ev1").string() + "'") == 0);
  REQUIRE(run_cli(eval_args + " --out '" + (kRoot / "ev2").string() + "'") == 0);
  const std::string csv = slurp(kRoot / "ev1" / "compare.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "setting,K,cln,seed,mse,lsd,cosine,runtime_s");
  // Header + 3 finetune sets x 2 seeds.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(strip_runtime_column(csv) == strip_runtime_column(slurp(kRoot / "ev2" / "compare.csv")));
}

TEST_CASE("usage errors and runtime errors exit with distinct codes") {
  Fixture fx;
  std::string out;
  CHECK(run_cli("no-such-command", &out) == 2);
  CHECK(run_cli("train --data d", &out) == 2);  // missing required --out
  CHECK(out.find("--out") != std::string::npos);

  CHECK(run_cli("train --config absent.cfg --data d --out '" + (kRoot / "x").string() + "'",
                &out) == 1);
  CHECK(out.find("cannot open") != std::string::npos);

  std::ofstream(kRoot / "typo.cfg") << "stage_one = 5\n";
  CHECK(run_cli("dump-config --config '" + (kRoot / "typo.cfg").string() + "'", &out) == 1);
  CHECK(out.find("unknown key 'stage_one'") != std::string::npos);

  // A held lock makes the run directory unavailable.
  fs::create_directories(kRoot / "busy");
  std::ofstream(kRoot / "busy" / "run.lock") << "";
  CHECK(run_cli("gen-data " + fx.flags() + " --out '" + (kRoot / "busy").string() + "'", &out) ==
        1);
  CHECK(out.find("locked") != std::string::npos);
}
