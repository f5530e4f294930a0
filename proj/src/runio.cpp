// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/runio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace addm {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) { return fnv1a64(text.data(), text.size()); }

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash_file: cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string write_manifest(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("manifest: '" + dir + "' is not a directory");
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "MANIFEST.txt" || rel == "run.lock") continue;
    rels.push_back(std::move(rel));
  }
  std::sort(rels.begin(), rels.end());
  std::string text;
  for (const auto& rel : rels) {
    char line[32];
    std::snprintf(line, sizeof(line), "%016llx",
                  static_cast<unsigned long long>(hash_file((fs::path(dir) / rel).string())));
    text += line;
    text += "  ";
    text += rel;
    text += '\n';
  }
  std::ofstream out(fs::path(dir) / "MANIFEST.txt", std::ios::binary);
  if (!out) throw std::runtime_error("manifest: cannot write under '" + dir + "'");
  out << text;
  return text;
}

RunLock::RunLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / "run.lock").string();
  // "x" makes creation exclusive, so two runs cannot share a directory.
  std::FILE* f = std::fopen(path_.c_str(), "wbx");
  if (!f)
    throw std::runtime_error("run directory '" + dir +
                             "' is locked (run.lock exists; remove it if the owner is gone)");
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void emit_pgm(const Tensor& mel, const std::string& path) {
  if (mel.shape.size() != 2)
    throw std::runtime_error("emit_pgm: expected a rank-2 mel, got rank " +
                             std::to_string(mel.shape.size()));
  const int frames = static_cast<int>(mel.shape[0]);
  const int bins = static_cast<int>(mel.shape[1]);
  float lo = mel.data[0], hi = mel.data[0];
  for (const float v : mel.data) {
    if (!std::isfinite(v)) throw std::runtime_error("emit_pgm: non-finite mel value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  std::string body(static_cast<size_t>(frames) * bins, '\0');
  for (int r = 0; r < bins; ++r) {
    const int bin = bins - 1 - r;  // low bin at the bottom of the image
    for (int f = 0; f < frames; ++f) {
      const double x = mel.data[static_cast<size_t>(f) * bins + bin];
      const double scaled = span > 0.0 ? 255.0 * (x - lo) / span : 0.0;
      body[static_cast<size_t>(r) * frames + f] =
          static_cast<char>(static_cast<int>(std::lround(scaled)));
    }
  }
  char header[96];
  std::snprintf(header, sizeof(header), "P5\n# min=%.17g max=%.17g\n%d %d\n255\n",
                static_cast<double>(lo), static_cast<double>(hi), frames, bins);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_pgm: cannot write '" + path + "'");
  out << header;
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw std::runtime_error("emit_pgm: write failed for '" + path + "'");
}

PgmHeader parse_pgm_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_pgm_header: cannot open '" + path + "'");
  std::string magic, comment;
  std::getline(in, magic);
  std::getline(in, comment);
  PgmHeader h;
  int maxval = 0;
  if (magic != "P5" ||
      std::sscanf(comment.c_str(), "# min=%lf max=%lf", &h.min, &h.max) != 2 ||
      !(in >> h.width >> h.height >> maxval) || maxval != 255)
    throw std::runtime_error("parse_pgm_header: '" + path + "' is not an addm PGM");
  return h;
}

}  // namespace addm
