// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "addm/tensor.hpp"

namespace addm {

// FNV-1a, 64-bit. Fast, stable across platforms, and good enough to catch
// any nondeterminism regression in emitted artifacts.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& text);
std::uint64_t hash_file(const std::string& path);

// Hashes every regular file under `dir` (recursively) and writes
// "<hash>  <relative path>" lines, sorted by path, to dir/MANIFEST.txt.
// The manifest itself and run.lock are excluded. Returns the manifest text.
std::string write_manifest(const std::string& dir);

// Per-run-directory exclusivity: holds dir/run.lock for the object's
// lifetime; construction fails if another run holds it.
class RunLock {
 public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

// Writes a mel as a binary PGM (P5, 8 bit): columns are frames, rows are
// mel bins with the lowest bin at the bottom. Values map linearly onto
// 0..255; the header comment records the min/max used, and a constant
// input maps to all zeros.
void emit_pgm(const Tensor& mel, const std::string& path);

struct PgmHeader {
  int width = 0;   // frames
  int height = 0;  // mel bins
  double min = 0.0;
  double max = 0.0;
};
PgmHeader parse_pgm_header(const std::string& path);

}  // namespace addm
