// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include "addm/param_store.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Binary container: magic "ADDM", format version (u32 LE), length-prefixed
// UTF-8 config block, then a tensor table sorted by name. Integer fields are
// little-endian: u64 for counts/lengths/rank/dims, u32 for the dtype code
// (0 = f32). Round trips are bit-exact; unknown versions are refused.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::map<std::string, Tensor> tensors;  // map keeps the table sorted
};

// Single tensor record: name length + name, dtype, rank, dims, raw payload.
// Corpus files reuse this encoding for their one-tensor-per-utterance files.
void write_tensor_record(std::ostream& out, const std::string& name, const Tensor& value);
std::pair<std::string, Tensor> read_tensor_record(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Store bridging. Loading marks every entry trainable; callers re-apply
// freeze masks afterwards.
Checkpoint store_to_checkpoint(const ParamStore& store, const std::string& config_text);
ParamStore checkpoint_to_store(const Checkpoint& ckpt);

}  // namespace addm
