// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace addm {

namespace {
constexpr char kMagic[4] = {'A', 'D', 'D', 'M'};
constexpr std::uint32_t kDtypeF32 = 0;
constexpr std::uint64_t kMaxRank = 8;

// Tensors are stored little-endian; the byte-level writers below keep the
// format portable instead of assuming host endianness.
void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, const float* data, std::size_t n) {
  std::vector<unsigned char> buf(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void get_f32(std::istream& in, float* data, std::size_t n) {
  std::vector<unsigned char> buf(4 * n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw std::runtime_error("checkpoint: truncated tensor payload");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(buf[4 * i + k]) << (8 * k);
    std::memcpy(&data[i], &bits, 4);
  }
}
}  // namespace

void write_tensor_record(std::ostream& out, const std::string& name, const Tensor& value) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, kDtypeF32);
  put_u64(out, value.shape.size());
  for (int64_t d : value.shape) put_u64(out, static_cast<std::uint64_t>(d));
  put_f32(out, value.data.data(), value.data.size());
  if (!out) throw std::runtime_error("checkpoint: write failed for tensor " + name);
}

std::pair<std::string, Tensor> read_tensor_record(std::istream& in) {
  const std::uint64_t name_len = get_u64(in);
  if (name_len > 4096) throw std::runtime_error("checkpoint: implausible tensor name length");
  std::string name(name_len, '\0');
  if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
    throw std::runtime_error("checkpoint: truncated tensor name");
  const std::uint32_t dtype = get_u32(in);
  if (dtype != kDtypeF32)
    throw std::runtime_error("checkpoint: unsupported dtype code " + std::to_string(dtype) +
                             " for tensor " + name);
  const std::uint64_t rank = get_u64(in);
  if (rank > kMaxRank) throw std::runtime_error("checkpoint: implausible rank for tensor " + name);
  std::vector<int64_t> shape(rank);
  std::uint64_t numel = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    const std::uint64_t dim = get_u64(in);
    if (dim > (1ull << 32) || numel * dim > (1ull << 32))
      throw std::runtime_error("checkpoint: implausible dims for tensor " + name);
    shape[i] = static_cast<int64_t>(dim);
    numel *= dim;
  }
  Tensor value(shape);
  get_f32(in, value.data.data(), value.data.size());
  return {std::move(name), std::move(value)};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, ckpt.config_text.size());
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  put_u64(out, ckpt.tensors.size());
  for (const auto& [name, value] : ckpt.tensors) write_tensor_record(out, name, value);
  out.flush();
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version) +
                             " (expected " + std::to_string(kCheckpointVersion) + ") in " + path);
  Checkpoint ckpt;
  const std::uint64_t cfg_len = get_u64(in);
  ckpt.config_text.resize(cfg_len);
  if (!in.read(ckpt.config_text.data(), static_cast<std::streamsize>(cfg_len)))
    throw std::runtime_error("checkpoint: truncated config block in " + path);
  const std::uint64_t count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, value] = read_tensor_record(in);
    if (!ckpt.tensors.emplace(std::move(name), std::move(value)).second)
      throw std::runtime_error("checkpoint: duplicate tensor name in " + path);
  }
  return ckpt;
}

Checkpoint store_to_checkpoint(const ParamStore& store, const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  for (const auto& name : store.names()) ckpt.tensors.emplace(name, store.at(name));
  return ckpt;
}

ParamStore checkpoint_to_store(const Checkpoint& ckpt) {
  ParamStore store;
  for (const auto& [name, value] : ckpt.tensors) store.add(name, value);
  return store;
}

}  // namespace addm
