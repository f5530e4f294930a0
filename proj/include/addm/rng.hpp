// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "addm/tensor.hpp"

namespace addm {

// Counter-based random stream: value = mix(seed, stream, counter). Pure in
// (seed, stream, counter), so replays are order-independent and parallel
// consumers stay independent by taking disjoint stream ids.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  static uint64_t value_at(uint64_t seed, uint64_t stream, uint64_t counter);

  uint64_t next_u64() { return value_at(seed_, stream_, counter_++); }

  // [0, 1)
  double uniform();
  // standard normal, Box-Muller; consumes exactly two counter ticks
  double normal();
  float normal_f() { return static_cast<float>(normal()); }

  // n iid standard normal draws
  Tensor normal_tensor(std::vector<int64_t> shape);

  int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive range

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

// Stream-id registry. Composite ids combine a purpose tag with an index so
// concurrent jobs never share a stream.
namespace streams {
constexpr uint64_t kParamInit = 1;
constexpr uint64_t kBatch = 2;
constexpr uint64_t kTrainNoise = 3;
constexpr uint64_t kSampler = 4;
constexpr uint64_t kProbe = 5;
constexpr uint64_t kPhonemeProto = 6;
constexpr uint64_t kSpeakerProto = 7;
constexpr uint64_t kTranscript = 8;
constexpr uint64_t kUtterance = 9;

inline uint64_t sub(uint64_t purpose, uint64_t index) { return (purpose << 32) | index; }
}  // namespace streams

}  // namespace addm
