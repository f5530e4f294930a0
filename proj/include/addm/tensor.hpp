// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace addm {

// Dense n-dimensional tensor over a flat buffer. Row-major, contiguous.
// Rank-2 activations use (rows, cols) = (frames, channels) throughout the
// model code; mel matrices at external interfaces are (bins, frames).
template <typename S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> sh) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  TensorT(std::vector<int64_t> sh, std::vector<S> values)
      : shape(std::move(sh)), data(std::move(values)) {}

  static int64_t numel_of(const std::vector<int64_t>& sh) {
    int64_t n = 1;
    for (int64_t d : sh) n *= d;
    return n;
  }

  static TensorT zeros(std::vector<int64_t> sh) { return TensorT(std::move(sh)); }
  static TensorT full(std::vector<int64_t> sh, S v) {
    TensorT t(std::move(sh));
    for (auto& x : t.data) x = v;
    return t;
  }
  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t rows() const { return shape[0]; }
  int64_t cols() const { return shape[shape.size() - 1]; }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  S at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

std::string shape_str(const std::vector<int64_t>& shape);

template <typename S>
std::string shape_str(const TensorT<S>& t) {
  return shape_str(t.shape);
}

inline Tensor64 widen(const Tensor& t) {
  Tensor64 out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<double>(t.data[i]);
  return out;
}

inline Tensor narrow(const Tensor64& t) {
  Tensor out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
  return out;
}

template <typename S>
inline TensorT<S> cast_to(const Tensor& t) {
  if constexpr (std::is_same_v<S, float>) {
    return t;
  } else {
    return widen(t);
  }
}

template <typename S>
bool bit_equal(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

// (r, c) -> (c, r). Used at data boundaries (mel files are (bins, frames),
// model internals run (frames, channels)); never part of the autodiff graph.
template <typename S>
TensorT<S> transposed(const TensorT<S>& t) {
  TensorT<S> out({t.shape[1], t.shape[0]});
  for (int64_t r = 0; r < t.shape[0]; ++r)
    for (int64_t c = 0; c < t.shape[1]; ++c) out.at(c, r) = t.at(r, c);
  return out;
}

}  // namespace addm
