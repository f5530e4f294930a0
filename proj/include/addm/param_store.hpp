// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "addm/rng.hpp"
#include "addm/tape.hpp"
#include "addm/tensor.hpp"

namespace addm {

// Named parameter collection. Names are hierarchical ("denoiser.block3.dil.w")
// and unique; every entry carries a trainable flag so finetune masks partition
// the store exactly.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor value, bool trainable = true);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  void set_trainable(const std::string& name, bool trainable);
  bool is_trainable(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  int64_t total_params() const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

 private:
  const Entry& entry(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

using GradMap = std::map<std::string, Tensor>;

// Lazily places store parameters on a tape as leaves, caching node ids by
// name. `tracked` decides per name whether the leaf records gradients.
// Overrides substitute values before first use (gradient checking).
template <typename S>
class TapedParams {
 public:
  TapedParams(Tape<S>& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  void track_names(std::set<std::string> tracked) { tracked_ = std::move(tracked); }
  void track_all() { track_everything_ = true; }
  void override_value(const std::string& name, TensorT<S> value);

  int node(const std::string& name);
  const std::map<std::string, int>& used() const { return used_; }

 private:
  Tape<S>* tape_;
  const ParamStore* store_;
  std::set<std::string> tracked_;
  bool track_everything_ = false;
  std::map<std::string, TensorT<S>> overrides_;
  std::map<std::string, int> used_;
};

extern template class TapedParams<float>;
extern template class TapedParams<double>;

// Weight initializers.
Tensor init_normal(std::vector<int64_t> shape, double stddev, RngStream& rng);
Tensor init_linear(int64_t fan_in, std::vector<int64_t> shape, RngStream& rng);

}  // namespace addm
