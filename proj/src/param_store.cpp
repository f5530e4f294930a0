// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace addm {

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (entries_.count(name) > 0) {
    throw std::runtime_error("ParamStore: duplicate parameter '" + name + "'");
  }
  entries_[name] = Entry{std::move(value), trainable};
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::runtime_error("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  return const_cast<Entry&>(entry(name)).value;
}

const Tensor& ParamStore::at(const std::string& name) const { return entry(name).value; }

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  const_cast<Entry&>(entry(name)).trainable = trainable;
}

bool ParamStore::is_trainable(const std::string& name) const { return entry(name).trainable; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& kv : entries_) out.push_back(kv.first);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& kv : entries_) {
    if (kv.first.rfind(prefix, 0) == 0) out.push_back(kv.first);
  }
  return out;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& kv : entries_) n += kv.second.value.numel();
  return n;
}

template <typename S>
void TapedParams<S>::override_value(const std::string& name, TensorT<S> value) {
  if (!store_->has(name)) {
    throw std::runtime_error("TapedParams: override for unknown parameter '" + name + "'");
  }
  if (used_.count(name) > 0) {
    throw std::runtime_error("TapedParams: override after parameter '" + name + "' already used");
  }
  overrides_[name] = std::move(value);
}

template <typename S>
int TapedParams<S>::node(const std::string& name) {
  auto it = used_.find(name);
  if (it != used_.end()) return it->second;
  bool tracked = track_everything_ || tracked_.count(name) > 0;
  TensorT<S> v;
  auto ov = overrides_.find(name);
  if (ov != overrides_.end()) {
    v = ov->second;
  } else {
    v = cast_to<S>(store_->at(name));
  }
  int id = tape_->leaf(std::move(v), tracked);
  used_[name] = id;
  return id;
}

template class TapedParams<float>;
template class TapedParams<double>;

Tensor init_normal(std::vector<int64_t> shape, double stddev, RngStream& rng) {
  Tensor t = rng.normal_tensor(shape);
  for (float& v : t.data) v = static_cast<float>(v * stddev);
  return t;
}

Tensor init_linear(int64_t fan_in, std::vector<int64_t> shape, RngStream& rng) {
  if (fan_in <= 0) throw std::runtime_error("init_linear: fan_in must be positive");
  return init_normal(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace addm
