// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "addm/tensor.hpp"

namespace addm {

enum class Op {
  Leaf,
  Matmul,
  Conv1d,
  LayerNorm,
  Affine,
  Add,
  Concat,
  Tanh,
  Sigmoid,
  Relu,
  GatedTanhSigmoid,
  Softmax,
  EmbeddingLookup,
  Mean,
  Sum,
  Mse,
  WeightedMse,
};

const char* op_name(Op op);

struct OpAttrs {
  int64_t dilation = 1;          // Conv1d
  double epsilon = 1e-5;         // LayerNorm
  int axis = 0;                  // Concat
  bool transpose_b = false;      // Matmul: y = a * b^T
  std::vector<int64_t> ids;      // EmbeddingLookup row indices
};

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order; backward walks them once in reverse. A tape is single-use: after
// backward it is consumed and refuses further work.
template <typename S>
class Tape {
 public:
  int leaf(TensorT<S> value, bool grad_tracked);
  int constant(TensorT<S> value) { return leaf(std::move(value), false); }

  int apply(Op op, const std::vector<int>& inputs, const OpAttrs& attrs = {});

  const TensorT<S>& value(int id) const { return nodes_[check_id(id)].value; }
  // Valid after backward; tracked nodes only.
  const TensorT<S>& grad(int id) const;
  bool tracked(int id) const { return nodes_[check_id(id)].tracked; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tracked
  // node. loss must be scalar (numel == 1).
  void backward(int loss_id);

  bool consumed() const { return consumed_; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<int> inputs;
    OpAttrs attrs;
    TensorT<S> value;
    TensorT<S> grad;  // allocated lazily for tracked nodes during backward
    bool tracked = false;
  };

  size_t check_id(int id) const;
  TensorT<S>& grad_buf(int id);
  void backprop_node(int id);

  // deque keeps value()/grad() references stable across later apply() calls
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Gradients of tracked leaves by name; leaves never reached by the loss get
// zeros. Call after tape.backward().
template <typename S>
std::map<std::string, TensorT<S>> collect_grads(const Tape<S>& tape,
                                                const std::map<std::string, int>& named_leaves);

}  // namespace addm
