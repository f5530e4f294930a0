// Copyright (c) 2026 The addm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "addm/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace addm {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Matmul: return "matmul";
    case Op::Conv1d: return "conv1d";
    case Op::LayerNorm: return "layer_norm";
    case Op::Affine: return "affine";
    case Op::Add: return "add";
    case Op::Concat: return "concat";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::GatedTanhSigmoid: return "gated_tanh_sigmoid";
    case Op::Softmax: return "softmax";
    case Op::EmbeddingLookup: return "embedding_lookup";
    case Op::Mean: return "mean";
    case Op::Sum: return "sum";
    case Op::Mse: return "mse";
    case Op::WeightedMse: return "weighted_mse";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(Op op, const std::string& msg) {
  throw std::runtime_error(std::string(op_name(op)) + ": " + msg);
}

void require(bool cond, Op op, const std::string& msg) {
  if (!cond) fail(op, msg);
}

template <typename S>
S sigmoid_v(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// forward kernels
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> fw_matmul(const TensorT<S>& a, const TensorT<S>& b, bool tb) {
  require(b.rank() == 2, Op::Matmul, "rhs must be rank 2, got " + shape_str(b));
  require(a.rank() == 1 || a.rank() == 2, Op::Matmul, "lhs must be rank 1 or 2, got " + shape_str(a));
  const int64_t m = a.rank() == 2 ? a.shape[0] : 1;
  const int64_t k = a.cols();
  const int64_t bk = tb ? b.shape[1] : b.shape[0];
  const int64_t n = tb ? b.shape[0] : b.shape[1];
  require(k == bk, Op::Matmul,
          "inner dimension mismatch: " + shape_str(a) + " x " + shape_str(b) +
              (tb ? " (transpose_b)" : ""));
  TensorT<S> y(a.rank() == 2 ? std::vector<int64_t>{m, n} : std::vector<int64_t>{n});
  const S* ap = a.data.data();
  const S* bp = b.data.data();
  S* yp = y.data.data();
  if (!tb) {
    for (int64_t i = 0; i < m; ++i) {
      S* yrow = yp + i * n;
      const S* arow = ap + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const S av = arow[p];
        const S* brow = bp + p * n;
        for (int64_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t i = 0; i < m; ++i) {
      const S* arow = ap + i * k;
      S* yrow = yp + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const S* brow = bp + j * k;
        S acc = 0;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        yrow[j] = acc;
      }
    }
  }
  return y;
}

// x: (L, Cin), w: (Cout, Cin, k) with odd k, optional bias (Cout).
// Symmetric zero padding d*(k-1)/2 keeps the output length equal to L.
template <typename S>
TensorT<S> fw_conv1d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>* bias,
                     int64_t d) {
  require(x.rank() == 2, Op::Conv1d, "input must be rank 2 (L, Cin), got " + shape_str(x));
  require(w.rank() == 3, Op::Conv1d, "weight must be rank 3 (Cout, Cin, k), got " + shape_str(w));
  const int64_t L = x.shape[0], cin = x.shape[1];
  const int64_t cout = w.shape[0], k = w.shape[2];
  require(w.shape[1] == cin, Op::Conv1d,
          "channel mismatch: input " + shape_str(x) + " vs weight " + shape_str(w));
  require(k % 2 == 1, Op::Conv1d, "kernel size must be odd, got " + std::to_string(k));
  require(d >= 1, Op::Conv1d, "dilation must be >= 1, got " + std::to_string(d));
  if (bias)
    require(bias->rank() == 1 && bias->shape[0] == cout, Op::Conv1d,
            "bias must be (Cout), got " + shape_str(*bias));
  const int64_t pad = d * (k - 1) / 2;

  // (j, ci, co) weight layout so the innermost accumulation is contiguous
  std::vector<S> wt(static_cast<size_t>(k * cin * cout));
  for (int64_t co = 0; co < cout; ++co)
    for (int64_t ci = 0; ci < cin; ++ci)
      for (int64_t j = 0; j < k; ++j)
        wt[static_cast<size_t>((j * cin + ci) * cout + co)] =
            w.data[static_cast<size_t>((co * cin + ci) * k + j)];

  TensorT<S> y({L, cout});
  S* yp = y.data.data();
  if (bias) {
    for (int64_t l = 0; l < L; ++l)
      for (int64_t co = 0; co < cout; ++co) yp[l * cout + co] = bias->data[static_cast<size_t>(co)];
  }
  const S* xp = x.data.data();
  for (int64_t l = 0; l < L; ++l) {
    S* yrow = yp + l * cout;
    for (int64_t j = 0; j < k; ++j) {
      const int64_t src = l + d * j - pad;
      if (src < 0 || src >= L) continue;
      const S* xrow = xp + src * cin;
      const S* wj = wt.data() + j * cin * cout;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const S xv = xrow[ci];
        const S* wrow = wj + ci * cout;
        for (int64_t co = 0; co < cout; ++co) yrow[co] += xv * wrow[co];
      }
    }
  }
  return y;
}

template <typename S>
TensorT<S> fw_layer_norm(const TensorT<S>& x, const TensorT<S>& g, const TensorT<S>& b,
                         double eps) {
  require(x.rank() == 1 || x.rank() == 2, Op::LayerNorm,
          "input must be rank 1 or 2, got " + shape_str(x));
  const int64_t n = x.cols();
  const int64_t rows = x.numel() / n;
  require(g.rank() == 1 && g.shape[0] == n, Op::LayerNorm,
          "gamma must be (" + std::to_string(n) + "), got " + shape_str(g));
  require(b.rank() == 1 && b.shape[0] == n, Op::LayerNorm,
          "beta must be (" + std::to_string(n) + "), got " + shape_str(b));
  TensorT<S> y(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * n;
    S* yr = y.data.data() + r * n;
    S mu = 0;
    for (int64_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<S>(n);
    S var = 0;
    for (int64_t i = 0; i < n; ++i) {
      const S dv = xr[i] - mu;
      var += dv * dv;
    }
    var /= static_cast<S>(n);
    const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
    for (int64_t i = 0; i < n; ++i) yr[i] = (xr[i] - mu) * inv * g.data[static_cast<size_t>(i)] +
                                            b.data[static_cast<size_t>(i)];
  }
  return y;
}

template <typename S>
TensorT<S> fw_affine(const TensorT<S>& x, const TensorT<S>& g, const TensorT<S>& b) {
  const int64_t n = x.cols();
  require(x.rank() == 1 || x.rank() == 2, Op::Affine, "input must be rank 1 or 2, got " + shape_str(x));
  require(g.rank() == 1 && g.shape[0] == n, Op::Affine,
          "scale must be (" + std::to_string(n) + "), got " + shape_str(g));
  require(b.rank() == 1 && b.shape[0] == n, Op::Affine,
          "bias must be (" + std::to_string(n) + "), got " + shape_str(b));
  TensorT<S> y(x.shape);
  const int64_t rows = x.numel() / n;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t i = 0; i < n; ++i)
      y.data[static_cast<size_t>(r * n + i)] =
          x.data[static_cast<size_t>(r * n + i)] * g.data[static_cast<size_t>(i)] +
          b.data[static_cast<size_t>(i)];
  return y;
}

template <typename S>
TensorT<S> fw_add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.same_shape(b)) {
    TensorT<S> y(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
  }
  // rowwise broadcast: (R, n) + (n)
  if (a.rank() == 2 && b.rank() == 1 && a.shape[1] == b.shape[0]) {
    TensorT<S> y(a.shape);
    const int64_t rows = a.shape[0], n = a.shape[1];
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t i = 0; i < n; ++i)
        y.data[static_cast<size_t>(r * n + i)] =
            a.data[static_cast<size_t>(r * n + i)] + b.data[static_cast<size_t>(i)];
    return y;
  }
  fail(Op::Add, "shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
}

template <typename S>
TensorT<S> fw_concat(const TensorT<S>& a, const TensorT<S>& b, int axis) {
  if (a.rank() == 1 && b.rank() == 1) {
    require(axis == 0, Op::Concat, "rank-1 concat requires axis 0");
    TensorT<S> y({a.shape[0] + b.shape[0]});
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
    return y;
  }
  require(a.rank() == 2 && b.rank() == 2, Op::Concat,
          "expects two rank-1 or two rank-2 tensors, got " + shape_str(a) + " and " + shape_str(b));
  require(axis == 0 || axis == 1, Op::Concat, "axis must be 0 or 1");
  if (axis == 0) {
    require(a.shape[1] == b.shape[1], Op::Concat,
            "column mismatch: " + shape_str(a) + " vs " + shape_str(b));
    TensorT<S> y({a.shape[0] + b.shape[0], a.shape[1]});
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
    return y;
  }
  require(a.shape[0] == b.shape[0], Op::Concat,
          "row mismatch: " + shape_str(a) + " vs " + shape_str(b));
  TensorT<S> y({a.shape[0], a.shape[1] + b.shape[1]});
  const int64_t rows = a.shape[0], na = a.shape[1], nb = b.shape[1];
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.data.begin() + r * na, na, y.data.begin() + r * (na + nb));
    std::copy_n(b.data.begin() + r * nb, nb, y.data.begin() + r * (na + nb) + na);
  }
  return y;
}

template <typename S, typename F>
TensorT<S> fw_elementwise(const TensorT<S>& x, F f) {
  TensorT<S> y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = f(x.data[i]);
  return y;
}

template <typename S>
TensorT<S> fw_gated(const TensorT<S>& x) {
  const int64_t n = x.cols();
  require(n % 2 == 0, Op::GatedTanhSigmoid,
          "last dimension must be even for the channel split, got " + shape_str(x));
  const int64_t c = n / 2;
  const int64_t rows = x.numel() / n;
  TensorT<S> y(x.rank() == 1 ? std::vector<int64_t>{c} : std::vector<int64_t>{rows, c});
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * n;
    S* yr = y.data.data() + r * c;
    for (int64_t i = 0; i < c; ++i) yr[i] = std::tanh(xr[i]) * sigmoid_v(xr[c + i]);
  }
  return y;
}

template <typename S>
TensorT<S> fw_softmax(const TensorT<S>& x) {
  require(x.rank() == 1 || x.rank() == 2, Op::Softmax, "input must be rank 1 or 2, got " + shape_str(x));
  const int64_t n = x.cols();
  const int64_t rows = x.numel() / n;
  TensorT<S> y(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * n;
    S* yr = y.data.data() + r * n;
    S mx = xr[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
    S z = 0;
    for (int64_t i = 0; i < n; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      z += yr[i];
    }
    for (int64_t i = 0; i < n; ++i) yr[i] /= z;
  }
  return y;
}

template <typename S>
TensorT<S> fw_embedding(const TensorT<S>& table, const std::vector<int64_t>& ids) {
  require(table.rank() == 2, Op::EmbeddingLookup, "table must be rank 2, got " + shape_str(table));
  require(!ids.empty(), Op::EmbeddingLookup, "no indices given");
  const int64_t v = table.shape[0], e = table.shape[1];
  for (int64_t id : ids)
    require(id >= 0 && id < v, Op::EmbeddingLookup,
            "index " + std::to_string(id) + " out of range [0, " + std::to_string(v) + ")");
  const int64_t n = static_cast<int64_t>(ids.size());
  TensorT<S> y(n == 1 ? std::vector<int64_t>{e} : std::vector<int64_t>{n, e});
  for (int64_t r = 0; r < n; ++r)
    std::copy_n(table.data.begin() + ids[static_cast<size_t>(r)] * e, e, y.data.begin() + r * e);
  return y;
}

template <typename S>
TensorT<S> fw_reduce(const TensorT<S>& x, bool mean) {
  S acc = 0;
  for (S v : x.data) acc += v;
  if (mean) acc /= static_cast<S>(x.numel());
  return TensorT<S>::scalar(acc);
}

template <typename S>
TensorT<S> fw_mse(const TensorT<S>& p, const TensorT<S>& t, const TensorT<S>* w) {
  require(p.same_shape(t), Op::Mse,
          "prediction/target shape mismatch: " + shape_str(p) + " vs " + shape_str(t));
  if (w)
    require(p.same_shape(*w), Op::WeightedMse,
            "weight shape mismatch: " + shape_str(p) + " vs " + shape_str(*w));
  S acc = 0;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const S dv = p.data[i] - t.data[i];
    acc += (w ? w->data[i] : S(1)) * dv * dv;
  }
  return TensorT<S>::scalar(acc / static_cast<S>(p.numel()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename S>
size_t Tape<S>::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::runtime_error("tape: invalid node id " + std::to_string(id));
  return static_cast<size_t>(id);
}

template <typename S>
int Tape<S>::leaf(TensorT<S> value, bool grad_tracked) {
  if (consumed_) throw std::runtime_error("tape: consumed by backward, create a new tape");
  if (!value.all_finite()) throw std::runtime_error("leaf: non-finite values in input tensor");
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.tracked = grad_tracked;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename S>
int Tape<S>::apply(Op op, const std::vector<int>& inputs, const OpAttrs& attrs) {
  if (consumed_) throw std::runtime_error("tape: consumed by backward, create a new tape");
  std::vector<const TensorT<S>*> in;
  in.reserve(inputs.size());
  bool tracked = false;
  for (int id : inputs) {
    const Node& node = nodes_[check_id(id)];
    in.push_back(&node.value);
    tracked = tracked || node.tracked;
  }
  auto arity = [&](size_t lo, size_t hi) {
    require(in.size() >= lo && in.size() <= hi, op,
            "expected " + std::to_string(lo) + (hi != lo ? ".." + std::to_string(hi) : "") +
                " inputs, got " + std::to_string(in.size()));
  };

  TensorT<S> value;
  switch (op) {
    case Op::Leaf:
      throw std::runtime_error("apply: use leaf() to add inputs");
    case Op::Matmul:
      arity(2, 2);
      value = fw_matmul(*in[0], *in[1], attrs.transpose_b);
      break;
    case Op::Conv1d:
      arity(2, 3);
      value = fw_conv1d(*in[0], *in[1], in.size() == 3 ? in[2] : nullptr, attrs.dilation);
      break;
    case Op::LayerNorm:
      arity(3, 3);
      value = fw_layer_norm(*in[0], *in[1], *in[2], attrs.epsilon);
      break;
    case Op::Affine:
      arity(3, 3);
      value = fw_affine(*in[0], *in[1], *in[2]);
      break;
    case Op::Add:
      arity(2, 2);
      value = fw_add(*in[0], *in[1]);
      break;
    case Op::Concat:
      arity(2, 2);
      value = fw_concat(*in[0], *in[1], attrs.axis);
      break;
    case Op::Tanh:
      arity(1, 1);
      value = fw_elementwise(*in[0], [](S v) { return std::tanh(v); });
      break;
    case Op::Sigmoid:
      arity(1, 1);
      value = fw_elementwise(*in[0], [](S v) { return sigmoid_v(v); });
      break;
    case Op::Relu:
      arity(1, 1);
      value = fw_elementwise(*in[0], [](S v) { return v > S(0) ? v : S(0); });
      break;
    case Op::GatedTanhSigmoid:
      arity(1, 1);
      value = fw_gated(*in[0]);
      break;
    case Op::Softmax:
      arity(1, 1);
      value = fw_softmax(*in[0]);
      break;
    case Op::EmbeddingLookup:
      arity(1, 1);
      value = fw_embedding(*in[0], attrs.ids);
      break;
    case Op::Mean:
      arity(1, 1);
      value = fw_reduce(*in[0], true);
      break;
    case Op::Sum:
      arity(1, 1);
      value = fw_reduce(*in[0], false);
      break;
    case Op::Mse:
      arity(2, 2);
      value = fw_mse<S>(*in[0], *in[1], nullptr);
      break;
    case Op::WeightedMse:
      arity(3, 3);
      value = fw_mse(*in[0], *in[1], in[2]);
      break;
  }
  if (!value.all_finite()) fail(op, "non-finite values in output");

  Node n;
  n.op = op;
  n.inputs = inputs;
  n.attrs = attrs;
  n.value = std::move(value);
  n.tracked = tracked;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename S>
const TensorT<S>& Tape<S>::grad(int id) const {
  const Node& n = nodes_[check_id(id)];
  if (!consumed_) throw std::runtime_error("tape: grad requested before backward");
  if (!n.tracked) throw std::runtime_error("tape: grad requested for untracked node");
  return n.grad;
}

template <typename S>
TensorT<S>& Tape<S>::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) n.grad = TensorT<S>(n.value.shape);
  return n.grad;
}

template <typename S>
void Tape<S>::backward(int loss_id) {
  if (consumed_) throw std::runtime_error("tape: double backward is unsupported");
  const Node& loss = nodes_[check_id(loss_id)];
  if (loss.value.numel() != 1)
    throw std::runtime_error("backward: loss must be scalar, got shape " + shape_str(loss.value));
  consumed_ = true;
  if (!loss.tracked) return;  // nothing reaches a tracked leaf
  grad_buf(loss_id).data[0] = S(1);
  for (int id = loss_id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.tracked || n.op == Op::Leaf || n.grad.data.empty()) continue;
    backprop_node(id);
  }
}

template <typename S>
void Tape<S>::backprop_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const TensorT<S>& dy = n.grad;
  auto tracked_in = [&](size_t slot) { return nodes_[static_cast<size_t>(n.inputs[slot])].tracked; };
  auto gin = [&](size_t slot) -> TensorT<S>& { return grad_buf(n.inputs[slot]); };
  auto vin = [&](size_t slot) -> const TensorT<S>& {
    return nodes_[static_cast<size_t>(n.inputs[slot])].value;
  };

  switch (n.op) {
    case Op::Leaf:
      return;

    case Op::Matmul: {
      const TensorT<S>& a = vin(0);
      const TensorT<S>& b = vin(1);
      const int64_t m = a.rank() == 2 ? a.shape[0] : 1;
      const int64_t k = a.cols();
      const int64_t nn = n.attrs.transpose_b ? b.shape[0] : b.shape[1];
      const S* dyp = dy.data.data();
      if (tracked_in(0)) {
        TensorT<S>& da = gin(0);
        if (!n.attrs.transpose_b) {
          // dA = dY * B^T
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              const S* brow = b.data.data() + p * nn;
              const S* dyrow = dyp + i * nn;
              S acc = 0;
              for (int64_t j = 0; j < nn; ++j) acc += dyrow[j] * brow[j];
              da.data[static_cast<size_t>(i * k + p)] += acc;
            }
        } else {
          // dA = dY * B
          for (int64_t i = 0; i < m; ++i) {
            const S* dyrow = dyp + i * nn;
            S* darow = da.data.data() + i * k;
            for (int64_t j = 0; j < nn; ++j) {
              const S dv = dyrow[j];
              const S* brow = b.data.data() + j * k;
              for (int64_t p = 0; p < k; ++p) darow[p] += dv * brow[p];
            }
          }
        }
      }
      if (tracked_in(1)) {
        TensorT<S>& db = gin(1);
        if (!n.attrs.transpose_b) {
          // dB = A^T * dY
          for (int64_t i = 0; i < m; ++i) {
            const S* arow = a.data.data() + i * k;
            const S* dyrow = dyp + i * nn;
            for (int64_t p = 0; p < k; ++p) {
              const S av = arow[p];
              S* dbrow = db.data.data() + p * nn;
              for (int64_t j = 0; j < nn; ++j) dbrow[j] += av * dyrow[j];
            }
          }
        } else {
          // dB = dY^T * A
          for (int64_t i = 0; i < m; ++i) {
            const S* arow = a.data.data() + i * k;
            const S* dyrow = dyp + i * nn;
            for (int64_t j = 0; j < nn; ++j) {
              const S dv = dyrow[j];
              S* dbrow = db.data.data() + j * k;
              for (int64_t p = 0; p < k; ++p) dbrow[p] += dv * arow[p];
            }
          }
        }
      }
      return;
    }

    case Op::Conv1d: {
      const TensorT<S>& x = vin(0);
      const TensorT<S>& w = vin(1);
      const int64_t L = x.shape[0], cin = x.shape[1];
      const int64_t cout = w.shape[0], k = w.shape[2];
      const int64_t d = n.attrs.dilation;
      const int64_t pad = d * (k - 1) / 2;
      const S* dyp = dy.data.data();
      if (tracked_in(0)) {
        // dx[m, ci] = sum_{co, j} dy[m - (d*j - pad), co] * w[co, ci, j]
        std::vector<S> wt(static_cast<size_t>(k * cin * cout));
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t j = 0; j < k; ++j)
              wt[static_cast<size_t>((j * cin + ci) * cout + co)] =
                  w.data[static_cast<size_t>((co * cin + ci) * k + j)];
        TensorT<S>& dx = gin(0);
        for (int64_t mrow = 0; mrow < L; ++mrow) {
          S* dxrow = dx.data.data() + mrow * cin;
          for (int64_t j = 0; j < k; ++j) {
            const int64_t lsrc = mrow - (d * j - pad);
            if (lsrc < 0 || lsrc >= L) continue;
            const S* dyrow = dyp + lsrc * cout;
            const S* wj = wt.data() + j * cin * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const S* wrow = wj + ci * cout;
              S acc = 0;
              for (int64_t co = 0; co < cout; ++co) acc += dyrow[co] * wrow[co];
              dxrow[ci] += acc;
            }
          }
        }
      }
      if (tracked_in(1)) {
        // dwt in (j, ci, co) layout, folded back at the end
        std::vector<S> dwt(static_cast<size_t>(k * cin * cout), S(0));
        for (int64_t l = 0; l < L; ++l) {
          const S* dyrow = dyp + l * cout;
          for (int64_t j = 0; j < k; ++j) {
            const int64_t src = l + d * j - pad;
            if (src < 0 || src >= L) continue;
            const S* xrow = x.data.data() + src * cin;
            S* dwj = dwt.data() + j * cin * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const S xv = xrow[ci];
              S* dwrow = dwj + ci * cout;
              for (int64_t co = 0; co < cout; ++co) dwrow[co] += xv * dyrow[co];
            }
          }
        }
        TensorT<S>& dw = gin(1);
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t j = 0; j < k; ++j)
              dw.data[static_cast<size_t>((co * cin + ci) * k + j)] +=
                  dwt[static_cast<size_t>((j * cin + ci) * cout + co)];
      }
      if (n.inputs.size() == 3 && tracked_in(2)) {
        TensorT<S>& db = gin(2);
        for (int64_t l = 0; l < L; ++l)
          for (int64_t co = 0; co < cout; ++co)
            db.data[static_cast<size_t>(co)] += dyp[l * cout + co];
      }
      return;
    }

    case Op::LayerNorm: {
      const TensorT<S>& x = vin(0);
      const TensorT<S>& g = vin(1);
      const int64_t nn = x.cols();
      const int64_t rows = x.numel() / nn;
      const S eps = static_cast<S>(n.attrs.epsilon);
      const bool tx = tracked_in(0), tg = tracked_in(1), tb = tracked_in(2);
      std::vector<S> xhat(static_cast<size_t>(nn));
      for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data.data() + r * nn;
        const S* dyr = dy.data.data() + r * nn;
        S mu = 0;
        for (int64_t i = 0; i < nn; ++i) mu += xr[i];
        mu /= static_cast<S>(nn);
        S var = 0;
        for (int64_t i = 0; i < nn; ++i) {
          const S dv = xr[i] - mu;
          var += dv * dv;
        }
        var /= static_cast<S>(nn);
        const S inv = S(1) / std::sqrt(var + eps);
        for (int64_t i = 0; i < nn; ++i) xhat[static_cast<size_t>(i)] = (xr[i] - mu) * inv;
        if (tg) {
          S* dg = gin(1).data.data();
          for (int64_t i = 0; i < nn; ++i) dg[i] += dyr[i] * xhat[static_cast<size_t>(i)];
        }
        if (tb) {
          S* db = gin(2).data.data();
          for (int64_t i = 0; i < nn; ++i) db[i] += dyr[i];
        }
        if (tx) {
          S m1 = 0, m2 = 0;
          for (int64_t i = 0; i < nn; ++i) {
            const S dxh = dyr[i] * g.data[static_cast<size_t>(i)];
            m1 += dxh;
            m2 += dxh * xhat[static_cast<size_t>(i)];
          }
          m1 /= static_cast<S>(nn);
          m2 /= static_cast<S>(nn);
          S* dxr = gin(0).data.data() + r * nn;
          for (int64_t i = 0; i < nn; ++i) {
            const S dxh = dyr[i] * g.data[static_cast<size_t>(i)];
            dxr[i] += inv * (dxh - m1 - xhat[static_cast<size_t>(i)] * m2);
          }
        }
      }
      return;
    }

    case Op::Affine: {
      const TensorT<S>& x = vin(0);
      const TensorT<S>& g = vin(1);
      const int64_t nn = x.cols();
      const int64_t rows = x.numel() / nn;
      for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data.data() + r * nn;
        const S* dyr = dy.data.data() + r * nn;
        if (tracked_in(0)) {
          S* dxr = gin(0).data.data() + r * nn;
          for (int64_t i = 0; i < nn; ++i) dxr[i] += dyr[i] * g.data[static_cast<size_t>(i)];
        }
        if (tracked_in(1)) {
          S* dg = gin(1).data.data();
          for (int64_t i = 0; i < nn; ++i) dg[i] += dyr[i] * xr[i];
        }
        if (tracked_in(2)) {
          S* db = gin(2).data.data();
          for (int64_t i = 0; i < nn; ++i) db[i] += dyr[i];
        }
      }
      return;
    }

    case Op::Add: {
      const TensorT<S>& a = vin(0);
      const TensorT<S>& b = vin(1);
      if (tracked_in(0)) {
        TensorT<S>& da = gin(0);
        for (size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i];
      }
      if (tracked_in(1)) {
        TensorT<S>& db = gin(1);
        if (a.same_shape(b)) {
          for (size_t i = 0; i < dy.data.size(); ++i) db.data[i] += dy.data[i];
        } else {
          const int64_t rows = a.shape[0], nn = a.shape[1];
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < nn; ++i)
              db.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(r * nn + i)];
        }
      }
      return;
    }

    case Op::Concat: {
      const TensorT<S>& a = vin(0);
      const TensorT<S>& b = vin(1);
      const int axis = n.attrs.axis;
      if (a.rank() == 1 || axis == 0) {
        const int64_t na = a.numel();
        if (tracked_in(0)) {
          TensorT<S>& da = gin(0);
          for (int64_t i = 0; i < na; ++i) da.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(i)];
        }
        if (tracked_in(1)) {
          TensorT<S>& db = gin(1);
          for (int64_t i = 0; i < b.numel(); ++i)
            db.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(na + i)];
        }
      } else {
        const int64_t rows = a.shape[0], na = a.shape[1], nb = b.shape[1];
        for (int64_t r = 0; r < rows; ++r) {
          if (tracked_in(0)) {
            TensorT<S>& da = gin(0);
            for (int64_t i = 0; i < na; ++i)
              da.data[static_cast<size_t>(r * na + i)] += dy.data[static_cast<size_t>(r * (na + nb) + i)];
          }
          if (tracked_in(1)) {
            TensorT<S>& db = gin(1);
            for (int64_t i = 0; i < nb; ++i)
              db.data[static_cast<size_t>(r * nb + i)] +=
                  dy.data[static_cast<size_t>(r * (na + nb) + na + i)];
          }
        }
      }
      return;
    }

    case Op::Tanh: {
      if (!tracked_in(0)) return;
      TensorT<S>& dx = gin(0);
      for (size_t i = 0; i < dy.data.size(); ++i) {
        const S y = n.value.data[i];
        dx.data[i] += dy.data[i] * (S(1) - y * y);
      }
      return;
    }

    case Op::Sigmoid: {
      if (!tracked_in(0)) return;
      TensorT<S>& dx = gin(0);
      for (size_t i = 0; i < dy.data.size(); ++i) {
        const S y = n.value.data[i];
        dx.data[i] += dy.data[i] * y * (S(1) - y);
      }
      return;
    }

    case Op::Relu: {
      if (!tracked_in(0)) return;
      const TensorT<S>& x = vin(0);
      TensorT<S>& dx = gin(0);
      for (size_t i = 0; i < dy.data.size(); ++i)
        if (x.data[i] > S(0)) dx.data[i] += dy.data[i];
      return;
    }

    case Op::GatedTanhSigmoid: {
      if (!tracked_in(0)) return;
      const TensorT<S>& x = vin(0);
      const int64_t nn = x.cols();
      const int64_t c = nn / 2;
      const int64_t rows = x.numel() / nn;
      TensorT<S>& dx = gin(0);
      for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data.data() + r * nn;
        const S* dyr = dy.data.data() + r * c;
        S* dxr = dx.data.data() + r * nn;
        for (int64_t i = 0; i < c; ++i) {
          const S ta = std::tanh(xr[i]);
          const S sb = sigmoid_v(xr[c + i]);
          dxr[i] += dyr[i] * sb * (S(1) - ta * ta);
          dxr[c + i] += dyr[i] * ta * sb * (S(1) - sb);
        }
      }
      return;
    }

    case Op::Softmax: {
      if (!tracked_in(0)) return;
      const int64_t nn = n.value.cols();
      const int64_t rows = n.value.numel() / nn;
      TensorT<S>& dx = gin(0);
      for (int64_t r = 0; r < rows; ++r) {
        const S* yr = n.value.data.data() + r * nn;
        const S* dyr = dy.data.data() + r * nn;
        S dot = 0;
        for (int64_t i = 0; i < nn; ++i) dot += dyr[i] * yr[i];
        S* dxr = dx.data.data() + r * nn;
        for (int64_t i = 0; i < nn; ++i) dxr[i] += (dyr[i] - dot) * yr[i];
      }
      return;
    }

    case Op::EmbeddingLookup: {
      if (!tracked_in(0)) return;
      const int64_t e = vin(0).shape[1];
      TensorT<S>& dt = gin(0);
      for (size_t r = 0; r < n.attrs.ids.size(); ++r) {
        const int64_t id = n.attrs.ids[r];
        for (int64_t i = 0; i < e; ++i)
          dt.data[static_cast<size_t>(id * e + i)] += dy.data[r * static_cast<size_t>(e) + static_cast<size_t>(i)];
      }
      return;
    }

    case Op::Mean: {
      if (!tracked_in(0)) return;
      const S scale = dy.data[0] / static_cast<S>(vin(0).numel());
      TensorT<S>& dx = gin(0);
      for (auto& v : dx.data) v += scale;
      return;
    }

    case Op::Sum: {
      if (!tracked_in(0)) return;
      const S scale = dy.data[0];
      TensorT<S>& dx = gin(0);
      for (auto& v : dx.data) v += scale;
      return;
    }

    case Op::Mse:
    case Op::WeightedMse: {
      const TensorT<S>& p = vin(0);
      const TensorT<S>& t = vin(1);
      const TensorT<S>* w = n.op == Op::WeightedMse ? &vin(2) : nullptr;
      const S scale = dy.data[0] * S(2) / static_cast<S>(p.numel());
      for (size_t i = 0; i < p.data.size(); ++i) {
        const S g = scale * (w ? w->data[i] : S(1)) * (p.data[i] - t.data[i]);
        if (tracked_in(0)) gin(0).data[i] += g;
        if (tracked_in(1)) gin(1).data[i] -= g;
      }
      if (w && tracked_in(2)) {
        const S ws = dy.data[0] / static_cast<S>(p.numel());
        TensorT<S>& dw = gin(2);
        for (size_t i = 0; i < p.data.size(); ++i) {
          const S dv = p.data[i] - t.data[i];
          dw.data[i] += ws * dv * dv;
        }
      }
      return;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

template <typename S>
std::map<std::string, TensorT<S>> collect_grads(const Tape<S>& tape,
                                                const std::map<std::string, int>& named_leaves) {
  std::map<std::string, TensorT<S>> out;
  for (const auto& [name, id] : named_leaves) {
    if (!tape.tracked(id)) continue;
    const TensorT<S>& g = tape.grad(id);
    if (g.data.empty())
      out.emplace(name, TensorT<S>(tape.value(id).shape));
    else
      out.emplace(name, g);
  }
  return out;
}

template std::map<std::string, TensorT<float>> collect_grads(const Tape<float>&,
                                                             const std::map<std::string, int>&);
template std::map<std::string, TensorT<double>> collect_grads(const Tape<double>&,
                                                              const std::map<std::string, int>&);

}  // namespace addm
