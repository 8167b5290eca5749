//
// Copyright 2026 The PLIS Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Reverse-mode automatic differentiation over an append-only operation
// record. Every backward rule is written with the same public ops that build
// the forward graph, so a backward pass run with `create_graph` records new
// nodes and its results can be differentiated again.

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "plis/kernels.hpp"
#include "plis/tensor.hpp"

namespace plis {

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  div,
  scale,       // x * c, c a compile-time constant of the node
  add_scalar,  // x + c
  matmul,
  transpose,
  conv2d,
  flip_kernel,
  permute01,
  relu,
  tanh,
  softplus,
  exp,
  log,
  square,
  sqrt,
  max_scalar,
  sum,  // reduce to attrs.shape (broadcast adjoint)
  mean,
  broadcast,
  reshape,
  slice,  // rows [begin, end) of axis 0
  pad,    // adjoint of slice: zero rows around the input on axis 0
  gaussian_noise_add,
};

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::conv2d: return "conv2d";
    case OpKind::flip_kernel: return "flip_kernel";
    case OpKind::permute01: return "permute01";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::max_scalar: return "max_scalar";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::broadcast: return "broadcast";
    case OpKind::reshape: return "reshape";
    case OpKind::slice: return "slice";
    case OpKind::pad: return "pad";
    case OpKind::gaussian_noise_add: return "gaussian_noise_add";
  }
  return "?";
}

struct OpAttrs {
  double scalar = 0.0;
  Shape shape;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t padding = 0;
};

struct Node {
  OpKind op = OpKind::leaf;
  std::vector<Tensor> inputs;
  OpAttrs attrs;
  Tensor value;  // detached
};

Tensor apply(OpKind op, std::vector<Tensor> inputs, const OpAttrs& attrs = {});

/// Operation record for one analysis call. Tensors hold a raw pointer back to
/// their graph, so a Graph is pinned in memory and must outlive them.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Registers `value` as a differentiable input.
  Tensor leaf(const Tensor& value) {
    Node node;
    node.op = OpKind::leaf;
    node.value = value.detach();
    return push(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  /// Gradients of `output` with respect to each tensor in `wrt`. Without a
  /// seed cotangent the output must be a scalar. With `create_graph` the
  /// returned tensors are nodes of this graph and can be differentiated again.
  std::vector<Tensor> backward(const Tensor& output, std::span<const Tensor> wrt,
                               bool create_graph = false,
                               const std::optional<Tensor>& seed = std::nullopt);

  std::vector<Tensor> backward(const Tensor& output, std::initializer_list<Tensor> wrt,
                               bool create_graph = false,
                               const std::optional<Tensor>& seed = std::nullopt) {
    const std::vector<Tensor> list(wrt);
    return backward(output, std::span<const Tensor>(list), create_graph, seed);
  }

 private:
  Tensor push(Node node) {
    nodes_.push_back(std::move(node));
    return view(nodes_.size() - 1);
  }

  Tensor view(std::size_t id) const {
    Tensor t = nodes_[id].value;
    t.graph_ = const_cast<Graph*>(this);
    t.node_ = id;
    return t;
  }

  std::deque<Node> nodes_;

  friend Tensor apply(OpKind, std::vector<Tensor>, const OpAttrs&);
};

// ---------------------------------------------------------------------------
// Public ops. Elementwise binaries broadcast numpy-style through explicit
// broadcast nodes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor scale(const Tensor& x, double c) {
  OpAttrs at;
  at.scalar = c;
  return apply(OpKind::scale, {x}, at);
}
inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }
inline Tensor add_scalar(const Tensor& x, double c) {
  OpAttrs at;
  at.scalar = c;
  return apply(OpKind::add_scalar, {x}, at);
}
inline Tensor matmul(const Tensor& a, const Tensor& b) { return apply(OpKind::matmul, {a, b}); }
inline Tensor transpose(const Tensor& x) { return apply(OpKind::transpose, {x}); }

/// Stride-1 cross-correlation, x[N,C,H,W], w[O,C,KH,KW], symmetric zero pad.
inline Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t padding = 0) {
  OpAttrs at;
  at.padding = padding;
  return apply(OpKind::conv2d, {x, w}, at);
}
inline Tensor flip_kernel(const Tensor& w) { return apply(OpKind::flip_kernel, {w}); }
inline Tensor permute01(const Tensor& x) { return apply(OpKind::permute01, {x}); }
inline Tensor relu(const Tensor& x) { return apply(OpKind::relu, {x}); }
inline Tensor tanh(const Tensor& x) { return apply(OpKind::tanh, {x}); }
inline Tensor softplus(const Tensor& x) { return apply(OpKind::softplus, {x}); }
inline Tensor exp(const Tensor& x) { return apply(OpKind::exp, {x}); }
inline Tensor log(const Tensor& x) { return apply(OpKind::log, {x}); }
inline Tensor square(const Tensor& x) { return apply(OpKind::square, {x}); }
inline Tensor sqrt(const Tensor& x) { return apply(OpKind::sqrt, {x}); }
inline Tensor max_scalar(const Tensor& x, double c) {
  OpAttrs at;
  at.scalar = c;
  return apply(OpKind::max_scalar, {x}, at);
}
inline Tensor sum_to(const Tensor& x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return apply(OpKind::sum, {x}, at);
}
inline Tensor sum(const Tensor& x) { return sum_to(x, Shape{}); }
inline Tensor mean(const Tensor& x) { return apply(OpKind::mean, {x}); }
inline Tensor broadcast_to(const Tensor& x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return apply(OpKind::broadcast, {x}, at);
}
inline Tensor reshape(const Tensor& x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return apply(OpKind::reshape, {x}, at);
}
inline Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  OpAttrs at;
  at.begin = begin;
  at.end = end;
  return apply(OpKind::slice, {x}, at);
}
/// Places `x` at rows [begin, begin + rows(x)) of a zero tensor with `total` rows.
inline Tensor pad(const Tensor& x, std::size_t begin, std::size_t total) {
  OpAttrs at;
  at.begin = begin;
  at.end = total;
  return apply(OpKind::pad, {x}, at);
}
/// x + noise where `noise` is a constant draw; gradient passes straight to x.
inline Tensor gaussian_noise_add(const Tensor& x, const Tensor& noise) {
  return apply(OpKind::gaussian_noise_add, {x, noise.detach()});
}

inline Tensor squared_norm(const Tensor& x) { return sum(square(x)); }

// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void shape_error(OpKind op, const std::vector<Tensor>& in,
                                     const std::string& what) {
  std::string msg = std::string(op_name(op)) + ": " + what + " (inputs";
  for (const auto& t : in) msg += " " + shape_str(t.shape());
  msg += ")";
  throw std::invalid_argument(msg);
}

inline std::vector<double> map(const Tensor& x, auto&& fn) {
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(d[i]);
  return out;
}

inline std::vector<double> zip(const Tensor& a, const Tensor& b, auto&& fn) {
  std::vector<double> out(a.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(da[i], db[i]);
  return out;
}

inline Tensor forward_value(OpKind op, const std::vector<Tensor>& in, const OpAttrs& at) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) shape_error(op, in, "expects " + std::to_string(n) + " inputs");
  };
  auto same_shape = [&] {
    arity(2);
    if (in[0].shape() != in[1].shape()) shape_error(op, in, "shape mismatch");
  };
  switch (op) {
    case OpKind::leaf:
      shape_error(op, in, "leaf is not an operation");
    case OpKind::add:
      same_shape();
      return {in[0].shape(), zip(in[0], in[1], [](double a, double b) { return a + b; })};
    case OpKind::sub:
      same_shape();
      return {in[0].shape(), zip(in[0], in[1], [](double a, double b) { return a - b; })};
    case OpKind::mul:
      same_shape();
      return {in[0].shape(), zip(in[0], in[1], [](double a, double b) { return a * b; })};
    case OpKind::div:
      same_shape();
      return {in[0].shape(), zip(in[0], in[1], [](double a, double b) { return a / b; })};
    case OpKind::gaussian_noise_add:
      same_shape();
      return {in[0].shape(), zip(in[0], in[1], [](double a, double b) { return a + b; })};
    case OpKind::scale: {
      arity(1);
      const double c = at.scalar;
      return {in[0].shape(), map(in[0], [c](double v) { return v * c; })};
    }
    case OpKind::add_scalar: {
      arity(1);
      const double c = at.scalar;
      return {in[0].shape(), map(in[0], [c](double v) { return v + c; })};
    }
    case OpKind::matmul: {
      arity(2);
      const auto& a = in[0].shape();
      const auto& b = in[1].shape();
      if (a.size() != 2 || b.size() != 2 || a[1] != b[0]) shape_error(op, in, "need [m,k]x[k,n]");
      return {Shape{a[0], b[1]}, kernels::matmul(in[0].data(), in[1].data(), a[0], a[1], b[1])};
    }
    case OpKind::transpose: {
      arity(1);
      const auto& s = in[0].shape();
      if (s.size() != 2) shape_error(op, in, "need a matrix");
      return {Shape{s[1], s[0]}, kernels::transpose(in[0].data(), s[0], s[1])};
    }
    case OpKind::conv2d: {
      arity(2);
      const auto& x = in[0].shape();
      const auto& w = in[1].shape();
      if (x.size() != 4 || w.size() != 4 || x[1] != w[1]) {
        shape_error(op, in, "need x[N,C,H,W] and w[O,C,KH,KW]");
      }
      kernels::ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], w[3], at.padding};
      if (x[2] + 2 * d.pad < d.kh || x[3] + 2 * d.pad < d.kw) {
        shape_error(op, in, "kernel larger than padded input");
      }
      return {Shape{d.batch, d.out_ch, d.out_h(), d.out_w()},
              kernels::conv2d(in[0].data(), in[1].data(), d)};
    }
    case OpKind::flip_kernel: {
      arity(1);
      const auto& w = in[0].shape();
      if (w.size() != 4) shape_error(op, in, "need a 4-d kernel");
      return {Shape{w[1], w[0], w[2], w[3]},
              kernels::flip_kernel(in[0].data(), w[0], w[1], w[2], w[3])};
    }
    case OpKind::permute01: {
      arity(1);
      const auto& s = in[0].shape();
      if (s.size() < 2) shape_error(op, in, "need rank >= 2");
      Shape out = s;
      std::swap(out[0], out[1]);
      return {out, kernels::permute01(in[0].data(), s[0], s[1], in[0].numel() / (s[0] * s[1]))};
    }
    case OpKind::relu:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return v > 0.0 ? v : 0.0; })};
    case OpKind::tanh:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return std::tanh(v); })};
    case OpKind::softplus:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) {
                return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
              })};
    case OpKind::exp:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return std::exp(v); })};
    case OpKind::log:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return std::log(v); })};
    case OpKind::square:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return v * v; })};
    case OpKind::sqrt:
      arity(1);
      return {in[0].shape(), map(in[0], [](double v) { return std::sqrt(v); })};
    case OpKind::max_scalar: {
      arity(1);
      const double c = at.scalar;
      return {in[0].shape(), map(in[0], [c](double v) { return v > c ? v : c; })};
    }
    case OpKind::sum:
      arity(1);
      if (!kernels::broadcastable_to(at.shape, in[0].shape())) {
        shape_error(op, in, "cannot reduce to " + shape_str(at.shape));
      }
      return {at.shape, kernels::sum_to(in[0].data(), in[0].shape(), at.shape)};
    case OpKind::mean: {
      arity(1);
      double s = 0.0;
      for (double v : in[0].data()) s += v;
      return Tensor::scalar(s / static_cast<double>(in[0].numel()));
    }
    case OpKind::broadcast:
      arity(1);
      if (!kernels::broadcastable_to(in[0].shape(), at.shape)) {
        shape_error(op, in, "cannot broadcast to " + shape_str(at.shape));
      }
      return {at.shape, kernels::broadcast(in[0].data(), in[0].shape(), at.shape)};
    case OpKind::reshape:
      arity(1);
      if (shape_numel(at.shape) != in[0].numel()) {
        shape_error(op, in, "cannot reshape to " + shape_str(at.shape));
      }
      return {at.shape, in[0].values()};
    case OpKind::slice: {
      arity(1);
      const auto& s = in[0].shape();
      if (s.empty() || at.begin >= at.end || at.end > s[0]) {
        shape_error(op, in, "bad row range [" + std::to_string(at.begin) + "," +
                                std::to_string(at.end) + ")");
      }
      const std::size_t row = in[0].numel() / s[0];
      Shape out = s;
      out[0] = at.end - at.begin;
      const auto d = in[0].data();
      return {out, std::vector<double>(d.begin() + at.begin * row, d.begin() + at.end * row)};
    }
    case OpKind::pad: {
      arity(1);
      const auto& s = in[0].shape();
      if (s.empty() || at.begin + s[0] > at.end) shape_error(op, in, "rows exceed padded extent");
      const std::size_t row = in[0].numel() / s[0];
      Shape out = s;
      out[0] = at.end;
      std::vector<double> v(shape_numel(out), 0.0);
      std::copy(in[0].data().begin(), in[0].data().end(), v.begin() + at.begin * row);
      return {out, std::move(v)};
    }
  }
  shape_error(op, in, "unknown op");
}

inline Tensor step_mask(const Tensor& x, double threshold) {
  return {x.shape(), map(x, [threshold](double v) { return v > threshold ? 1.0 : 0.0; })};
}

// Vector-Jacobian products, written with the public ops. Only entries with
// `need[i]` set are computed.
inline std::vector<std::optional<Tensor>> vjp(const Node& node, const std::vector<Tensor>& in,
                                              const Tensor& out, const Tensor& g,
                                              const std::vector<bool>& need) {
  std::vector<std::optional<Tensor>> r(in.size());
  const auto& at = node.attrs;
  switch (node.op) {
    case OpKind::leaf:
      break;
    case OpKind::add:
    case OpKind::gaussian_noise_add:
      if (need[0]) r[0] = g;
      if (need[1]) r[1] = g;
      break;
    case OpKind::sub:
      if (need[0]) r[0] = g;
      if (need[1]) r[1] = neg(g);
      break;
    case OpKind::mul:
      if (need[0]) r[0] = mul(g, in[1]);
      if (need[1]) r[1] = mul(g, in[0]);
      break;
    case OpKind::div:
      if (need[0]) r[0] = div(g, in[1]);
      if (need[1]) r[1] = neg(div(mul(g, out), in[1]));
      break;
    case OpKind::scale:
      r[0] = scale(g, at.scalar);
      break;
    case OpKind::add_scalar:
      r[0] = g;
      break;
    case OpKind::matmul:
      if (need[0]) r[0] = matmul(g, transpose(in[1]));
      if (need[1]) r[1] = matmul(transpose(in[0]), g);
      break;
    case OpKind::transpose:
      r[0] = transpose(g);
      break;
    case OpKind::conv2d: {
      const std::size_t kh = in[1].shape()[2];
      const std::size_t kw = in[1].shape()[3];
      if (need[0]) {
        if (kh != kw || at.padding + 1 > kh) {
          throw std::invalid_argument("conv2d backward: needs square kernels and padding < k");
        }
        r[0] = conv2d(g, flip_kernel(in[1]), kh - 1 - at.padding);
      }
      if (need[1]) r[1] = permute01(conv2d(permute01(in[0]), permute01(g), at.padding));
      break;
    }
    case OpKind::flip_kernel:
      r[0] = flip_kernel(g);
      break;
    case OpKind::permute01:
      r[0] = permute01(g);
      break;
    case OpKind::relu:
      r[0] = mul(g, step_mask(in[0], 0.0));
      break;
    case OpKind::max_scalar:
      // At the kink the constant branch wins: subgradient 0.
      r[0] = mul(g, step_mask(in[0], at.scalar));
      break;
    case OpKind::tanh:
      r[0] = mul(g, add_scalar(neg(square(out)), 1.0));
      break;
    case OpKind::softplus:
      // sigmoid(x) = (tanh(x/2) + 1) / 2
      r[0] = mul(g, add_scalar(scale(tanh(scale(in[0], 0.5)), 0.5), 0.5));
      break;
    case OpKind::exp:
      r[0] = mul(g, out);
      break;
    case OpKind::log:
      r[0] = div(g, in[0]);
      break;
    case OpKind::square:
      r[0] = mul(g, scale(in[0], 2.0));
      break;
    case OpKind::sqrt:
      r[0] = div(g, scale(out, 2.0));
      break;
    case OpKind::sum:
      r[0] = broadcast_to(g, in[0].shape());
      break;
    case OpKind::mean:
      r[0] = broadcast_to(scale(g, 1.0 / static_cast<double>(in[0].numel())), in[0].shape());
      break;
    case OpKind::broadcast:
      r[0] = sum_to(g, in[0].shape());
      break;
    case OpKind::reshape:
      r[0] = reshape(g, in[0].shape());
      break;
    case OpKind::slice:
      r[0] = pad(g, at.begin, in[0].shape()[0]);
      break;
    case OpKind::pad:
      r[0] = slice(g, at.begin, at.begin + in[0].shape()[0]);
      break;
  }
  return r;
}

}  // namespace detail

/// Evaluates `op` on `inputs`; records a node when any input is attached.
/// All attached inputs must live on the same graph.
inline Tensor apply(OpKind op, std::vector<Tensor> inputs, const OpAttrs& attrs) {
  Tensor value = detail::forward_value(op, inputs, attrs);
  Graph* graph = nullptr;
  for (const auto& t : inputs) {
    if (!t.attached()) continue;
    if (graph != nullptr && graph != t.graph()) {
      throw std::invalid_argument(std::string(op_name(op)) + ": inputs live on different graphs");
    }
    graph = t.graph();
  }
  if (graph == nullptr) return value;
  Node node;
  node.op = op;
  node.inputs = std::move(inputs);
  node.attrs = attrs;
  node.value = std::move(value);
  return graph->push(std::move(node));
}

namespace detail {

inline Tensor broadcast_binary(OpKind op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return apply(op, {a, b});
  const Shape common = kernels::broadcast_shape(a.shape(), b.shape());
  const Tensor ab = a.shape() == common ? a : broadcast_to(a, common);
  const Tensor bb = b.shape() == common ? b : broadcast_to(b, common);
  return apply(op, {ab, bb});
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(OpKind::add, a, b);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(OpKind::sub, a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(OpKind::mul, a, b);
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(OpKind::div, a, b);
}

inline std::vector<Tensor> Graph::backward(const Tensor& output, std::span<const Tensor> wrt,
                                           bool create_graph,
                                           const std::optional<Tensor>& seed) {
  if (output.graph() != this) throw std::invalid_argument("backward: output is not on this graph");
  for (const auto& w : wrt) {
    if (w.graph() != this) throw std::invalid_argument("backward: wrt tensor is not on this graph");
  }
  Tensor cotangent;
  if (seed) {
    if (seed->shape() != output.shape()) {
      throw std::invalid_argument("backward: seed shape " + shape_str(seed->shape()) +
                                  " != output shape " + shape_str(output.shape()));
    }
    cotangent = create_graph ? *seed : seed->detach();
  } else {
    if (output.numel() != 1) {
      throw std::invalid_argument("backward: non-scalar output " + shape_str(output.shape()) +
                                  " needs a seed cotangent");
    }
    cotangent = Tensor::ones(output.shape());
  }

  const std::size_t last = output.node();
  std::vector<char> is_target(last + 1, 0);
  std::vector<char> needed(last + 1, 0);
  for (const auto& w : wrt) {
    if (w.node() <= last) is_target[w.node()] = needed[w.node()] = 1;
  }
  for (std::size_t id = 0; id <= last; ++id) {
    if (needed[id]) continue;
    for (const auto& in : nodes_[id].inputs) {
      if (in.graph() == this && needed[in.node()]) {
        needed[id] = 1;
        break;
      }
    }
  }

  std::vector<std::optional<Tensor>> grads(last + 1);
  grads[last] = cotangent;
  for (std::size_t id = last + 1; id-- > 0;) {
    if (!grads[id] || !needed[id]) continue;
    const Node& node = nodes_[id];
    if (node.op == OpKind::leaf) continue;

    std::vector<bool> need(node.inputs.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const Tensor& in = node.inputs[i];
      need[i] = in.graph() == this && needed[in.node()];
      any = any || need[i];
    }
    if (any) {
      std::vector<Tensor> ins;
      ins.reserve(node.inputs.size());
      for (const auto& t : node.inputs) ins.push_back(create_graph ? t : t.detach());
      const Tensor out = create_graph ? view(id) : node.value;
      const Tensor g = create_graph ? *grads[id] : grads[id]->detach();
      auto partials = detail::vjp(node, ins, out, g, need);
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        if (!need[i] || !partials[i]) continue;
        auto& slot = grads[node.inputs[i].node()];
        slot = slot ? add(*slot, *partials[i]) : *partials[i];
      }
    }
    if (!is_target[id]) grads[id].reset();
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.node() <= last && grads[w.node()]) {
      result.push_back(*grads[w.node()]);
    } else {
      result.push_back(Tensor::zeros(w.shape()));
    }
  }
  return result;
}

}  // namespace plis
