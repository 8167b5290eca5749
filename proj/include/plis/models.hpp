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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "plis/autodiff.hpp"
#include "plis/io.hpp"
#include "plis/rng.hpp"

namespace plis {

struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;
};
struct Conv2d {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 0;
};
struct Relu {};
struct Tanh {};
struct Softplus {};
struct Flatten {};

using Layer = std::variant<Linear, Conv2d, Relu, Tanh, Softplus, Flatten>;

enum class LossKind { mse, cross_entropy };

/// Architecture f(x, θ) plus loss ℓ. `input_shape` is per sample: [d] for
/// tabular inputs, [C,H,W] for images.
struct ModelSpec {
  Shape input_shape;
  std::vector<Layer> layers;
  LossKind loss = LossKind::mse;

  /// Per-sample output shape; throws when adjacent layers do not compose.
  Shape output_shape() const {
    if (input_shape.empty()) throw std::invalid_argument("model: empty input shape");
    Shape s = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string where = "model layer " + std::to_string(i) + ": ";
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Linear>) {
              if (s.size() != 1 || s[0] != layer.in) {
                throw std::invalid_argument(where + "linear expects [" + std::to_string(layer.in) +
                                            "], got " + shape_str(s));
              }
              if (layer.out == 0) throw std::invalid_argument(where + "linear with zero outputs");
              s = {layer.out};
            } else if constexpr (std::is_same_v<T, Conv2d>) {
              if (s.size() != 3 || s[0] != layer.in_ch) {
                throw std::invalid_argument(where + "conv2d expects [" +
                                            std::to_string(layer.in_ch) + ",H,W], got " +
                                            shape_str(s));
              }
              if (layer.kernel == 0 || layer.kernel > s[1] || layer.kernel > s[2] ||
                  layer.out_ch == 0) {
                throw std::invalid_argument(where + "bad conv2d geometry for " + shape_str(s));
              }
              s = {layer.out_ch, s[1] - layer.kernel + 1, s[2] - layer.kernel + 1};
            } else if constexpr (std::is_same_v<T, Flatten>) {
              s = {shape_numel(s)};
            }
          },
          layers[i]);
    }
    if (s.size() != 1) throw std::invalid_argument("model: output must be a vector, got " + shape_str(s));
    if (loss == LossKind::cross_entropy && s[0] < 2) {
      throw std::invalid_argument("model: cross-entropy needs at least 2 logits");
    }
    return s;
  }

  std::size_t output_dim() const { return output_shape()[0]; }
  std::size_t input_dim() const { return shape_numel(input_shape); }
};

/// Location of one weight or bias tensor inside the flat parameter vector.
struct ParamBlock {
  std::size_t layer = 0;
  bool is_bias = false;
  std::size_t offset = 0;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t size() const { return shape_numel(shape); }
};

inline std::vector<ParamBlock> param_layout(const ModelSpec& spec) {
  spec.output_shape();
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  auto add = [&](std::size_t layer, bool bias, Shape shape, std::size_t fi, std::size_t fo) {
    ParamBlock b{layer, bias, offset, std::move(shape), fi, fo};
    offset += b.size();
    blocks.push_back(std::move(b));
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* l = std::get_if<Linear>(&spec.layers[i])) {
      add(i, false, {l->in, l->out}, l->in, l->out);
      if (l->bias) add(i, true, {l->out}, l->in, l->out);
    } else if (const auto* c = std::get_if<Conv2d>(&spec.layers[i])) {
      const std::size_t area = c->kernel * c->kernel;
      add(i, false, {c->out_ch, c->in_ch, c->kernel, c->kernel}, c->in_ch * area, c->out_ch * area);
      add(i, true, {c->out_ch}, c->in_ch * area, c->out_ch * area);
    }
  }
  return blocks;
}

inline std::size_t param_count(const std::vector<ParamBlock>& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().size();
}

/// Flattened θ with its per-layer layout.
struct ParamSet {
  Tensor flat;
  std::vector<ParamBlock> layout;

  std::size_t size() const { return flat.numel(); }
};

/// Splits a flat parameter tensor into per-block tensors with graph ops, so
/// gradients flow back to the single flat vector.
inline std::vector<Tensor> unflatten(const std::vector<ParamBlock>& layout, const Tensor& flat) {
  if (flat.rank() != 1 || flat.numel() != param_count(layout)) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(param_count(layout)) +
                                " parameters, got shape " + shape_str(flat.shape()));
  }
  std::vector<Tensor> out;
  out.reserve(layout.size());
  for (const auto& b : layout) out.push_back(reshape(slice(flat, b.offset, b.offset + b.size()), b.shape));
  return out;
}

/// Inverse of unflatten on values.
inline Tensor flatten(const std::vector<ParamBlock>& layout, const std::vector<Tensor>& blocks) {
  if (blocks.size() != layout.size()) throw std::invalid_argument("flatten: block count mismatch");
  std::vector<double> v(param_count(layout));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (blocks[i].shape() != layout[i].shape) {
      throw std::invalid_argument("flatten: block " + std::to_string(i) + " has shape " +
                                  shape_str(blocks[i].shape()) + ", expected " +
                                  shape_str(layout[i].shape));
    }
    std::copy(blocks[i].data().begin(), blocks[i].data().end(), v.begin() + layout[i].offset);
  }
  return Tensor::vector(std::move(v));
}

/// Glorot-uniform weights (a = sqrt(6 / (fan_in + fan_out))), zero biases.
inline ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamSet p;
  p.layout = param_layout(spec);
  std::vector<double> v(param_count(p.layout), 0.0);
  CounterRng rng(seed, 0x1417);
  for (const auto& b : p.layout) {
    if (b.is_bias) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(b.fan_in + b.fan_out));
    for (std::size_t i = 0; i < b.size(); ++i) v[b.offset + i] = rng.uniform(-a, a);
  }
  p.flat = Tensor::vector(std::move(v));
  return p;
}

inline ParamSet make_params(const ModelSpec& spec, std::vector<double> values) {
  ParamSet p;
  p.layout = param_layout(spec);
  if (values.size() != param_count(p.layout)) {
    throw std::invalid_argument("make_params: model has " + std::to_string(param_count(p.layout)) +
                                " parameters, got " + std::to_string(values.size()));
  }
  p.flat = Tensor::vector(std::move(values));
  return p;
}

/// Network output [N, K] for a batch x[N, input_shape...].
inline Tensor model_output(const ModelSpec& spec, const std::vector<ParamBlock>& layout,
                           const Tensor& theta, const Tensor& x) {
  const auto blocks = unflatten(layout, theta);
  std::size_t next = 0;
  Tensor h = x;
  const std::size_t n = x.shape()[0];
  for (const auto& layer : spec.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Linear>) {
            h = matmul(h, blocks[next++]);
            if (l.bias) h = add(h, reshape(blocks[next++], {1, l.out}));
          } else if constexpr (std::is_same_v<T, Conv2d>) {
            h = conv2d(h, blocks[next++]);
            h = add(h, reshape(blocks[next++], {1, l.out_ch, 1, 1}));
          } else if constexpr (std::is_same_v<T, Relu>) {
            h = relu(h);
          } else if constexpr (std::is_same_v<T, Tanh>) {
            h = tanh(h);
          } else if constexpr (std::is_same_v<T, Softplus>) {
            h = softplus(h);
          } else if constexpr (std::is_same_v<T, Flatten>) {
            h = reshape(h, {n, h.numel() / n});
          }
        },
        layer);
  }
  return h;
}

/// Mean over the batch of the per-sample loss. For mse the per-sample loss is
/// the squared residual summed over outputs (targets [N, K]); for
/// cross-entropy it is logsumexp(z) - z_y (targets [N] holding class indices).
inline Tensor loss_from_output(const ModelSpec& spec, const Tensor& out, const Tensor& targets) {
  const std::size_t n = out.shape()[0];
  const std::size_t k = out.shape()[1];
  const double inv_n = 1.0 / static_cast<double>(n);
  if (spec.loss == LossKind::mse) {
    if (targets.numel() != n * k) {
      throw std::invalid_argument("mse: targets " + shape_str(targets.shape()) +
                                  " do not match outputs " + shape_str(out.shape()));
    }
    return scale(sum(square(sub(out, targets.reshaped({n, k})))), inv_n);
  }
  if (targets.numel() != n) {
    throw std::invalid_argument("cross-entropy: expected " + std::to_string(n) +
                                " labels, got " + shape_str(targets.shape()));
  }
  std::vector<double> onehot(n * k, 0.0);
  std::vector<double> row_max(n);
  const auto z = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double label = targets[i];
    if (label < 0 || label >= static_cast<double>(k) || label != std::floor(label)) {
      throw std::invalid_argument("cross-entropy: label " + format_double(label) +
                                  " outside [0, " + std::to_string(k) + ")");
    }
    onehot[i * k + static_cast<std::size_t>(label)] = 1.0;
    row_max[i] = *std::max_element(z.begin() + i * k, z.begin() + (i + 1) * k);
  }
  // The shift is a constant: logsumexp is invariant to it, so it carries no gradient.
  const Tensor shift({n, 1}, std::move(row_max));
  const Tensor lse = add(log(sum_to(exp(sub(out, shift)), {n, 1})), shift);
  const Tensor picked = sum_to(mul(out, Tensor({n, k}, std::move(onehot))), {n, 1});
  return scale(sum(sub(lse, picked)), inv_n);
}

inline Tensor batch_loss(const ModelSpec& spec, const std::vector<ParamBlock>& layout,
                         const Tensor& theta, const Tensor& x, const Tensor& targets) {
  return loss_from_output(spec, model_output(spec, layout, theta, x), targets);
}

/// ℓ(f(x_i, θ), y_i) for one sample; x has the per-sample input shape.
inline Tensor per_sample_loss(const ModelSpec& spec, const std::vector<ParamBlock>& layout,
                              const Tensor& theta, const Tensor& x, const Tensor& y) {
  if (x.shape() != spec.input_shape) {
    throw std::invalid_argument("per_sample_loss: input " + shape_str(x.shape()) +
                                " does not match model input " + shape_str(spec.input_shape));
  }
  Shape batched{1};
  batched.insert(batched.end(), spec.input_shape.begin(), spec.input_shape.end());
  return batch_loss(spec, layout, theta, reshape(x, batched), y);
}

/// Graph holding θ and x_i as differentiable leaves and the per-sample loss.
class SampleTape {
 public:
  SampleTape(const ModelSpec& spec, const ParamSet& params, const Tensor& x, const Tensor& y)
      : theta_(graph_.leaf(params.flat)),
        x_(graph_.leaf(x)),
        loss_(per_sample_loss(spec, params.layout, theta_, x_, y)) {}

  SampleTape(const SampleTape&) = delete;
  SampleTape& operator=(const SampleTape&) = delete;

  Graph& graph() { return graph_; }
  const Tensor& theta() const { return theta_; }
  const Tensor& x() const { return x_; }
  const Tensor& loss() const { return loss_; }

  /// ∇_θ ℓ; a node of this tape's graph when `create_graph` is set.
  Tensor param_grad(bool create_graph) { return graph_.backward(loss_, {theta_}, create_graph)[0]; }

 private:
  Graph graph_;
  Tensor theta_;
  Tensor x_;
  Tensor loss_;
};

/// ∇_θ ℓ(x_i | y_i, θ) as plain values.
inline Tensor per_sample_grad(const ModelSpec& spec, const ParamSet& params, const Tensor& x,
                              const Tensor& y) {
  Graph g;
  const Tensor theta = g.leaf(params.flat);
  const Tensor loss = per_sample_loss(spec, params.layout, theta, x, y);
  return g.backward(loss, {theta})[0];
}

/// Stacks equally shaped tensors along a new leading axis.
inline Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw std::invalid_argument("stack: no tensors");
  Shape s{items.size()};
  s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> v;
  v.reserve(shape_numel(s));
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) throw std::invalid_argument("stack: ragged shapes");
    v.insert(v.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(s), std::move(v));
}

/// Gradient of the batch-mean loss, as plain values.
inline Tensor batch_grad(const ModelSpec& spec, const ParamSet& params, const Tensor& xs,
                         const Tensor& targets, double* loss_out = nullptr) {
  Graph g;
  const Tensor theta = g.leaf(params.flat);
  const Tensor loss = batch_loss(spec, params.layout, theta, xs, targets);
  if (loss_out) *loss_out = loss.item();
  return g.backward(loss, {theta})[0];
}

// --- text form of a ModelSpec, used by checkpoints ---------------------------
//   input=1x28x28;layers=conv2d:1:8:3,relu,flatten,linear:4608:2;loss=cross_entropy

inline std::string to_string(const ModelSpec& spec) {
  std::string s = "input=";
  for (std::size_t i = 0; i < spec.input_shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(spec.input_shape[i]);
  }
  s += ";layers=";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (i) s += ',';
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Linear>) {
            s += "linear:" + std::to_string(l.in) + ":" + std::to_string(l.out);
            if (!l.bias) s += ":nobias";
          } else if constexpr (std::is_same_v<T, Conv2d>) {
            s += "conv2d:" + std::to_string(l.in_ch) + ":" + std::to_string(l.out_ch) + ":" +
                 std::to_string(l.kernel);
          } else if constexpr (std::is_same_v<T, Relu>) {
            s += "relu";
          } else if constexpr (std::is_same_v<T, Tanh>) {
            s += "tanh";
          } else if constexpr (std::is_same_v<T, Softplus>) {
            s += "softplus";
          } else {
            s += "flatten";
          }
        },
        spec.layers[i]);
  }
  s += ";loss=";
  s += spec.loss == LossKind::mse ? "mse" : "cross_entropy";
  return s;
}

inline ModelSpec parse_model_spec(const std::string& text) {
  auto to_size = [&](const std::string& v) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) throw std::invalid_argument("model spec: bad integer '" + v + "'");
    return static_cast<std::size_t>(n);
  };
  ModelSpec spec;
  bool have_input = false, have_loss = false;
  for (const auto& field : split(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model spec: field without '=': " + field);
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "input") {
      for (const auto& d : split(value, 'x')) spec.input_shape.push_back(to_size(d));
      have_input = true;
    } else if (key == "layers") {
      if (value.empty()) continue;
      for (const auto& item : split(value, ',')) {
        const auto parts = split(item, ':');
        const std::string& kind = parts[0];
        if (kind == "linear" && (parts.size() == 3 || (parts.size() == 4 && parts[3] == "nobias"))) {
          spec.layers.push_back(Linear{to_size(parts[1]), to_size(parts[2]), parts.size() == 3});
        } else if (kind == "conv2d" && parts.size() == 4) {
          spec.layers.push_back(Conv2d{to_size(parts[1]), to_size(parts[2]), to_size(parts[3])});
        } else if (kind == "relu" && parts.size() == 1) {
          spec.layers.push_back(Relu{});
        } else if (kind == "tanh" && parts.size() == 1) {
          spec.layers.push_back(Tanh{});
        } else if (kind == "softplus" && parts.size() == 1) {
          spec.layers.push_back(Softplus{});
        } else if (kind == "flatten" && parts.size() == 1) {
          spec.layers.push_back(Flatten{});
        } else {
          throw std::invalid_argument("model spec: unknown layer '" + item + "'");
        }
      }
    } else if (key == "loss") {
      if (value == "mse") {
        spec.loss = LossKind::mse;
      } else if (value == "cross_entropy") {
        spec.loss = LossKind::cross_entropy;
      } else {
        throw std::invalid_argument("model spec: unknown loss '" + value + "'");
      }
      have_loss = true;
    } else {
      throw std::invalid_argument("model spec: unknown field '" + key + "'");
    }
  }
  if (!have_input || !have_loss) throw std::invalid_argument("model spec: needs input and loss");
  spec.output_shape();
  return spec;
}

// --- stock architectures -----------------------------------------------------

inline ModelSpec linear_regression_spec(std::size_t features, bool bias = false) {
  return ModelSpec{{features}, {Linear{features, 1, bias}}, LossKind::mse};
}

/// Two conv layers and one linear classifier over [channels, h, w] inputs.
inline ModelSpec small_cnn_spec(std::size_t channels, std::size_t h, std::size_t w,
                                std::size_t classes, std::size_t c1 = 8, std::size_t c2 = 16,
                                std::size_t kernel = 3) {
  const std::size_t oh = h - 2 * (kernel - 1), ow = w - 2 * (kernel - 1);
  return ModelSpec{{channels, h, w},
                   {Conv2d{channels, c1, kernel}, Relu{}, Conv2d{c1, c2, kernel}, Relu{}, Flatten{},
                    Linear{c2 * oh * ow, classes}},
                   LossKind::cross_entropy};
}

inline ModelSpec mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, LossKind loss) {
  return ModelSpec{{in}, {Linear{in, hidden}, Tanh{}, Linear{hidden, out}}, loss};
}

}  // namespace plis
