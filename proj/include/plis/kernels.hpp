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

// Raw buffer kernels behind the graph ops. Nothing in here knows about
// graphs; shapes are validated by the callers in autodiff.hpp.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "plis/tensor.hpp"

namespace plis::kernels {

/// numpy-style broadcast of two shapes; throws when incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) +
                                  " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

inline bool broadcastable_to(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) return false;
  const std::size_t lead = to.size() - from.size();
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] != 1 && from[i] != to[lead + i]) return false;
  }
  return true;
}

namespace detail {

// Strides of `from` laid over the axes of `to`, zero where `from` repeats.
inline std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
  std::vector<std::size_t> strides(to.size(), 0);
  const std::size_t lead = to.size() - from.size();
  std::size_t stride = 1;
  for (std::size_t i = from.size(); i-- > 0;) {
    strides[lead + i] = from[i] == 1 ? 0 : stride;
    stride *= from[i];
  }
  return strides;
}

// Calls fn(big_index, small_index) for every element of the `to` shape.
template <typename Fn>
void for_each_broadcast(const Shape& from, const Shape& to, Fn&& fn) {
  const auto strides = broadcast_strides(from, to);
  const std::size_t total = shape_numel(to);
  std::vector<std::size_t> counter(to.size(), 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < total; ++dst) {
    fn(dst, src);
    for (std::size_t axis = to.size(); axis-- > 0;) {
      ++counter[axis];
      src += strides[axis];
      if (counter[axis] < to[axis]) break;
      src -= strides[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
}

}  // namespace detail

inline std::vector<double> broadcast(std::span<const double> x, const Shape& from,
                                     const Shape& to) {
  std::vector<double> out(shape_numel(to));
  detail::for_each_broadcast(from, to, [&](std::size_t d, std::size_t s) { out[d] = x[s]; });
  return out;
}

/// Adjoint of broadcast: sums `x` (shaped `from`) down to `to`.
inline std::vector<double> sum_to(std::span<const double> x, const Shape& from,
                                  const Shape& to) {
  std::vector<double> out(shape_numel(to), 0.0);
  detail::for_each_broadcast(to, from, [&](std::size_t d, std::size_t s) { out[s] += x[d]; });
  return out;
}

inline std::vector<double> matmul(std::span<const double> a, std::span<const double> b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

inline std::vector<double> transpose(std::span<const double> a, std::size_t rows,
                                     std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
  return out;
}

struct ConvDims {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t pad;
  std::size_t out_h() const { return height + 2 * pad - kh + 1; }
  std::size_t out_w() const { return width + 2 * pad - kw + 1; }
};

/// Stride-1 zero-padded cross-correlation: x[N,C,H,W] * w[O,C,KH,KW].
inline std::vector<double> conv2d(std::span<const double> x, std::span<const double> w,
                                  const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  const long pad = static_cast<long>(d.pad);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  std::vector<double> out(d.batch * d.out_ch * oh * ow, 0.0);
  const bool wide_output = ow >= d.kw;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      double* yo = out.data() + (n * d.out_ch + o) * oh * ow;
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        const double* xc = x.data() + (n * d.in_ch + c) * d.height * d.width;
        const double* wc = w.data() + (o * d.in_ch + c) * d.kh * d.kw;
        for (std::size_t i = 0; i < oh; ++i) {
          double* yrow = yo + i * ow;
          for (std::size_t a = 0; a < d.kh; ++a) {
            const long xi = static_cast<long>(i + a) - pad;
            if (xi < 0 || xi >= H) continue;
            const double* xrow = xc + xi * W;
            const double* wrow = wc + a * d.kw;
            if (wide_output) {
              for (std::size_t b = 0; b < d.kw; ++b) {
                const double wv = wrow[b];
                const long shift = static_cast<long>(b) - pad;
                const long j0 = std::max(0L, -shift);
                const long j1 = std::min(static_cast<long>(ow), W - shift);
                for (long j = j0; j < j1; ++j) yrow[j] += wv * xrow[j + shift];
              }
            } else {
              for (std::size_t j = 0; j < ow; ++j) {
                const long shift = static_cast<long>(j) - pad;
                const long b0 = std::max(0L, -shift);
                const long b1 = std::min(static_cast<long>(d.kw), W - shift);
                double acc = 0.0;
                for (long b = b0; b < b1; ++b) acc += wrow[b] * xrow[b + shift];
                yrow[j] += acc;
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// w[O,C,KH,KW] -> w'[C,O,KH,KW] with both spatial axes reversed.
inline std::vector<double> flip_kernel(std::span<const double> w, std::size_t o_ch,
                                       std::size_t i_ch, std::size_t kh, std::size_t kw) {
  std::vector<double> out(w.size());
  for (std::size_t o = 0; o < o_ch; ++o)
    for (std::size_t c = 0; c < i_ch; ++c)
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b)
          out[((c * o_ch + o) * kh + (kh - 1 - a)) * kw + (kw - 1 - b)] =
              w[((o * i_ch + c) * kh + a) * kw + b];
  return out;
}

/// Swaps the two leading axes of a tensor of shape [A,B,rest...].
inline std::vector<double> permute01(std::span<const double> x, std::size_t a,
                                     std::size_t b, std::size_t rest) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(x.data() + (i * b + j) * rest, rest, out.data() + (j * a + i) * rest);
  return out;
}

}  // namespace plis::kernels
