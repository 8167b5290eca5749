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
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/data.hpp"

namespace plis {

inline constexpr std::size_t kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline void check_same_dims(const GrayImage& a, const GrayImage& b, const char* who) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch " + std::to_string(a.height) +
                                "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) +
                                "x" + std::to_string(b.width));
  }
}

// (h+1)×(w+1) summed-area table of f(a_ij, b_ij).
template <typename F>
std::vector<double> integral(const GrayImage& a, const GrayImage& b, F f) {
  const std::size_t w = a.width + 1;
  std::vector<double> s((a.height + 1) * w, 0.0);
  for (std::size_t i = 0; i < a.height; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < a.width; ++j) {
      row += f(a.at(i, j), b.at(i, j));
      s[(i + 1) * w + j + 1] = s[i * w + j + 1] + row;
    }
  }
  return s;
}

}  // namespace detail

/// Mean local SSIM over every 8×8 window (stride 1, uniform weights,
/// population moments) on dynamic range 1.
inline double ssim(const GrayImage& a, const GrayImage& b) {
  detail::check_same_dims(a, b, "ssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw std::invalid_argument("ssim: images must be at least 8x8, got " + std::to_string(a.height) +
                                "x" + std::to_string(a.width));
  }
  const auto sa = detail::integral(a, b, [](double x, double) { return x; });
  const auto sb = detail::integral(a, b, [](double, double y) { return y; });
  const auto saa = detail::integral(a, b, [](double x, double) { return x * x; });
  const auto sbb = detail::integral(a, b, [](double, double y) { return y * y; });
  const auto sab = detail::integral(a, b, [](double x, double y) { return x * y; });
  const std::size_t w = a.width + 1, k = kSsimWindow;
  const double inv = 1.0 / static_cast<double>(k * k);
  auto box = [&](const std::vector<double>& s, std::size_t i, std::size_t j) {
    return (s[(i + k) * w + j + k] - s[i * w + j + k] - s[(i + k) * w + j] + s[i * w + j]) * inv;
  };
  double total = 0.0;
  const std::size_t rows = a.height - k + 1, cols = a.width - k + 1;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double ma = box(sa, i, j), mb = box(sb, i, j);
      const double va = box(saa, i, j) - ma * ma;
      const double vb = box(sbb, i, j) - mb * mb;
      const double cov = box(sab, i, j) - ma * mb;
      total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
               ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
  }
  return std::clamp(total / static_cast<double>(rows * cols), -1.0, 1.0);
}

/// 10·log10(1/mse), capped at 99 dB (identical images included).
inline double psnr(const GrayImage& a, const GrayImage& b) {
  detail::check_same_dims(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace plis
