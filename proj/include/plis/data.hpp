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

// Synthetic tabular regression data, procedurally rendered glyph images with
// out-of-distribution texture injection, and the PLDS binary image format:
//
//   "PLDS" | u32 version (1) | u32 n | u32 h | u32 w | u32 classes
//   then n records of: h*w f64 pixels | u32 label | u8 ood_flag
//
// All integers and floats little-endian.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/io.hpp"
#include "plis/rng.hpp"
#include "plis/tensor.hpp"

namespace plis {

/// One subject S_i: input attributes x_i and label y_i.
struct SubjectRecord {
  std::string id;
  Tensor x;
  Tensor y;
  bool ood = false;
};

inline std::string subject_id(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return "s" + digits;
}

// --- tabular -----------------------------------------------------------------

struct TabularDataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> X;  // n x d, row-major
  std::vector<double> y;
  std::vector<bool> informative_mask;  // empty when unknown (loaded from CSV)
  std::vector<double> coefficients;    // generating w*, zero off the informative set
  std::uint64_t seed = 0;

  double at(std::size_t row, std::size_t col) const { return X[row * d + col]; }

  std::vector<SubjectRecord> subjects() const {
    std::vector<SubjectRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back({subject_id(i),
                     Tensor::vector(std::vector<double>(X.begin() + i * d, X.begin() + (i + 1) * d)),
                     Tensor::vector({y[i]}), false});
    }
    return out;
  }
};

/// X ~ N(0,1) then standardized per column (population sd); y = X[:, S] w* + ε
/// with |w*_j| in [0.5, 1.5] and random sign, ε ~ N(0, noise_sd²).
inline TabularDataset make_regression(std::size_t n, std::size_t d,
                                      const std::vector<std::size_t>& informative, double noise_sd,
                                      std::uint64_t seed) {
  if (informative.empty()) throw std::invalid_argument("make_regression: empty informative set");
  if (n < 2 || d == 0) throw std::invalid_argument("make_regression: need n >= 2 and d >= 1");
  TabularDataset ds;
  ds.n = n;
  ds.d = d;
  ds.seed = seed;
  ds.informative_mask.assign(d, false);
  for (std::size_t j : informative) {
    if (j >= d) throw std::invalid_argument("make_regression: informative index " + std::to_string(j) + " >= d");
    ds.informative_mask[j] = true;
  }
  CounterRng xr(seed, 1);
  ds.X = xr.normals(n * d);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += ds.X[i * d + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ds.X[i * d + j] -= mean;
      var += ds.X[i * d + j] * ds.X[i * d + j];
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) ds.X[i * d + j] /= sd;
  }
  CounterRng wr(seed, 2);
  std::vector<double> w(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double mag = wr.uniform(0.5, 1.5);
    const double sign = wr.uniform() < 0.5 ? -1.0 : 1.0;
    if (ds.informative_mask[j]) w[j] = sign * mag;
  }
  ds.coefficients = w;
  CounterRng er(seed, 3);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (ds.informative_mask[j]) s += ds.X[i * d + j] * w[j];
    }
    ds.y[i] = s + noise_sd * er.normal();
  }
  return ds;
}

/// Header x0..x{d-1},y then one row per sample.
inline std::string tabular_to_csv(const TabularDataset& ds) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < ds.d; ++j) header.push_back("x" + std::to_string(j));
  header.push_back("y");
  CsvWriter csv(header);
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::vector<double> row(ds.X.begin() + i * ds.d, ds.X.begin() + (i + 1) * ds.d);
    row.push_back(ds.y[i]);
    csv.row(row);
  }
  return csv.str();
}

inline TabularDataset tabular_from_csv(std::string_view text) {
  const auto rows = lines(text);
  if (rows.empty()) throw std::invalid_argument("tabular csv: empty input");
  const auto header = split(rows[0], ',');
  if (header.size() < 2 || header.back() != "y") {
    throw std::invalid_argument("tabular csv: header must end with column 'y'");
  }
  TabularDataset ds;
  ds.d = header.size() - 1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = split(rows[r], ',');
    if (cells.size() != header.size()) {
      throw std::invalid_argument("tabular csv: row " + std::to_string(r) + " has " +
                                  std::to_string(cells.size()) + " cells");
    }
    for (std::size_t j = 0; j < ds.d; ++j) ds.X.push_back(parse_double(cells[j]));
    ds.y.push_back(parse_double(cells.back()));
  }
  ds.n = ds.y.size();
  if (ds.n == 0) throw std::invalid_argument("tabular csv: no rows");
  return ds;
}

// --- images ------------------------------------------------------------------

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, each in [0, 1]

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, std::vector<double> px)
      : height(h), width(w), pixels(std::move(px)) {
    if (h == 0 || w == 0 || pixels.size() != h * w) {
      throw std::invalid_argument("image: pixel count does not match " + std::to_string(h) + "x" +
                                  std::to_string(w));
    }
    for (double p : pixels) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("image: pixel outside [0, 1]");
    }
  }

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  Tensor tensor() const { return Tensor({1, height, width}, pixels); }
};

struct ImageDataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<GrayImage> images;
  std::vector<std::uint32_t> labels;
  std::vector<bool> ood_flags;

  std::size_t size() const { return images.size(); }

  void validate() const {
    if (images.size() != labels.size() || images.size() != ood_flags.size()) {
      throw std::invalid_argument("image dataset: ragged fields");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].height != height || images[i].width != width) {
        throw std::invalid_argument("image dataset: image " + std::to_string(i) + " has wrong size");
      }
      if (labels[i] >= classes) {
        throw std::invalid_argument("image dataset: label " + std::to_string(labels[i]) +
                                    " >= class count " + std::to_string(classes));
      }
    }
  }

  std::vector<SubjectRecord> subjects() const {
    std::vector<SubjectRecord> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out.push_back({subject_id(i), images[i].tensor(), Tensor::scalar(labels[i]), ood_flags[i]});
    }
    return out;
  }
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Distance from (r, c) to the segment (r0, c0)-(r1, c1).
inline double segment_distance(double r, double c, double r0, double c0, double r1, double c1) {
  const double dr = r1 - r0, dc = c1 - c0;
  const double len2 = dr * dr + dc * dc;
  double t = len2 > 0 ? ((r - r0) * dr + (c - c0) * dc) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double pr = r0 + t * dr - r, pc = c0 + t * dc - c;
  return std::sqrt(pr * pr + pc * pc);
}

// Soft stroke: full intensity within half the thickness, 1-pixel linear falloff.
inline double stroke(double distance, double thickness) {
  return clamp01(1.0 - (distance - 0.5 * thickness));
}

inline GrayImage render_glyph(std::uint32_t label, std::size_t h, std::size_t w, CounterRng& rng) {
  const double H = static_cast<double>(h), W = static_cast<double>(w);
  const double cr = (H - 1) / 2 + rng.uniform(-0.08, 0.08) * H;
  const double cc = (W - 1) / 2 + rng.uniform(-0.08, 0.08) * W;
  const double thickness = rng.uniform(1.5, 2.5);
  const double intensity = rng.uniform(0.75, 1.0);
  const double radius = rng.uniform(0.22, 0.32) * std::min(H, W);
  const double tilt = rng.uniform(-0.3, 0.3);
  const double half = rng.uniform(0.28, 0.36) * std::min(H, W);
  std::vector<double> px(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double rr = static_cast<double>(r), cc2 = static_cast<double>(c);
      double s = 0.0;
      const double dv = segment_distance(rr, cc2, cr - half * std::cos(tilt), cc - half * std::sin(tilt),
                                         cr + half * std::cos(tilt), cc + half * std::sin(tilt));
      const double dh = segment_distance(rr, cc2, cr + half * std::sin(tilt), cc - half * std::cos(tilt),
                                         cr - half * std::sin(tilt), cc + half * std::cos(tilt));
      switch (label % 4) {
        case 0:
          s = stroke(std::abs(std::hypot(rr - cr, cc2 - cc) - radius), thickness);
          break;
        case 1:
          s = stroke(dv, thickness);
          break;
        case 2:
          s = stroke(dh, thickness);
          break;
        default:
          s = std::max(stroke(dv, thickness), stroke(dh, thickness));
          break;
      }
      const double background = rng.uniform(0.0, 0.2);
      px[r * w + c] = clamp01(std::max(background, intensity * s));
    }
  }
  return {h, w, std::move(px)};
}

// Radial ripple texture: a different generator from the glyphs.
inline GrayImage render_ood(std::size_t h, std::size_t w, CounterRng& rng) {
  const double cr = rng.uniform(0, static_cast<double>(h)), cc = rng.uniform(0, static_cast<double>(w));
  const double freq = rng.uniform(0.6, 1.2);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  std::vector<double> px(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double dist = std::hypot(static_cast<double>(r) - cr, static_cast<double>(c) - cc);
      px[r * w + c] = clamp01(0.5 + 0.5 * std::cos(freq * dist + phase));
    }
  }
  return {h, w, std::move(px)};
}

}  // namespace detail

/// Balanced glyph classes (ring, vertical bar, horizontal bar, cross) over a
/// low-amplitude noise background.
inline ImageDataset make_glyph_images(std::size_t n, std::size_t classes, std::size_t h,
                                      std::size_t w, std::uint64_t seed) {
  if (classes < 2 || classes > 4) throw std::invalid_argument("make_glyph_images: classes must be 2..4");
  if (h < 8 || w < 8) throw std::invalid_argument("make_glyph_images: images must be at least 8x8");
  ImageDataset ds;
  ds.height = h;
  ds.width = w;
  ds.classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(seed, 0x1000 + i);
    const auto label = static_cast<std::uint32_t>(i % classes);
    ds.images.push_back(detail::render_glyph(label, h, w, rng));
    ds.labels.push_back(label);
    ds.ood_flags.push_back(false);
  }
  return ds;
}

/// Appends `count` ripple-texture samples with random valid labels and the OOD flag set.
inline ImageDataset inject_ood(ImageDataset ds, std::size_t count, std::uint64_t seed) {
  for (std::size_t k = 0; k < count; ++k) {
    CounterRng rng(seed, 0x2000 + k);
    ds.images.push_back(detail::render_ood(ds.height, ds.width, rng));
    ds.labels.push_back(static_cast<std::uint32_t>(rng.below(ds.classes)));
    ds.ood_flags.push_back(true);
  }
  return ds;
}

inline constexpr std::string_view kDatasetMagic = "PLDS";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string encode_images(const ImageDataset& ds) {
  ds.validate();
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.height));
  w.u32(static_cast<std::uint32_t>(ds.width));
  w.u32(static_cast<std::uint32_t>(ds.classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double p : ds.images[i].pixels) w.f64(p);
    w.u32(ds.labels[i]);
    w.u8(ds.ood_flags[i] ? 1 : 0);
  }
  return w.str();
}

inline ImageDataset decode_images(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kDatasetMagic) throw ParseError("bad dataset magic", 0);
  std::size_t at = r.offset();
  if (r.u32("version") != kDatasetVersion) throw ParseError("unsupported dataset version", at);
  ImageDataset ds;
  const std::uint32_t n = r.u32("sample count");
  at = r.offset();
  ds.height = r.u32("height");
  ds.width = r.u32("width");
  if (ds.height == 0 || ds.width == 0) throw ParseError("zero image dimension", at);
  at = r.offset();
  ds.classes = r.u32("class count");
  if (ds.classes == 0) throw ParseError("zero class count", at);
  const std::size_t area = ds.height * ds.width;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> px(area);
    for (auto& p : px) {
      at = r.offset();
      p = r.f64("pixels");
      if (!(p >= 0.0 && p <= 1.0)) throw ParseError("pixel outside [0, 1]", at);
    }
    ds.images.emplace_back(ds.height, ds.width, std::move(px));
    at = r.offset();
    const std::uint32_t label = r.u32("label");
    if (label >= ds.classes) throw ParseError("label out of range", at);
    ds.labels.push_back(label);
    at = r.offset();
    const std::uint8_t flag = r.u8("ood flag");
    if (flag > 1) throw ParseError("ood flag must be 0 or 1", at);
    ds.ood_flags.push_back(flag == 1);
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after last sample", r.offset());
  return ds;
}

inline void save_images(const std::filesystem::path& path, const ImageDataset& ds) {
  write_file_atomic(path, encode_images(ds));
}

inline ImageDataset load_images(const std::filesystem::path& path) {
  return decode_images(read_file(path));
}

}  // namespace plis
