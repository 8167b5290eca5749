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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "plis/io.hpp"
#include "plis/tensor.hpp"

namespace plis {

/// Views any tensor as a 2-D matrix: rank 1 becomes one row, higher ranks
/// stack their leading axes as rows over the last axis.
inline Tensor as_matrix(const Tensor& t) {
  if (t.rank() == 0) return t.reshaped({1, 1});
  const std::size_t cols = t.shape().back();
  return t.reshaped({t.numel() / cols, cols});
}

/// One line per row, values in shortest round-trip form.
inline std::string matrix_csv(const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("heatmap: expected a 2-D matrix, got " + shape_str(m.shape()));
  std::string out;
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out += ',';
      out += format_double(m[i * cols + j]);
    }
    out += '\n';
  }
  return out;
}

inline Tensor parse_matrix_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  for (const auto& line : lines(text)) {
    const auto cells = split(line, ',');
    if (rows == 0) cols = cells.size();
    if (cells.size() != cols) {
      throw std::invalid_argument("matrix csv: row " + std::to_string(rows + 1) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " + std::to_string(cols));
    }
    for (const auto& c : cells) values.push_back(parse_double(c));
    ++rows;
  }
  if (rows == 0) throw std::invalid_argument("matrix csv: empty");
  return Tensor({rows, cols}, std::move(values));
}

/// Binary PGM (P5) with round(255·(v − min)/(max − min)); a constant matrix
/// maps to 128 everywhere.
inline std::string matrix_pgm(const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("heatmap: expected a 2-D matrix, got " + shape_str(m.shape()));
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  const double min = *lo, range = *hi - *lo;
  std::string out = "P5\n" + std::to_string(m.shape()[1]) + " " + std::to_string(m.shape()[0]) + "\n255\n";
  for (double v : m.data()) {
    const double level = range > 0.0 ? std::round(255.0 * (v - min) / range) : 128.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
  }
  return out;
}

/// Writes `<base>.csv` (lossless values) and `<base>.pgm` (presentation).
inline void emit_heatmap(const Tensor& matrix, const std::filesystem::path& base) {
  std::filesystem::path csv = base, pgm = base;
  csv += ".csv";
  pgm += ".pgm";
  write_file_atomic(csv, matrix_csv(matrix));
  write_file_atomic(pgm, matrix_pgm(matrix));
}

}  // namespace plis
