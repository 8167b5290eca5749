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

// Model checkpoint, little-endian throughout:
//   "PLCK" | u32 version (1) | u32 spec length | spec text (to_string(ModelSpec))
//   | u64 parameter count | f64 x count

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "plis/io.hpp"
#include "plis/models.hpp"

namespace plis {

inline constexpr std::string_view kCheckpointMagic = "PLCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  ParamSet params;
};

inline std::string encode_checkpoint(const ModelSpec& spec, const ParamSet& params) {
  const std::string text = to_string(spec);
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  w.u64(params.flat.numel());
  for (double v : params.flat.data()) w.f64(v);
  return w.str();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kCheckpointMagic) throw ParseError("bad checkpoint magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kCheckpointVersion) throw ParseError("unsupported checkpoint version", version_at);
  const std::uint32_t len = r.u32("spec length");
  const std::size_t spec_at = r.offset();
  ModelSpec spec;
  try {
    spec = parse_model_spec(std::string(r.bytes(len, "model spec")));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), spec_at);
  }
  const std::size_t count_at = r.offset();
  const std::uint64_t n = r.u64("parameter count");
  if (n != param_count(param_layout(spec))) {
    throw ParseError("parameter count does not match model spec", count_at);
  }
  std::vector<double> values(n);
  for (auto& v : values) v = r.f64("parameters");
  if (r.remaining() != 0) throw ParseError("trailing bytes after parameters", r.offset());
  return {spec, make_params(spec, std::move(values))};
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                            const ParamSet& params) {
  write_file_atomic(path, encode_checkpoint(spec, params));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace plis
