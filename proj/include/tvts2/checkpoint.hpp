/*
 * Copyright (c) 2026 The TVTS2 Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "tvts2/common.hpp"
#include "tvts2/optim.hpp"
#include "tvts2/tensor.hpp"

namespace tvts2 {

// Checkpoint container: magic "TVC1", u32 version, a length-prefixed
// configuration snapshot, a stream of named tensor records, and a trailing
// CRC32 of everything before it. All integers little-endian.
//
// Record: u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64),
// u8 ndim, u32 dims[ndim], raw payload.

struct TensorRecord {
  std::string name;
  uint8_t dtype = 0;
  std::vector<uint32_t> dims;
  std::vector<unsigned char> payload;

  uint64_t element_count() const {
    uint64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

struct CheckpointFile {
  uint32_t version = 1;
  std::string config_text;
  std::vector<TensorRecord> records;
};

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const std::vector<TensorRecord>& records);
CheckpointFile load_checkpoint(const std::string& path);

template <typename T>
constexpr uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
TensorRecord to_record(const Parameter<T>& p) {
  TensorRecord r;
  r.name = p.name;
  r.dtype = dtype_code<T>();
  for (int64_t d : p.value.shape) r.dims.push_back(static_cast<uint32_t>(d));
  r.payload.resize(p.value.data.size() * sizeof(T));
  std::memcpy(r.payload.data(), p.value.data.data(), r.payload.size());
  return r;
}

template <typename T>
void from_record(const TensorRecord& r, Parameter<T>& p) {
  if (r.dtype != dtype_code<T>())
    throw ValidationError("checkpoint: dtype mismatch for tensor '" + r.name + "'");
  if (r.dims.size() != p.value.shape.size())
    throw ValidationError("checkpoint: rank mismatch for tensor '" + r.name + "'");
  for (size_t i = 0; i < r.dims.size(); ++i)
    if (static_cast<int64_t>(r.dims[i]) != p.value.shape[i])
      throw ValidationError("checkpoint: shape mismatch for tensor '" + r.name + "'");
  if (r.payload.size() != p.value.data.size() * sizeof(T))
    throw ValidationError("checkpoint: payload size mismatch for tensor '" + r.name + "'");
  std::memcpy(p.value.data.data(), r.payload.data(), r.payload.size());
}

template <typename T>
std::vector<TensorRecord> params_to_records(const ParamRefs<T>& params) {
  std::vector<TensorRecord> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(to_record(*p));
  return out;
}

// Restores every parameter by name; records and parameters must match
// one-to-one.
template <typename T>
void records_to_params(const std::vector<TensorRecord>& records, const ParamRefs<T>& params) {
  if (records.size() != params.size())
    throw ValidationError("checkpoint: tensor count mismatch (file has " +
                          std::to_string(records.size()) + ", model expects " +
                          std::to_string(params.size()) + ")");
  for (auto* p : params) {
    const TensorRecord* found = nullptr;
    for (const auto& r : records)
      if (r.name == p->name) {
        found = &r;
        break;
      }
    if (!found) throw ValidationError("checkpoint: missing tensor '" + p->name + "'");
    from_record(*found, *p);
  }
}

}  // namespace tvts2
