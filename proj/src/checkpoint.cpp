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

#include "tvts2/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace tvts2 {

namespace {

void put_u32(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return limit_ - pos_; }
  void set_limit(size_t limit) { limit_ = limit; }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = static_cast<uint32_t>(buf_[pos_]) | (static_cast<uint32_t>(buf_[pos_ + 1]) << 8) |
                 (static_cast<uint32_t>(buf_[pos_ + 2]) << 16) |
                 (static_cast<uint32_t>(buf_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }

  std::string bytes_str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::vector<unsigned char> bytes(size_t n, const char* what) {
    need(n, what);
    std::vector<unsigned char> v(buf_.begin() + static_cast<long>(pos_),
                                 buf_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return v;
  }

 private:
  void need(size_t n, const char* what) {
    if (pos_ + n > limit_)
      throw FormatError(path_ + ": truncated while reading " + what + " at offset " +
                        std::to_string(pos_));
  }

  const std::vector<unsigned char>& buf_;
  std::string path_;
  size_t pos_ = 0;
  size_t limit_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const std::vector<TensorRecord>& records) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'T', 'V', 'C', '1'});
  put_u32(buf, 1);  // version
  put_u32(buf, static_cast<uint32_t>(config_text.size()));
  buf.insert(buf.end(), config_text.begin(), config_text.end());
  for (const auto& r : records) {
    if (r.name.empty()) throw ContractError("checkpoint: record with empty name");
    if (r.dims.size() > 255) throw ContractError("checkpoint: rank too large");
    size_t elt = r.dtype == 0 ? 4 : 8;
    if (r.payload.size() != r.element_count() * elt)
      throw ContractError("checkpoint: payload size mismatch for '" + r.name + "'");
    put_u32(buf, static_cast<uint32_t>(r.name.size()));
    buf.insert(buf.end(), r.name.begin(), r.name.end());
    buf.push_back(r.dtype);
    buf.push_back(static_cast<unsigned char>(r.dims.size()));
    for (uint32_t d : r.dims) put_u32(buf, d);
    buf.insert(buf.end(), r.payload.begin(), r.payload.end());
  }
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

CheckpointFile load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw FormatError(path + ": file too small to be a checkpoint");

  uint32_t stored = static_cast<uint32_t>(buf[buf.size() - 4]) |
                    (static_cast<uint32_t>(buf[buf.size() - 3]) << 8) |
                    (static_cast<uint32_t>(buf[buf.size() - 2]) << 16) |
                    (static_cast<uint32_t>(buf[buf.size() - 1]) << 24);
  uint32_t actual = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (stored != actual)
    throw FormatError(path + ": checksum mismatch at offset " + std::to_string(buf.size() - 4));

  Reader r(buf, path);
  r.set_limit(buf.size() - 4);
  if (r.bytes_str(4, "magic") != "TVC1")
    throw FormatError(path + ": bad magic at offset 0 (expected TVC1)");
  CheckpointFile file;
  file.version = r.u32("version");
  if (file.version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(file.version));
  uint32_t cfg_len = r.u32("config length");
  file.config_text = r.bytes_str(cfg_len, "config snapshot");
  while (r.remaining() > 0) {
    TensorRecord rec;
    uint32_t name_len = r.u32("record name length");
    if (name_len == 0 || name_len > 4096)
      throw FormatError(path + ": implausible name length at offset " +
                        std::to_string(r.pos() - 4));
    rec.name = r.bytes_str(name_len, "record name");
    rec.dtype = r.u8("record dtype");
    if (rec.dtype > 1)
      throw FormatError(path + ": unknown dtype for '" + rec.name + "' at offset " +
                        std::to_string(r.pos() - 1));
    uint8_t ndim = r.u8("record rank");
    for (int i = 0; i < ndim; ++i) rec.dims.push_back(r.u32("record dimension"));
    uint64_t count = rec.element_count();
    if (count > (1ULL << 32))
      throw FormatError(path + ": implausible tensor size for '" + rec.name + "'");
    size_t elt = rec.dtype == 0 ? 4 : 8;
    rec.payload = r.bytes(static_cast<size_t>(count * elt), "record payload");
    file.records.push_back(std::move(rec));
  }
  return file;
}

}  // namespace tvts2
