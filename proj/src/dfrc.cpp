/* Copyright 2026 The DFR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dfr/dfrc.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dfr/error.hpp"

namespace dfr {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'R', 'C'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("DFRC payload truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::size_t DfrcEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void DfrcFile::add_f32(std::string name, std::vector<std::uint32_t> dims, std::vector<float> values) {
  DfrcEntry e;
  e.name = std::move(name);
  e.dtype = DType::kF32;
  e.dims = std::move(dims);
  e.values = std::move(values);
  if (e.element_count() != e.values.size()) {
    throw ShapeError("DFRC entry '" + e.name + "': dims do not match value count");
  }
  if (e.dims.size() > 255) throw ShapeError("DFRC entry '" + e.name + "': rank exceeds 255");
  entries_.push_back(std::move(e));
}

void DfrcFile::add_text(std::string name, std::string text) {
  DfrcEntry e;
  e.name = std::move(name);
  e.dtype = DType::kText;
  e.dims = {static_cast<std::uint32_t>(text.size())};
  e.text = std::move(text);
  entries_.push_back(std::move(e));
}

const DfrcEntry* DfrcFile::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const DfrcEntry& DfrcFile::f32(const std::string& name) const {
  const DfrcEntry* e = find(name);
  if (!e) throw FormatError("DFRC entry '" + name + "' missing");
  if (e->dtype != DType::kF32) throw FormatError("DFRC entry '" + name + "' is not f32");
  return *e;
}

const std::string& DfrcFile::text(const std::string& name) const {
  const DfrcEntry* e = find(name);
  if (!e) throw FormatError("DFRC entry '" + name + "' missing");
  if (e->dtype != DType::kText) throw FormatError("DFRC entry '" + name + "' is not text");
  return e->text;
}

std::vector<std::uint8_t> encode_dfrc(const DfrcFile& file) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kDfrcVersion);
  w.u32(static_cast<std::uint32_t>(file.entries().size()));
  for (const auto& e : file.entries()) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("DFRC entry name too long");
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.u32(d);
    if (e.dtype == DType::kF32) {
      for (float v : e.values) w.f32(v);
    } else {
      w.bytes(e.text.data(), e.text.size());
    }
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

DfrcFile decode_dfrc(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a DFRC file (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader r(bytes);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kDfrcVersion) throw FormatError("unsupported DFRC version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  DfrcFile file;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    const std::uint8_t dtype = r.u8();
    const std::uint8_t rank = r.u8();
    std::vector<std::uint32_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32();
      if (d != 0 && n > bytes.size() / d) throw FormatError("DFRC entry '" + name + "' dims exceed file size");
      n *= d;
    }
    if (dtype == static_cast<std::uint8_t>(DType::kF32)) {
      r.need(n * 4);
      if (r.pos() + n * 4 > body.size()) throw FormatError("DFRC payload truncated in entry '" + name + "'");
      std::vector<float> values(n);
      for (auto& v : values) v = r.f32();
      file.add_f32(std::move(name), std::move(dims), std::move(values));
    } else if (dtype == static_cast<std::uint8_t>(DType::kText)) {
      if (rank != 1) throw FormatError("DFRC text entry '" + name + "' must have rank 1");
      if (r.pos() + n > body.size()) throw FormatError("DFRC payload truncated in entry '" + name + "'");
      file.add_text(std::move(name), r.str(n));
    } else {
      throw FormatError("DFRC entry '" + name + "' has unknown dtype " + std::to_string(dtype));
    }
  }
  if (r.pos() != body.size()) {
    throw FormatError("DFRC payload size mismatch (" + std::to_string(bytes.size() - r.pos()) +
                      " trailing bytes, expected 4)");
  }
  const std::uint32_t stored = r.u32();
  if (stored != crc32_of(body)) throw FormatError("DFRC checksum mismatch");
  return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return bytes;
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::remove(tmp.c_str());
      throw IoError("write failed for '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

void write_dfrc(const std::string& path, const DfrcFile& file) {
  write_file_atomic(path, encode_dfrc(file));
}

DfrcFile read_dfrc(const std::string& path) { return decode_dfrc(read_file_bytes(path)); }

}  // namespace dfr
