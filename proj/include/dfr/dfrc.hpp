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

// DFRC: the checksummed binary container used for backbone weights, trained
// autoencoders, feature dumps and score maps.
//
// Layout (all integers little-endian):
//   "DFRC"                      4 bytes magic
//   version                     u32
//   entry count                 u32
//   entries, each:
//     name length               u16
//     name                      UTF-8 bytes
//     dtype                     u8   (0 = f32 LE, 1 = UTF-8 text)
//     rank                      u8
//     dims                      u32 x rank
//     payload                   prod(dims) elements
//   CRC32 of all preceding bytes (u32)

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfr {

inline constexpr std::uint32_t kDfrcVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kText = 1 };

struct DfrcEntry {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;  // kF32
  std::string text;           // kText

  std::size_t element_count() const;
};

class DfrcFile {
 public:
  void add_f32(std::string name, std::vector<std::uint32_t> dims, std::vector<float> values);
  void add_text(std::string name, std::string text);

  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const DfrcEntry* find(const std::string& name) const;
  // Throw FormatError when missing or of the wrong dtype.
  const DfrcEntry& f32(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  const std::vector<DfrcEntry>& entries() const { return entries_; }

 private:
  std::vector<DfrcEntry> entries_;
};

std::vector<std::uint8_t> encode_dfrc(const DfrcFile& file);
// FormatError on bad magic, unknown version, truncation or CRC mismatch.
DfrcFile decode_dfrc(std::span<const std::uint8_t> bytes);

// Writes to a sibling temp file and renames, so a failed write never leaves a
// partial file at `path`.
void write_dfrc(const std::string& path, const DfrcFile& file);
DfrcFile read_dfrc(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace dfr
