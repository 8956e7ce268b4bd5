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

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dfr/backbone.hpp"
#include "dfr/cae.hpp"
#include "dfr/regional.hpp"

namespace dfr {

// Ordered key=value text: one pair per line, '#' starts a comment line.
using KeyValueMap = std::map<std::string, std::string>;

KeyValueMap parse_key_values(const std::string& text);
std::string format_key_values(const KeyValueMap& kv);

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& key, const std::string& text);
long long parse_integer(const std::string& key, const std::string& text);

struct RunConfig {
  ScaleRange scales{1, 16};
  PaddingMode padding = PaddingMode::kZero;
  int agg_k = 4;
  int agg_stride = 4;
  int image_side = 256;
  TrainConfig train;
  double acceptable_fpr = 0.0;
  std::uint64_t seed = 0;
  double pca_variance = 0.9;
  int pca_per_image = 50;
  int pca_max_samples = 20000;
  std::string backbone_path;

  // ConfigError on any out-of-range field.
  void validate() const;

  KeyValueMap to_key_values() const;
  // Unknown keys and out-of-range values are rejected; missing keys keep
  // their defaults.
  static RunConfig from_key_values(const KeyValueMap& kv);

  std::string to_text() const { return format_key_values(to_key_values()); }
  static RunConfig from_text(const std::string& text) { return from_key_values(parse_key_values(text)); }

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_text() == b.to_text(); }
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// Writes UTF-8 text via a temp file and rename.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace dfr
