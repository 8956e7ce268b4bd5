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

#include "dfr/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "dfr/dfrc.hpp"
#include "dfr/error.hpp"

namespace dfr {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::pair<int, int> parse_pair(const std::string& key, const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError(key + " must look like K:S, got '" + text + "'");
  return {static_cast<int>(parse_integer(key, text.substr(0, colon))),
          static_cast<int>(parse_integer(key, text.substr(colon + 1)))};
}

}  // namespace

KeyValueMap parse_key_values(const std::string& text) {
  KeyValueMap kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(const KeyValueMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ValidationError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a real number, got '" + text + "'");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

void RunConfig::validate() const {
  if (scales.lo < 1 || scales.hi < scales.lo) throw ConfigError("scales must satisfy 1 <= A <= B");
  if (agg_k < 1 || agg_stride < 1) throw ConfigError("aggregation kernel and stride must be >= 1");
  if (image_side < 1) throw ConfigError("image_side must be >= 1");
  if (image_side < agg_k || (image_side - agg_k) % agg_stride != 0) {
    throw ConfigError("image_side " + std::to_string(image_side) + " is incompatible with aggregation " +
                      std::to_string(agg_k) + ":" + std::to_string(agg_stride));
  }
  train.validate();
  if (!(acceptable_fpr >= 0.0 && acceptable_fpr < 1.0)) throw ConfigError("fpr must be in [0, 1)");
  if (!(pca_variance > 0.0 && pca_variance <= 1.0)) throw ConfigError("pca_variance must be in (0, 1]");
  if (pca_per_image < 1 || pca_max_samples < 2) throw ConfigError("PCA sample budget too small");
}

KeyValueMap RunConfig::to_key_values() const {
  KeyValueMap kv;
  kv["scales"] = scales.to_string();
  kv["padding"] = to_string(padding);
  kv["agg"] = std::to_string(agg_k) + ":" + std::to_string(agg_stride);
  kv["image_side"] = std::to_string(image_side);
  kv["learning_rate"] = format_double(train.learning_rate);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["epochs"] = std::to_string(train.epochs);
  kv["adam_beta1"] = format_double(train.beta1);
  kv["adam_beta2"] = format_double(train.beta2);
  kv["adam_eps"] = format_double(train.eps);
  kv["fpr"] = format_double(acceptable_fpr);
  kv["seed"] = std::to_string(seed);
  kv["pca_variance"] = format_double(pca_variance);
  kv["pca_per_image"] = std::to_string(pca_per_image);
  kv["pca_max_samples"] = std::to_string(pca_max_samples);
  kv["backbone"] = backbone_path;
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValueMap& kv) {
  RunConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "scales") {
      c.scales = ScaleRange::parse(v);
    } else if (k == "padding") {
      c.padding = parse_padding_mode(v);
    } else if (k == "agg") {
      std::tie(c.agg_k, c.agg_stride) = parse_pair(k, v);
    } else if (k == "image_side") {
      c.image_side = static_cast<int>(parse_integer(k, v));
    } else if (k == "learning_rate") {
      c.train.learning_rate = parse_double(k, v);
    } else if (k == "batch_size") {
      c.train.batch_size = static_cast<int>(parse_integer(k, v));
    } else if (k == "epochs") {
      c.train.epochs = static_cast<int>(parse_integer(k, v));
    } else if (k == "adam_beta1") {
      c.train.beta1 = parse_double(k, v);
    } else if (k == "adam_beta2") {
      c.train.beta2 = parse_double(k, v);
    } else if (k == "adam_eps") {
      c.train.eps = parse_double(k, v);
    } else if (k == "fpr") {
      c.acceptable_fpr = parse_double(k, v);
    } else if (k == "seed") {
      const long long s = parse_integer(k, v);
      if (s < 0) throw ConfigError("seed must be nonnegative");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (k == "pca_variance") {
      c.pca_variance = parse_double(k, v);
    } else if (k == "pca_per_image") {
      c.pca_per_image = static_cast<int>(parse_integer(k, v));
    } else if (k == "pca_max_samples") {
      c.pca_max_samples = static_cast<int>(parse_integer(k, v));
    } else if (k == "backbone") {
      c.backbone_path = v;
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) { return RunConfig::from_text(read_text_file(path)); }

void save_run_config(const std::string& path, const RunConfig& cfg) {
  write_text_file(path, "# dfr run configuration\n" + cfg.to_text());
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace dfr
