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

#include "dfr/regional.hpp"

#include <algorithm>

#include "dfr/error.hpp"

namespace dfr {

void ScaleRange::validate(int tap_count) const {
  if (lo < 1 || hi < lo || hi > tap_count) {
    throw ConfigError("scale range " + to_string() + " is invalid for a backbone with " + std::to_string(tap_count) +
                          " taps");
  }
}

std::string ScaleRange::to_string() const { return std::to_string(lo) + ":" + std::to_string(hi); }

ScaleRange ScaleRange::parse(const std::string& text) {
  try {
    const auto colon = text.find(':');
    std::size_t used = 0;
    ScaleRange r;
    if (colon == std::string::npos) {
      r.lo = r.hi = std::stoi(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } else {
      const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
      r.lo = std::stoi(a, &used);
      if (used != a.size()) throw std::invalid_argument(text);
      r.hi = std::stoi(b, &used);
      if (used != b.size()) throw std::invalid_argument(text);
    }
    if (r.lo < 1 || r.hi < r.lo) throw std::invalid_argument(text);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("scale range must look like A:B with 1 <= A <= B, got '" + text + "'");
  }
}

int fused_channels(std::span<const int> tap_channels, ScaleRange range) {
  range.validate(static_cast<int>(tap_channels.size()));
  int total = 0;
  for (int l = range.lo; l <= range.hi; ++l) total += tap_channels[l - 1];
  return total;
}

namespace {

// For output cell index i along one axis, how many aligned pixels in the
// window [i*stride, i*stride + k) map to each source index under the
// floor(p * src / img) rule. Returned as (source index, count) runs.
struct Run {
  int src;
  int count;
};

std::vector<std::vector<Run>> window_runs(int out, int img, int src, int k, int stride) {
  std::vector<std::vector<Run>> runs(out);
  for (int i = 0; i < out; ++i) {
    for (int p = i * stride; p < i * stride + k; ++p) {
      const int s = static_cast<int>(static_cast<long long>(p) * src / img);
      if (!runs[i].empty() && runs[i].back().src == s) {
        ++runs[i].back().count;
      } else {
        runs[i].push_back({s, 1});
      }
    }
  }
  return runs;
}

}  // namespace

RegionalFeatureMap generate_regional_features(std::span<const Tensor3> features, ScaleRange range, int img_h,
                                              int img_w, int agg_k, int agg_stride) {
  if (features.empty()) throw ValidationError("generate_regional_features: empty feature list");
  range.validate(static_cast<int>(features.size()));
  if (img_h < 1 || img_w < 1) throw ValidationError("generate_regional_features: image size must be positive");
  if (agg_k < 1 || agg_stride < 1) throw ValidationError("generate_regional_features: aggregation k and stride must be >= 1");
  auto check = [&](int extent, const char* dim) {
    if (extent < agg_k || (extent - agg_k) % agg_stride != 0) {
      throw ShapeError(std::string("mean_filter: ") + dim + " " + std::to_string(extent) +
                       " is incompatible with kernel " + std::to_string(agg_k) + " and stride " +
                       std::to_string(agg_stride) + " ((" + dim + " - k) must be a nonnegative multiple of stride)");
    }
  };
  check(img_h, "height");
  check(img_w, "width");
  const int oh = (img_h - agg_k) / agg_stride + 1;
  const int ow = (img_w - agg_k) / agg_stride + 1;

  RegionalFeatureMap rfm;
  rfm.scale_range = range;
  rfm.region_h = agg_stride;
  rfm.region_w = agg_stride;
  int c_o = 0;
  for (int l = range.lo; l <= range.hi; ++l) {
    rfm.channel_offsets.push_back(c_o);
    c_o += features[l - 1].channels();
  }
  rfm.channel_offsets.push_back(c_o);
  rfm.map = Tensor3(oh, ow, c_o);

  const double inv_area = 1.0 / (static_cast<double>(agg_k) * agg_k);
  std::vector<double> acc;
  for (int l = range.lo; l <= range.hi; ++l) {
    const Tensor3& phi = features[l - 1];
    const int c = phi.channels();
    const int offset = rfm.channel_offsets[l - range.lo];
    const auto rows = window_runs(oh, img_h, phi.height(), agg_k, agg_stride);
    const auto cols = window_runs(ow, img_w, phi.width(), agg_k, agg_stride);
    acc.assign(c, 0.0);
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const Run& r : rows[i]) {
          for (const Run& q : cols[j]) {
            const double weight = static_cast<double>(r.count) * q.count;
            auto src = phi.cell(r.src, q.src);
            for (int ch = 0; ch < c; ++ch) acc[ch] += weight * src[ch];
          }
        }
        auto dst = rfm.map.cell(i, j);
        for (int ch = 0; ch < c; ++ch) dst[offset + ch] = static_cast<float>(acc[ch] * inv_area);
      }
    }
  }
  return rfm;
}

std::span<const float> feature_at(const RegionalFeatureMap& rfm, int i, int j) {
  if (i < 0 || j < 0 || i >= rfm.map.height() || j >= rfm.map.width()) {
    throw IndexError("feature_at: cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                     std::to_string(rfm.map.height()) + "x" + std::to_string(rfm.map.width()));
  }
  return rfm.map.cell(i, j);
}

DfrcFile regional_to_dfrc(const RegionalFeatureMap& rfm) {
  DfrcFile f;
  f.add_f32("map",
            {static_cast<std::uint32_t>(rfm.map.height()), static_cast<std::uint32_t>(rfm.map.width()),
             static_cast<std::uint32_t>(rfm.map.channels())},
            rfm.map.vec());
  f.add_f32("region", {2}, {static_cast<float>(rfm.region_h), static_cast<float>(rfm.region_w)});
  f.add_text("scale_range", rfm.scale_range.to_string());
  std::vector<float> offsets(rfm.channel_offsets.begin(), rfm.channel_offsets.end());
  const auto n_offsets = static_cast<std::uint32_t>(offsets.size());
  f.add_f32("channel_offsets", {n_offsets}, std::move(offsets));
  return f;
}

RegionalFeatureMap regional_from_dfrc(const DfrcFile& file) {
  const DfrcEntry& m = file.f32("map");
  if (m.dims.size() != 3) throw FormatError("regional map entry must be rank 3");
  RegionalFeatureMap rfm;
  rfm.map = Tensor3(static_cast<int>(m.dims[0]), static_cast<int>(m.dims[1]), static_cast<int>(m.dims[2]), m.values);
  const auto& region = file.f32("region").values;
  if (region.size() != 2) throw FormatError("region entry must hold 2 values");
  rfm.region_h = static_cast<int>(region[0]);
  rfm.region_w = static_cast<int>(region[1]);
  rfm.scale_range = ScaleRange::parse(file.text("scale_range"));
  for (float v : file.f32("channel_offsets").values) rfm.channel_offsets.push_back(static_cast<int>(v));
  return rfm;
}

}  // namespace dfr
