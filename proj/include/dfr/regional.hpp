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

#include <span>
#include <string>
#include <vector>

#include "dfr/dfrc.hpp"
#include "dfr/tensor.hpp"

namespace dfr {

// Contiguous, 1-based, inclusive range of backbone taps.
struct ScaleRange {
  int lo = 1;
  int hi = 1;

  int count() const { return hi - lo + 1; }
  // Throws ValidationError unless 1 <= lo <= hi <= tap_count.
  void validate(int tap_count) const;
  std::string to_string() const;
  // "A:B" or a single "A".
  static ScaleRange parse(const std::string& text);

  friend bool operator==(const ScaleRange&, const ScaleRange&) = default;
};

// Sum of c_l over the selected taps.
int fused_channels(std::span<const int> tap_channels, ScaleRange range);

struct RegionalFeatureMap {
  Tensor3 map;  // h_o x w_o x c_o
  int region_h = 0;
  int region_w = 0;
  ScaleRange scale_range;
  // Starting channel of each selected scale, followed by c_o.
  std::vector<int> channel_offsets;

  int c_o() const { return map.channels(); }
};

// Aligns each selected tap to img_h x img_w by nearest resize, aggregates with
// an agg_k x agg_k mean filter at stride agg_stride, and concatenates along
// channels in ascending tap order. The resize and filter are fused, so the
// full-resolution aligned maps are never materialized.
RegionalFeatureMap generate_regional_features(std::span<const Tensor3> features, ScaleRange range, int img_h,
                                              int img_w, int agg_k, int agg_stride);

// The c_o-vector at cell (i, j). IndexError when out of bounds.
std::span<const float> feature_at(const RegionalFeatureMap& rfm, int i, int j);

DfrcFile regional_to_dfrc(const RegionalFeatureMap& rfm);
RegionalFeatureMap regional_from_dfrc(const DfrcFile& file);

}  // namespace dfr
