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

#include <cstddef>
#include <span>

#include "dfr/tensor.hpp"

namespace dfr {

enum class MapResolution { kRegional, kPixel };

struct AnomalyMap {
  Tensor3 scores;  // h x w x 1, nonnegative
  MapResolution resolution = MapResolution::kRegional;

  int height() const { return scores.height(); }
  int width() const { return scores.width(); }
};

// Per-cell Euclidean distance between a regional map and its reconstruction.
AnomalyMap anomaly_map(const Tensor3& truth, const Tensor3& recon);

// Bilinear upsample of a regional map to image resolution.
AnomalyMap to_pixel_map(const AnomalyMap& regional, int img_h, int img_w);

struct Threshold {
  double value = 0.0;
  double calibration_fpr = 0.0;
  std::size_t calibration_pixel_count = 0;
};

// Smallest calibration score T such that the fraction of scores strictly above
// T is at most acceptable_fpr. fpr = 0 yields the maximum score.
Threshold calibrate_threshold(std::span<const float> normal_pixel_scores, double acceptable_fpr);

// 1 where score > T, else 0.
Tensor3 segment(const AnomalyMap& pixel_map, const Threshold& threshold);

struct DisplayMap {
  Tensor3 image;            // values in [0, 1]
  bool degenerate = false;  // constant input; image is all zero
};

// Per-map min-max rescale to [0, 1].
DisplayMap normalize_for_display(const AnomalyMap& map);

}  // namespace dfr
