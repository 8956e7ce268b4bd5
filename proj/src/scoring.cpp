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

#include "dfr/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dfr/error.hpp"

namespace dfr {

AnomalyMap anomaly_map(const Tensor3& truth, const Tensor3& recon) {
  if (!truth.same_shape(recon)) throw ShapeError("anomaly_map: truth and reconstruction shapes differ");
  AnomalyMap out{Tensor3(truth.height(), truth.width(), 1), MapResolution::kRegional};
  for (int i = 0; i < truth.height(); ++i)
    for (int j = 0; j < truth.width(); ++j) {
      auto a = truth.cell(i, j);
      auto b = recon.cell(i, j);
      double sq = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = static_cast<double>(a[c]) - b[c];
        sq += d * d;
      }
      out.scores.at(i, j, 0) = static_cast<float>(std::sqrt(sq));
    }
  return out;
}

AnomalyMap to_pixel_map(const AnomalyMap& regional, int img_h, int img_w) {
  if (regional.resolution != MapResolution::kRegional) {
    throw ValidationError("to_pixel_map: input is already at pixel resolution");
  }
  return {resize_bilinear(regional.scores, img_h, img_w), MapResolution::kPixel};
}

Threshold calibrate_threshold(std::span<const float> normal_pixel_scores, double acceptable_fpr) {
  if (normal_pixel_scores.empty()) throw ValidationError("calibrate_threshold: no calibration scores");
  if (!(acceptable_fpr >= 0.0 && acceptable_fpr < 1.0)) {
    throw ValidationError("calibrate_threshold: acceptable FPR must be in [0, 1)");
  }
  std::vector<float> sorted(normal_pixel_scores.begin(), normal_pixel_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // Largest count k of scores allowed above T with k / n <= fpr.
  auto allowed = static_cast<std::size_t>(std::floor(acceptable_fpr * static_cast<double>(n)));
  while (allowed > 0 && static_cast<double>(allowed) / static_cast<double>(n) > acceptable_fpr) --allowed;
  while (allowed + 1 < n && static_cast<double>(allowed + 1) / static_cast<double>(n) <= acceptable_fpr) ++allowed;
  allowed = std::min(allowed, n - 1);
  // At most `allowed` scores lie strictly above sorted[n-1-allowed]; any
  // smaller value has at least allowed+1 above it.
  return {static_cast<double>(sorted[n - 1 - allowed]), acceptable_fpr, n};
}

Tensor3 segment(const AnomalyMap& pixel_map, const Threshold& threshold) {
  Tensor3 mask(pixel_map.height(), pixel_map.width(), 1);
  auto src = pixel_map.scores.data();
  auto dst = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]) > threshold.value ? 1.0f : 0.0f;
  return mask;
}

DisplayMap normalize_for_display(const AnomalyMap& map) {
  const float lo = map.scores.min();
  const float hi = map.scores.max();
  DisplayMap out{Tensor3(map.height(), map.width(), 1), false};
  if (!(hi > lo)) {
    out.degenerate = true;
    return out;
  }
  const double scale = 1.0 / (static_cast<double>(hi) - lo);
  auto src = map.scores.data();
  auto dst = out.image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(std::clamp((static_cast<double>(src[i]) - lo) * scale, 0.0, 1.0));
  }
  return out;
}

}  // namespace dfr
