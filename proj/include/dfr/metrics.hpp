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
#include <cstdint>
#include <span>
#include <vector>

#include "dfr/tensor.hpp"

namespace dfr {

// Area under the ROC curve by the trapezoid rule over all distinct score
// thresholds; tied scores move together (equivalent to the midrank U
// statistic). MetricError unless both labels occur.
double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct LabeledScores {
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;  // 1 = anomalous
};

inline double roc_auc(const LabeledScores& data) { return roc_auc(data.scores, data.labels); }

struct RegionLabels {
  int height = 0;
  int width = 0;
  int count = 0;
  std::vector<int> ids;  // row-major, 0 = background, 1..count otherwise

  int at(int i, int j) const { return ids[static_cast<std::size_t>(i) * width + j]; }
};

// 8-connected components of the pixels > 0.5 in a single-channel mask.
RegionLabels label_regions(const Tensor3& mask);

// One evaluation image: pixel scores and its ground-truth mask (both h x w x 1).
struct EvalImage {
  Tensor3 scores;
  Tensor3 mask;
};

struct ProCurvePoint {
  double fpr = 0.0;       // false positives / all negative pixels, pooled over images
  double mean_pro = 0.0;  // mean over all regions of the detected fraction
};

// Sweeps the threshold down through the pooled scores; a pixel is detected
// when its score is >= the threshold. The curve starts at (0, 0) and has one
// point per distinct score. With max_points > 0 only points where the swept
// pixel count crosses a multiple of N / max_points (and the last) are kept.
// MetricError when no image contains a ground-truth region or no negatives exist.
std::vector<ProCurvePoint> pro_curve(std::span<const EvalImage> images, std::size_t max_points = 0);

// Trapezoidal area under mean_pro over fpr in [0, fpr_cap], with linear
// interpolation at the cap, divided by fpr_cap.
double pro_auc(std::span<const ProCurvePoint> curve, double fpr_cap = 0.3);

}  // namespace dfr
