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

#include "dfr/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dfr/error.hpp"

namespace dfr {

double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: scores and labels differ in length");
  std::uint64_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("roc_auc: undefined unless both classes are present");

  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });

  // Twice the area in units of (1/pos) x (1/neg), accumulated exactly.
  std::uint64_t twice_area = 0;
  std::uint64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const float s = scores[order[i]];
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]]) {
        ++dtp;
      } else {
        ++dfp;
      }
    }
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

RegionLabels label_regions(const Tensor3& mask) {
  if (mask.channels() != 1) throw ShapeError("label_regions: mask must have one channel");
  RegionLabels out;
  out.height = mask.height();
  out.width = mask.width();
  out.ids.assign(static_cast<std::size_t>(out.height) * out.width, 0);
  std::vector<std::pair<int, int>> stack;
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      if (mask.at(i, j, 0) <= 0.5f || out.at(i, j) != 0) continue;
      const int id = ++out.count;
      out.ids[static_cast<std::size_t>(i) * out.width + j] = id;
      stack.push_back({i, j});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= out.height || nx >= out.width) continue;
            int& slot = out.ids[static_cast<std::size_t>(ny) * out.width + nx];
            if (slot != 0 || mask.at(ny, nx, 0) <= 0.5f) continue;
            slot = id;
            stack.push_back({ny, nx});
          }
      }
    }
  }
  return out;
}

std::vector<ProCurvePoint> pro_curve(std::span<const EvalImage> images, std::size_t max_points) {
  std::vector<float> scores;
  std::vector<int> region;  // global region id per pooled pixel, 0 = negative
  std::vector<std::uint64_t> region_size = {0};
  for (const auto& img : images) {
    if (img.scores.channels() != 1 || img.mask.channels() != 1 || img.scores.height() != img.mask.height() ||
        img.scores.width() != img.mask.width()) {
      throw ShapeError("pro_curve: score map and mask must both be h x w x 1 and aligned");
    }
    const RegionLabels labels = label_regions(img.mask);
    const int base = static_cast<int>(region_size.size()) - 1;
    region_size.resize(region_size.size() + labels.count, 0);
    auto s = img.scores.data();
    scores.insert(scores.end(), s.begin(), s.end());
    for (int id : labels.ids) {
      const int global = id == 0 ? 0 : base + id;
      region.push_back(global);
      if (global) ++region_size[global];
    }
  }
  const std::size_t regions = region_size.size() - 1;
  if (regions == 0) throw MetricError("pro_curve: no ground-truth anomalous region in any image");
  std::uint64_t negatives = 0;
  for (int r : region) negatives += r == 0 ? 1 : 0;
  if (negatives == 0) throw MetricError("pro_curve: no ground-truth negative pixels; FPR undefined");

  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });

  std::vector<ProCurvePoint> curve = {{0.0, 0.0}};
  const double inv_neg = 1.0 / static_cast<double>(negatives);
  const double inv_regions = 1.0 / static_cast<double>(regions);
  const std::size_t n = order.size();
  std::uint64_t fp = 0;
  double overlap_sum = 0.0;  // sum over regions of detected fraction
  std::size_t next_emit = max_points > 0 ? (n + max_points - 1) / max_points : 0;
  std::size_t i = 0;
  while (i < n) {
    const float s = scores[order[i]];
    for (; i < n && scores[order[i]] == s; ++i) {
      const int r = region[order[i]];
      if (r == 0) {
        ++fp;
      } else {
        overlap_sum += 1.0 / static_cast<double>(region_size[r]);
      }
    }
    if (max_points > 0 && i < n) {
      if (i < next_emit) continue;
      while (next_emit <= i) next_emit += (n + max_points - 1) / max_points;
    }
    curve.push_back({static_cast<double>(fp) * inv_neg, std::min(1.0, overlap_sum * inv_regions)});
  }
  return curve;
}

double pro_auc(std::span<const ProCurvePoint> curve, double fpr_cap) {
  if (curve.empty()) throw ValidationError("pro_auc: empty curve");
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ValidationError("pro_auc: fpr cap must be in (0, 1]");
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const ProCurvePoint& a = curve[k - 1];
    const ProCurvePoint& b = curve[k];
    if (a.fpr >= fpr_cap) break;
    if (b.fpr <= fpr_cap) {
      area += (b.fpr - a.fpr) * (a.mean_pro + b.mean_pro) * 0.5;
    } else {
      const double t = (fpr_cap - a.fpr) / (b.fpr - a.fpr);
      const double at_cap = a.mean_pro + t * (b.mean_pro - a.mean_pro);
      area += (fpr_cap - a.fpr) * (a.mean_pro + at_cap) * 0.5;
      break;
    }
  }
  return std::clamp(area / fpr_cap, 0.0, 1.0);
}

}  // namespace dfr
