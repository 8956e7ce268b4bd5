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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dfr/error.hpp"
#include "dfr/rng.hpp"
#include "dfr/scoring.hpp"
#include "oracles.hpp"

namespace dfr {
namespace {

std::size_t count_above(std::span<const float> s, double t) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [t](float v) { return v > t; }));
}

AnomalyMap pixel_map(Tensor3 t) { return {std::move(t), MapResolution::kPixel}; }

TEST(AnomalyMap, PerfectReconstructionIsZero) {
  Rng rng(1);
  const Tensor3 t = oracle::random_tensor(rng, 3, 4, 5);
  const AnomalyMap a = anomaly_map(t, t);
  EXPECT_EQ(a.scores.channels(), 1);
  EXPECT_EQ(a.scores.max(), 0.0f);
  EXPECT_EQ(a.resolution, MapResolution::kRegional);
}

TEST(AnomalyMap, SingleCellDifference) {
  Tensor3 a(2, 2, 2), b(2, 2, 2);
  b.at(1, 0, 0) = 3.0f;
  b.at(1, 0, 1) = 4.0f;
  const AnomalyMap m = anomaly_map(a, b);
  EXPECT_EQ(m.scores.vec(), (std::vector<float>{0, 0, 5, 0}));
}

TEST(AnomalyMap, MatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = rng.range(1, 8), w = rng.range(1, 8), c = rng.range(1, 20);
    const Tensor3 a = oracle::random_tensor(rng, h, w, c), b = oracle::random_tensor(rng, h, w, c);
    EXPECT_LT(oracle::max_rel_err(anomaly_map(a, b).scores, oracle::cell_distance(a, b)), 1e-5);
  }
}

TEST(AnomalyMap, ShapeMismatch) { EXPECT_THROW(anomaly_map(Tensor3(2, 2, 3), Tensor3(2, 2, 4)), ShapeError); }

TEST(AnomalyMap, CellShuffleEquivariance) {
  Rng rng(3);
  const int c = 4;
  const Tensor3 a = oracle::random_tensor(rng, 3, 3, c), b = oracle::random_tensor(rng, 3, 3, c);
  const auto perm = rng.permutation(9);
  Tensor3 ap(3, 3, c), bp(3, 3, c);
  for (std::size_t i = 0; i < 9; ++i)
    for (int k = 0; k < c; ++k) {
      ap.data()[perm[i] * c + k] = a.data()[i * c + k];
      bp.data()[perm[i] * c + k] = b.data()[i * c + k];
    }
  const Tensor3 s = anomaly_map(a, b).scores, sp = anomaly_map(ap, bp).scores;
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(sp.data()[perm[i]], s.data()[i]);
}

TEST(ToPixelMap, ConstantAndGeometry) {
  const AnomalyMap r{Tensor3(64, 64, 1, 0.3f), MapResolution::kRegional};
  const AnomalyMap p = to_pixel_map(r, 256, 256);
  EXPECT_EQ(p.height(), 256);
  EXPECT_EQ(p.width(), 256);
  EXPECT_EQ(p.resolution, MapResolution::kPixel);
  EXPECT_FLOAT_EQ(p.scores.min(), 0.3f);
  EXPECT_FLOAT_EQ(p.scores.max(), 0.3f);
}

TEST(ToPixelMap, BoundedByRegionalRange) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const AnomalyMap r{oracle::random_tensor(rng, 4, 4, 1, 0, 3), MapResolution::kRegional};
    const AnomalyMap p = to_pixel_map(r, 16, 16);
    EXPECT_LE(p.scores.max(), r.scores.max());
    EXPECT_GE(p.scores.min(), 0.0f);
  }
}

TEST(Calibrate, HandExamples) {
  std::vector<float> s(10);
  std::iota(s.begin(), s.end(), 1.0f);
  EXPECT_DOUBLE_EQ(calibrate_threshold(s, 0.0).value, 10.0);
  const Threshold t = calibrate_threshold(s, 0.2);
  EXPECT_DOUBLE_EQ(t.value, 8.0);
  EXPECT_EQ(count_above(s, t.value), 2u);
  EXPECT_EQ(t.calibration_pixel_count, 10u);
  EXPECT_DOUBLE_EQ(t.calibration_fpr, 0.2);
}

TEST(Calibrate, HalfPercentOfThousand) {
  Rng rng(5);
  std::vector<float> s(1000);
  std::iota(s.begin(), s.end(), 0.0f);
  rng.shuffle(s);
  EXPECT_EQ(count_above(s, calibrate_threshold(s, 0.005).value), 5u);
}

TEST(Calibrate, MatchesSortOracleAndIsMonotone) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> s(static_cast<std::size_t>(rng.range(1, 300)));
    for (auto& v : s) v = static_cast<float>(rng.uniform());
    std::vector<float> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    double prev = std::numeric_limits<double>::infinity();
    for (double fpr : {0.0, 0.005, 0.05, 0.2, 0.5, 0.9}) {
      const double t = calibrate_threshold(s, fpr).value;
      const std::size_t allowed = static_cast<std::size_t>(std::floor(fpr * s.size()));
      EXPECT_EQ(t, sorted[s.size() - 1 - std::min(allowed, s.size() - 1)]);
      EXPECT_LE(count_above(s, t), allowed);
      EXPECT_LE(t, prev);
      prev = t;
    }
  }
}

TEST(Calibrate, RejectsBadInput) {
  const std::vector<float> s = {1.0f};
  EXPECT_THROW(calibrate_threshold({}, 0.0), ValidationError);
  EXPECT_THROW(calibrate_threshold(s, 1.0), ValidationError);
  EXPECT_THROW(calibrate_threshold(s, -0.1), ValidationError);
}

TEST(Segment, HandExample) {
  const Tensor3 mask = segment(pixel_map(Tensor3(2, 2, 1, {0.1f, 0.9f, 0.5f, 0.7f})), Threshold{0.6});
  EXPECT_EQ(mask.vec(), (std::vector<float>{0, 1, 0, 1}));
}

TEST(Segment, EmptyAndFull) {
  const AnomalyMap m = pixel_map(Tensor3(3, 3, 1, 0.5f));
  EXPECT_EQ(segment(m, Threshold{0.5}).max(), 0.0f);
  EXPECT_EQ(segment(m, Threshold{0.4}).min(), 1.0f);
}

TEST(Segment, ZeroFprThresholdIsSilentOnCalibrationSet) {
  Rng rng(7);
  const AnomalyMap m = pixel_map(oracle::random_tensor(rng, 16, 16, 1, 0, 1));
  EXPECT_EQ(segment(m, calibrate_threshold(m.scores.data(), 0.0)).max(), 0.0f);
}

TEST(Normalize, AffineRescale) {
  const DisplayMap d = normalize_for_display(pixel_map(Tensor3(1, 3, 1, {2, 3, 4})));
  EXPECT_FALSE(d.degenerate);
  EXPECT_EQ(d.image.vec(), (std::vector<float>{0.0f, 0.5f, 1.0f}));
}

TEST(Normalize, UnitRangeIsUnchanged) {
  const std::vector<float> v = {0.0f, 0.25f, 1.0f, 0.75f};
  EXPECT_EQ(normalize_for_display(pixel_map(Tensor3(2, 2, 1, v))).image.vec(), v);
}

TEST(Normalize, ConstantMapIsDegenerate) {
  const DisplayMap d = normalize_for_display(pixel_map(Tensor3(2, 2, 1, 7.0f)));
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.image.max(), 0.0f);
}

}  // namespace
}  // namespace dfr
