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

#include <cmath>

#include "dfr/error.hpp"
#include "dfr/metrics.hpp"
#include "dfr/rng.hpp"
#include "oracles.hpp"

namespace dfr {
namespace {

Tensor3 grid(int h, int w, std::vector<float> v) { return Tensor3(h, w, 1, std::move(v)); }

// Random images with a few rectangular regions and scores that are noisy but
// higher inside regions.
std::vector<EvalImage> random_eval_set(Rng& rng, int n, int side, int levels = 0) {
  std::vector<EvalImage> set;
  for (int k = 0; k < n; ++k) {
    EvalImage im{Tensor3(side, side, 1), Tensor3(side, side, 1)};
    const int blobs = rng.range(k == 0 ? 1 : 0, 2);
    for (int b = 0; b < blobs; ++b) {
      const int y = rng.range(0, side - 2), x = rng.range(0, side - 2);
      const int h = rng.range(1, std::max(1, side / 3)), w = rng.range(1, std::max(1, side / 3));
      for (int i = y; i < std::min(side, y + h); ++i)
        for (int j = x; j < std::min(side, x + w); ++j) im.mask.at(i, j, 0) = 1.0f;
    }
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        double s = rng.uniform() + 0.7 * im.mask.at(i, j, 0);
        if (levels > 0) s = std::floor(s * levels) / levels;
        im.scores.at(i, j, 0) = static_cast<float>(s);
      }
    set.push_back(std::move(im));
  }
  return set;
}

TEST(RocAuc, HandExample) {
  EXPECT_DOUBLE_EQ(roc_auc(LabeledScores{{0.1f, 0.4f, 0.35f, 0.8f}, {0, 0, 1, 1}}), 0.75);
}

TEST(RocAuc, PerfectSeparationAndTies) {
  EXPECT_DOUBLE_EQ(roc_auc(LabeledScores{{0.1f, 0.2f, 0.9f, 0.8f}, {0, 0, 1, 1}}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(LabeledScores{{0.5f, 0.5f, 0.5f, 0.5f}, {0, 1, 0, 1}}), 0.5);
}

TEST(RocAuc, SingleClassIsMetricError) {
  EXPECT_THROW(roc_auc(LabeledScores{{0.1f, 0.2f}, {1, 1}}), MetricError);
  EXPECT_THROW(roc_auc(LabeledScores{{0.1f}, {0}}), MetricError);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    LabeledScores d;
    const int n = rng.range(2, 200);
    for (int i = 0; i < n; ++i) {
      d.labels.push_back(i == 0 ? 0 : (i == 1 ? 1 : static_cast<std::uint8_t>(rng.below(2))));
      d.scores.push_back(static_cast<float>(std::floor(rng.uniform() * 20) / 20));  // plenty of ties
    }
    EXPECT_NEAR(roc_auc(d), oracle::pairwise_auc(d.scores, d.labels), 1e-12);
  }
}

TEST(RocAuc, MonotoneTransformAndNegation) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    LabeledScores d, t, neg;
    for (int i = 0; i < 100; ++i) {
      const float s = static_cast<float>(rng.uniform(-1, 1));
      const std::uint8_t y = static_cast<std::uint8_t>(i % 3 == 0);
      d.scores.push_back(s);
      t.scores.push_back(std::exp(3.0f * s));
      neg.scores.push_back(-s);
      d.labels.push_back(y);
    }
    t.labels = neg.labels = d.labels;
    EXPECT_DOUBLE_EQ(roc_auc(d), roc_auc(t));
    EXPECT_NEAR(roc_auc(d) + roc_auc(neg), 1.0, 1e-12);
  }
}

TEST(LabelRegions, HandExamples) {
  EXPECT_EQ(label_regions(Tensor3(3, 3, 1)).count, 0);
  EXPECT_EQ(label_regions(grid(2, 2, {1, 0, 0, 1})).count, 1);
  const RegionLabels two = label_regions(grid(3, 3, {1, 1, 1, 0, 0, 0, 1, 0, 1}));
  EXPECT_EQ(two.count, 3);
  const RegionLabels sep = label_regions(grid(3, 2, {1, 1, 0, 0, 1, 1}));
  EXPECT_EQ(sep.count, 2);
  EXPECT_EQ(sep.at(0, 0), sep.at(0, 1));
  EXPECT_NE(sep.at(0, 0), sep.at(2, 0));
  EXPECT_EQ(sep.at(1, 0), 0);
}

TEST(LabelRegions, MatchesFloodFillOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = rng.range(1, 12), w = rng.range(1, 12);
    Tensor3 m(h, w, 1);
    for (float& v : m.data()) v = rng.uniform() < 0.35 ? 1.0f : 0.0f;
    const RegionLabels r = label_regions(m);
    const auto want = oracle::regions(m);
    ASSERT_EQ(r.count, static_cast<int>(want.size()));
    for (const auto& comp : want) {
      const int id = r.at(comp[0].first, comp[0].second);
      EXPECT_GE(id, 1);
      for (auto [y, x] : comp) EXPECT_EQ(r.at(y, x), id);
    }
  }
}

TEST(ProCurve, PerfectDetectorReachesOneAtZeroFpr) {
  const Tensor3 mask = grid(3, 3, {0, 1, 0, 0, 1, 1, 0, 0, 0});
  const std::vector<EvalImage> set = {{mask, mask}};
  const auto curve = pro_curve(set);
  ASSERT_GE(curve.size(), 2u);
  EXPECT_EQ(curve[0].fpr, 0.0);
  EXPECT_EQ(curve[0].mean_pro, 0.0);
  EXPECT_EQ(curve[1].fpr, 0.0);
  EXPECT_EQ(curve[1].mean_pro, 1.0);
  EXPECT_DOUBLE_EQ(pro_auc(curve), 1.0);
}

TEST(ProCurve, RegionsWeighEqually) {
  // A 2-pixel region fully detected and an 8-pixel region half detected.
  Tensor3 mask(4, 6, 1), scores(4, 6, 1);
  mask.at(0, 0, 0) = mask.at(0, 1, 0) = 1.0f;
  scores.at(0, 0, 0) = scores.at(0, 1, 0) = 1.0f;
  for (int i = 2; i < 4; ++i)
    for (int j = 2; j < 6; ++j) {
      mask.at(i, j, 0) = 1.0f;
      scores.at(i, j, 0) = j < 4 ? 1.0f : 0.5f;
    }
  const std::vector<EvalImage> set = {{scores, mask}};
  const auto curve = pro_curve(set);
  ASSERT_GE(curve.size(), 2u);
  EXPECT_EQ(curve[1].fpr, 0.0);
  EXPECT_DOUBLE_EQ(curve[1].mean_pro, 0.75);
}

TEST(ProCurve, MatchesExhaustiveOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_eval_set(rng, rng.range(1, 3), 6, trial % 2 ? 8 : 0);
    const auto got = pro_curve(set);
    const auto want = oracle::pro_curve(set);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_NEAR(got[k].fpr, want[k].fpr, 1e-12);
      EXPECT_NEAR(got[k].mean_pro, want[k].mean_pro, 1e-12);
    }
    EXPECT_NEAR(pro_auc(got), oracle::normalized_area(want, 0.3), 1e-9);
  }
}

TEST(ProCurve, MonotoneAndBounded) {
  Rng rng(5);
  const auto curve = pro_curve(random_eval_set(rng, 4, 16));
  for (std::size_t k = 1; k < curve.size(); ++k) {
    EXPECT_GE(curve[k].fpr, curve[k - 1].fpr);
    EXPECT_GE(curve[k].mean_pro, curve[k - 1].mean_pro);
  }
  EXPECT_DOUBLE_EQ(curve.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(curve.back().mean_pro, 1.0);
}

TEST(ProCurve, SubsampledCurveMatchesExact) {
  Rng rng(6);
  const auto set = random_eval_set(rng, 10, 32);
  const double exact = pro_auc(pro_curve(set));
  const double sub = pro_auc(pro_curve(set, 5000));
  EXPECT_NEAR(sub, exact, 1e-3);
  EXPECT_LE(pro_curve(set, 100).size(), 102u);
}

TEST(ProCurve, DuplicatingImagesChangesNothing) {
  Rng rng(7);
  const auto set = random_eval_set(rng, 3, 10);
  auto doubled = set;
  doubled.insert(doubled.end(), set.begin(), set.end());
  const auto a = pro_curve(set), b = pro_curve(doubled);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a[k].fpr, b[k].fpr, 1e-12);
    EXPECT_NEAR(a[k].mean_pro, b[k].mean_pro, 1e-12);
  }
  EXPECT_NEAR(pro_auc(a), pro_auc(b), 1e-12);

  auto flatten = [](const std::vector<EvalImage>& images) {
    LabeledScores d;
    for (const auto& im : images)
      for (int p = 0; p < im.scores.cells(); ++p) {
        d.scores.push_back(im.scores.data()[p]);
        d.labels.push_back(im.mask.data()[p] > 0.5f);
      }
    return d;
  };
  EXPECT_NEAR(roc_auc(flatten(set)), roc_auc(flatten(doubled)), 1e-12);
}

TEST(ProCurve, SinglePixelRegionIsTruePositiveRate) {
  Rng rng(8);
  Tensor3 mask(5, 5, 1);
  mask.at(2, 2, 0) = 1.0f;
  const EvalImage im{oracle::random_tensor(rng, 5, 5, 1, 0, 1), mask};
  const std::vector<EvalImage> set = {im};
  const float s = im.scores.at(2, 2, 0);
  for (const auto& p : pro_curve(set)) {
    int fp = 0;
    for (int c = 0; c < 25; ++c) fp += (c != 12 && im.scores.data()[c] >= s) ? 1 : 0;
    // Points strictly before the region pixel is swept have PRO 0, the rest 1.
    EXPECT_TRUE(p.mean_pro == 0.0 || p.mean_pro == 1.0);
    if (p.mean_pro == 1.0) EXPECT_GE(p.fpr, fp / 24.0 - 1e-12);
  }
}

TEST(ProCurve, NoRegionsIsMetricError) {
  const std::vector<EvalImage> set = {{Tensor3(3, 3, 1, 0.5f), Tensor3(3, 3, 1)}};
  EXPECT_THROW(pro_curve(set), MetricError);
}

TEST(ProAuc, ConstantOneAndRamp) {
  EXPECT_DOUBLE_EQ(pro_auc(std::vector<ProCurvePoint>{{0.0, 1.0}, {1.0, 1.0}}), 1.0);
  EXPECT_NEAR(pro_auc(std::vector<ProCurvePoint>{{0.0, 0.0}, {0.3, 1.0}, {1.0, 1.0}}), 0.5, 1e-12);
  // Interpolated at the cap: the ramp 0 -> 1 over [0, 0.6] is 0.5 at 0.3.
  EXPECT_NEAR(pro_auc(std::vector<ProCurvePoint>{{0.0, 0.0}, {0.6, 1.0}}), 0.25, 1e-12);
}

TEST(ProAuc, AlwaysInUnitInterval) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = pro_auc(pro_curve(random_eval_set(rng, 2, 8)), rng.uniform(0.05, 1.0));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

}  // namespace
}  // namespace dfr
