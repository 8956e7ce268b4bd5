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

#include "dfr/backbone.hpp"
#include "dfr/error.hpp"
#include "dfr/regional.hpp"
#include "dfr/rng.hpp"
#include "oracles.hpp"

namespace dfr {
namespace {

std::vector<int> vgg_tap_channels() {
  std::vector<int> ch;
  for (const auto& l : vgg19_topology())
    if (l.kind == LayerKind::kConv && l.tap) ch.push_back(l.out_channels);
  return ch;
}

// Per-scale oracle: resize, window mean, then concatenate by hand.
Tensor3 oracle_regional(const std::vector<Tensor3>& f, ScaleRange r, int side, int k, int s) {
  std::vector<Tensor3> parts;
  for (int l = r.lo; l <= r.hi; ++l) {
    parts.push_back(oracle::mean_filter(oracle::resize_nearest(f[l - 1], side, side), k, s));
  }
  int c_o = 0;
  for (const auto& p : parts) c_o += p.channels();
  Tensor3 out(parts[0].height(), parts[0].width(), c_o);
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) {
      int c = 0;
      for (const auto& p : parts)
        for (int pc = 0; pc < p.channels(); ++pc) out.at(i, j, c++) = p.at(i, j, pc);
    }
  return out;
}

TEST(ScaleRange, ParseAndFormat) {
  EXPECT_EQ(ScaleRange::parse("1:12"), (ScaleRange{1, 12}));
  EXPECT_EQ(ScaleRange::parse("3"), (ScaleRange{3, 3}));
  EXPECT_EQ((ScaleRange{2, 5}).to_string(), "2:5");
  EXPECT_THROW(ScaleRange::parse("4:2"), ConfigError);
  EXPECT_THROW(ScaleRange::parse("0:3"), ConfigError);
  EXPECT_THROW(ScaleRange::parse("a:b"), ConfigError);
  EXPECT_THROW(ScaleRange::parse("1,3"), ConfigError);
}

TEST(ScaleRange, ValidateAgainstTapCount) {
  EXPECT_NO_THROW((ScaleRange{1, 4}).validate(4));
  EXPECT_THROW((ScaleRange{1, 5}).validate(4), ConfigError);
}

TEST(FusedChannels, Vgg19Ranges) {
  const auto ch = vgg_tap_channels();
  EXPECT_EQ(fused_channels(ch, {1, 16}), 5504);
  EXPECT_EQ(fused_channels(ch, {1, 12}), 3456);
}

TEST(FusedChannels, TinyRanges) {
  const auto ch = make_tiny_backbone(0).tap_channels();
  EXPECT_EQ(fused_channels(ch, {1, 2}), 16);
  EXPECT_EQ(fused_channels(ch, {1, 4}), 48);
}

TEST(Regional, IdentityPath) {
  Rng rng(31);
  const std::vector<Tensor3> f = {oracle::random_tensor(rng, 4, 4, 2), oracle::random_tensor(rng, 6, 6, 3)};
  const RegionalFeatureMap r = generate_regional_features(f, {2, 2}, 6, 6, 1, 1);
  EXPECT_EQ(r.map, f[1]);
}

TEST(Regional, OffsetsAndShape) {
  Rng rng(32);
  const std::vector<Tensor3> f = {oracle::random_tensor(rng, 16, 16, 2), oracle::random_tensor(rng, 8, 8, 3),
                                  oracle::random_tensor(rng, 4, 4, 5)};
  const RegionalFeatureMap r = generate_regional_features(f, {1, 3}, 16, 16, 4, 4);
  EXPECT_EQ(r.c_o(), 10);
  EXPECT_EQ(r.channel_offsets, (std::vector<int>{0, 2, 5, 10}));
  EXPECT_EQ(r.region_h * r.map.height(), 16);
  EXPECT_EQ(r.region_w * r.map.width(), 16);
}

TEST(Regional, IncompatibleAggregationIsShapeError) {
  const std::vector<Tensor3> f = {Tensor3(10, 10, 1)};
  EXPECT_THROW(generate_regional_features(f, {1, 1}, 10, 10, 4, 4), ShapeError);
}

TEST(Regional, FeatureAtConstantAndSingleChannel) {
  const std::vector<Tensor3> f = {Tensor3(4, 4, 3, 0.25f)};
  const RegionalFeatureMap r = generate_regional_features(f, {1, 1}, 8, 8, 2, 2);
  for (float v : feature_at(r, 1, 2)) EXPECT_FLOAT_EQ(v, 0.25f);
  Rng rng(33);
  const std::vector<Tensor3> g = {oracle::random_tensor(rng, 4, 4, 1)};
  const RegionalFeatureMap s = generate_regional_features(g, {1, 1}, 4, 4, 1, 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(feature_at(s, i, j)[0], g[0].at(i, j, 0));
  EXPECT_THROW(feature_at(s, 4, 0), IndexError);
}

TEST(Regional, MatchesPerScaleOracleWithTinyBackbone) {
  Rng rng(34);
  const Backbone b = make_tiny_backbone(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = b.extract_features(oracle::random_tensor(rng, 32, 32, 3, 0, 1));
    const int lo = rng.range(1, 4), hi = rng.range(lo, 4);
    const int k = 1 << rng.range(0, 2);
    const RegionalFeatureMap r = generate_regional_features(f, {lo, hi}, 32, 32, k, k);
    EXPECT_LT(oracle::max_rel_err(r.map, oracle_regional(f, {lo, hi}, 32, k, k)), 1e-5);
  }
}

TEST(Regional, MatchesOracleOnRandomPyramids) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const int side = rng.range(4, 16);
    std::vector<Tensor3> f;
    for (int l = 0; l < 3; ++l) f.push_back(oracle::random_tensor(rng, rng.range(1, side), rng.range(1, side), rng.range(1, 3)));
    const int k = rng.range(1, 3), s = rng.range(1, 3);
    const int img = k + s * ((side - k) / s);
    const int lo = rng.range(1, 3), hi = rng.range(lo, 3);
    const RegionalFeatureMap r = generate_regional_features(f, {lo, hi}, img, img, k, s);
    EXPECT_LT(oracle::max_rel_err(r.map, oracle_regional(f, {lo, hi}, img, k, s)), 1e-5);
  }
}

TEST(Regional, Deterministic) {
  Rng rng(36);
  const std::vector<Tensor3> f = {oracle::random_tensor(rng, 8, 8, 4), oracle::random_tensor(rng, 4, 4, 4)};
  EXPECT_EQ(generate_regional_features(f, {1, 2}, 16, 16, 4, 4).map,
            generate_regional_features(f, {1, 2}, 16, 16, 4, 4).map);
}

TEST(Regional, DfrcRoundTrip) {
  Rng rng(37);
  const std::vector<Tensor3> f = {oracle::random_tensor(rng, 8, 8, 2), oracle::random_tensor(rng, 4, 4, 3)};
  const RegionalFeatureMap r = generate_regional_features(f, {1, 2}, 8, 8, 2, 2);
  const RegionalFeatureMap back = regional_from_dfrc(decode_dfrc(encode_dfrc(regional_to_dfrc(r))));
  EXPECT_EQ(back.map, r.map);
  EXPECT_EQ(back.channel_offsets, r.channel_offsets);
  EXPECT_EQ(back.scale_range, r.scale_range);
  EXPECT_EQ(back.region_h, r.region_h);
}

}  // namespace
}  // namespace dfr
