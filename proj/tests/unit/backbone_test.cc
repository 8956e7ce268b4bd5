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

#include <numeric>

#include "dfr/backbone.hpp"
#include "dfr/error.hpp"
#include "dfr/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace dfr {
namespace {

std::vector<int> sizes_of(const std::vector<ReceptiveField>& rf) {
  std::vector<int> out;
  for (const auto& r : rf) out.push_back(r.size);
  return out;
}

ConvParams random_params(Rng& rng, const LayerSpec& l) {
  ConvParams p;
  p.weight.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel);
  p.bias.resize(l.out_channels);
  for (float& w : p.weight) w = static_cast<float>(rng.uniform(-1, 1));
  for (float& b : p.bias) b = static_cast<float>(rng.uniform(-1, 1));
  return p;
}

Backbone single_conv(int in, int out, int k, int pad, const std::vector<float>& weight, std::vector<float> bias) {
  return Backbone({LayerSpec::conv("c", in, out, k, pad), LayerSpec::relu()}, {ConvParams{weight, std::move(bias)}}, {});
}

TEST(ReceptiveField, Vgg19MatchesPublishedTable) {
  EXPECT_EQ(sizes_of(compute_receptive_fields(vgg19_topology())),
            (std::vector<int>{3, 5, 10, 14, 24, 32, 40, 48, 68, 84, 100, 116, 156, 188, 220, 252}));
}

TEST(ReceptiveField, Vgg19SizesStrictlyIncrease) {
  const auto rf = compute_receptive_fields(vgg19_topology());
  for (std::size_t i = 1; i < rf.size(); ++i) EXPECT_GT(rf[i].size, rf[i - 1].size);
}

TEST(ReceptiveField, SingleConv) {
  const LayerSpec l[] = {LayerSpec::conv("c", 1, 1)};
  const auto rf = compute_receptive_fields(l);
  ASSERT_EQ(rf.size(), 1u);
  EXPECT_EQ(rf[0].size, 3);
  EXPECT_EQ(rf[0].jump, 1);
}

TEST(ReceptiveField, PoolBetweenConvsDoublesJump) {
  // Recurrence: 3, then 3 + 1 (pool) = 4 with jump 2, then 4 + 2*2 = 8.
  const LayerSpec l[] = {LayerSpec::conv("a", 1, 1), LayerSpec::maxpool(2, 2), LayerSpec::conv("b", 1, 1)};
  const auto rf = compute_receptive_fields(l);
  ASSERT_EQ(rf.size(), 2u);
  EXPECT_EQ(rf[0].size, 3);
  EXPECT_EQ(rf[1].size, 8);
  EXPECT_EQ(rf[1].jump, 2);
}

TEST(ReceptiveField, TinyBackbone) {
  EXPECT_EQ(sizes_of(compute_receptive_fields(make_tiny_backbone(0).layers())), (std::vector<int>{3, 5, 10, 14}));
}

TEST(Backbone, IdentityKernelGivesRelu) {
  const Backbone b = single_conv(1, 1, 1, 0, {1.0f}, {0.0f});
  Rng rng(21);
  const Tensor3 t = oracle::random_tensor(rng, 5, 4, 1);
  const auto taps = b.extract_features(t);
  ASSERT_EQ(taps.size(), 1u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(taps[0].data()[i], std::max(0.0f, t.data()[i]));
}

TEST(Backbone, OnesKernelZeroPaddingBorders) {
  const float v = 0.5f;
  const Backbone b = single_conv(1, 1, 3, 1, std::vector<float>(9, 1.0f), {0.0f});
  const Tensor3 out = b.extract_features(Tensor3(5, 5, 1, v))[0];
  EXPECT_FLOAT_EQ(out.at(2, 2, 0), 9 * v);
  EXPECT_FLOAT_EQ(out.at(0, 0, 0), 4 * v);
  EXPECT_FLOAT_EQ(out.at(4, 4, 0), 4 * v);
  EXPECT_FLOAT_EQ(out.at(0, 2, 0), 6 * v);
}

TEST(Backbone, OnesKernelReflectPaddingIsUniform) {
  const float v = 0.5f;
  const Backbone b =
      single_conv(1, 1, 3, 1, std::vector<float>(9, 1.0f), {0.0f}).with_padding(PaddingMode::kReflect);
  const Tensor3 out = b.extract_features(Tensor3(5, 5, 1, v))[0];
  for (float x : out.data()) EXPECT_FLOAT_EQ(x, 9 * v);
}

TEST(Backbone, ConvMatchesOracle) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = rng.range(1, 3);
    LayerSpec l = LayerSpec::conv("c", rng.range(1, 4), rng.range(1, 5), k, rng.range(0, k - 1));
    l.stride = rng.range(1, 2);
    l.padding_mode = rng.uniform() < 0.5 ? PaddingMode::kZero : PaddingMode::kReflect;
    const ConvParams p = random_params(rng, l);
    const Tensor3 x = oracle::random_tensor(rng, rng.range(k, 8), rng.range(k, 8), l.in_channels);
    EXPECT_LT(oracle::max_rel_err(conv2d(x, l, p), oracle::conv(x, l, p)), 1e-4) << "trial " << trial;
  }
}

TEST(Backbone, TapsAreNonnegative) {
  Rng rng(23);
  const Backbone b = make_tiny_backbone(5);
  const auto taps = b.extract_features(oracle::random_tensor(rng, 16, 16, 3, 0, 1));
  ASSERT_EQ(taps.size(), 4u);
  for (const auto& t : taps) EXPECT_GE(t.min(), 0.0f);
  EXPECT_EQ(taps[0].height(), 16);
  EXPECT_EQ(taps[2].height(), 8);
}

TEST(Backbone, MaxTapsStopsEarly) {
  Rng rng(24);
  const Backbone b = make_tiny_backbone(5);
  const Tensor3 img = oracle::random_tensor(rng, 16, 16, 3, 0, 1);
  const auto all = b.extract_features(img);
  const auto two = b.extract_features(img, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0], all[0]);
  EXPECT_EQ(two[1], all[1]);
}

TEST(Backbone, PaddingModesAgreeAwayFromBorder) {
  Rng rng(25);
  const Backbone zero = make_tiny_backbone(9);
  const Backbone refl = zero.with_padding(PaddingMode::kReflect);
  const int side = 40;
  const Tensor3 img = oracle::random_tensor(rng, side, side, 3, 0, 1);
  const auto a = zero.extract_features(img);
  const auto b = refl.extract_features(img);
  const auto rf = compute_receptive_fields(zero.layers());
  // Offset of each tap's receptive field start: sum of pad * jump so far.
  std::vector<int> offset;
  int off = 0, jump = 1;
  for (const auto& l : zero.layers()) {
    if (l.kind == LayerKind::kConv) {
      off += l.pad * jump;
      jump *= l.stride;
      if (l.tap) offset.push_back(off);
    } else if (l.kind == LayerKind::kMaxPool) {
      jump *= l.stride;
    }
  }
  int interior = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (int i = 0; i < a[t].height(); ++i)
      for (int j = 0; j < a[t].width(); ++j) {
        const int y0 = i * rf[t].jump - offset[t], x0 = j * rf[t].jump - offset[t];
        if (y0 < 0 || x0 < 0 || y0 + rf[t].size > side || x0 + rf[t].size > side) continue;
        ++interior;
        for (int c = 0; c < a[t].channels(); ++c) ASSERT_EQ(a[t].at(i, j, c), b[t].at(i, j, c)) << t << " " << i << " " << j;
      }
  }
  EXPECT_GT(interior, 100);
}

TEST(Backbone, TinyIsDeterministicWithFortyEightChannels) {
  const Backbone a = make_tiny_backbone(3), b = make_tiny_backbone(3), c = make_tiny_backbone(4);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  const auto& ch = a.tap_channels();
  EXPECT_EQ(std::accumulate(ch.begin(), ch.end(), 0), 48);
}

TEST(Backbone, SaveLoadRoundTripIsBitwise) {
  testutil::TempDir dir;
  const Backbone a = make_tiny_backbone(8);
  save_backbone(dir.file("b.dfrc"), a);
  EXPECT_EQ(load_backbone(dir.file("b.dfrc")), a);
  const Backbone r = load_backbone(dir.file("b.dfrc"), PaddingMode::kReflect);
  EXPECT_EQ(r.padding_mode(), PaddingMode::kReflect);
  EXPECT_EQ(r.conv_params(), a.conv_params());
}

TEST(Backbone, TruncatedCheckpointIsFormatError) {
  const auto bytes = encode_dfrc(make_tiny_backbone(8).to_dfrc());
  EXPECT_THROW(Backbone::from_dfrc(decode_dfrc(std::span(bytes).first(bytes.size() - 10))), FormatError);
}

TEST(Backbone, WeightShapeErrorNamesLayer) {
  try {
    Backbone({LayerSpec::conv("conv_x", 3, 4), LayerSpec::relu()}, {ConvParams{std::vector<float>(5), {0, 0, 0, 0}}}, {});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("conv_x"), std::string::npos);
  }
}

TEST(Backbone, ChannelChainingChecked) {
  Rng rng(26);
  const LayerSpec a = LayerSpec::conv("a", 3, 4), b = LayerSpec::conv("b", 5, 2);
  EXPECT_THROW(Backbone({a, LayerSpec::relu(), b, LayerSpec::relu()}, {random_params(rng, a), random_params(rng, b)}, {}),
               ValidationError);
}

TEST(Backbone, TapWithoutReluRejected) {
  Rng rng(27);
  const LayerSpec a = LayerSpec::conv("a", 1, 1);
  EXPECT_THROW(Backbone({a}, {random_params(rng, a)}, {}), ValidationError);
}

TEST(Backbone, BadPaddingNameIsConfigError) { EXPECT_THROW(parse_padding_mode("mirror"), ConfigError); }

TEST(BatchNorm, IdentityFoldLeavesWeights) {
  Rng rng(28);
  const LayerSpec l = LayerSpec::conv("c", 2, 3);
  const ConvParams p = random_params(rng, l);
  BatchNormParams bn;
  bn.eps = 1e-5f;
  bn.gamma.assign(3, 1.0f);
  bn.beta.assign(3, 0.0f);
  bn.mean.assign(3, 0.0f);
  bn.var.assign(3, 1.0f - bn.eps);
  const ConvParams f = fold_batch_norm(p, bn, 2, 3);
  for (std::size_t i = 0; i < p.weight.size(); ++i) EXPECT_FLOAT_EQ(f.weight[i], p.weight[i]);
  for (std::size_t i = 0; i < p.bias.size(); ++i) EXPECT_FLOAT_EQ(f.bias[i], p.bias[i]);
}

TEST(BatchNorm, FoldEqualsConvThenNormalize) {
  Rng rng(29);
  const LayerSpec l = LayerSpec::conv("c", 2, 3);
  const ConvParams p = random_params(rng, l);
  BatchNormParams bn;
  for (int o = 0; o < 3; ++o) {
    bn.gamma.push_back(static_cast<float>(rng.uniform(0.5, 2)));
    bn.beta.push_back(static_cast<float>(rng.uniform(-1, 1)));
    bn.mean.push_back(static_cast<float>(rng.uniform(-1, 1)));
    bn.var.push_back(static_cast<float>(rng.uniform(0.5, 2)));
  }
  const Tensor3 x = oracle::random_tensor(rng, 6, 6, 2);
  const Tensor3 raw = conv2d(x, l, p);
  const Tensor3 folded = conv2d(x, l, fold_batch_norm(p, bn, 2, 3));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int o = 0; o < 3; ++o) {
        const double want = (raw.at(i, j, o) - bn.mean[o]) / std::sqrt(bn.var[o] + bn.eps) * bn.gamma[o] + bn.beta[o];
        EXPECT_NEAR(folded.at(i, j, o), want, 1e-5);
      }
}

TEST(Backbone, CheckpointWithBatchNormIsFoldedAtLoad) {
  const Backbone plain = make_tiny_backbone(2);
  DfrcFile f = plain.to_dfrc();
  // Attach identity batch-norm to conv1.
  std::string topo = f.text("topology");
  const auto pos = topo.find("name=conv1");
  const auto eol = topo.find('\n', pos);
  topo.insert(eol, " bn_eps=0.001");
  DfrcFile g;
  for (const auto& e : f.entries()) {
    if (e.name == "topology") {
      g.add_text("topology", topo);
    } else if (e.dtype == DType::kText) {
      g.add_text(e.name, e.text);
    } else {
      g.add_f32(e.name, e.dims, e.values);
    }
  }
  g.add_f32("conv1.bn.gamma", {8}, std::vector<float>(8, 2.0f));
  g.add_f32("conv1.bn.beta", {8}, std::vector<float>(8, 0.0f));
  g.add_f32("conv1.bn.mean", {8}, std::vector<float>(8, 0.0f));
  g.add_f32("conv1.bn.var", {8}, std::vector<float>(8, 1.0f - 0.001f));
  const Backbone bn = Backbone::from_dfrc(g);
  for (std::size_t i = 0; i < plain.conv_params()[0].weight.size(); ++i) {
    EXPECT_NEAR(bn.conv_params()[0].weight[i], 2.0f * plain.conv_params()[0].weight[i], 1e-5);
  }
  EXPECT_EQ(bn.conv_params()[1], plain.conv_params()[1]);
}

}  // namespace
}  // namespace dfr
