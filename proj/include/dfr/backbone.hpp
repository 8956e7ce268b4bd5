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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfr/dfrc.hpp"
#include "dfr/tensor.hpp"

namespace dfr {

enum class LayerKind { kConv, kRelu, kMaxPool };
enum class PaddingMode { kZero, kReflect };

const char* to_string(PaddingMode mode);
PaddingMode parse_padding_mode(const std::string& text);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::string name;
  int kernel = 1;
  int stride = 1;
  int in_channels = 0;   // conv only
  int out_channels = 0;  // conv only
  int pad = 0;
  PaddingMode padding_mode = PaddingMode::kZero;
  // Conv only: export the output of the ReLU that immediately follows.
  bool tap = false;

  static LayerSpec conv(std::string name, int in, int out, int kernel = 3, int pad = 1, bool tap = true);
  static LayerSpec relu();
  static LayerSpec maxpool(int kernel = 2, int stride = 2);
};

// Receptive field of one tap, in input pixels. `jump` is the input-space
// distance between neighbouring cells of that tap's output.
struct ReceptiveField {
  int layer_index = 0;  // 1-based tap number
  int size = 0;
  int jump = 0;

  friend bool operator==(const ReceptiveField&, const ReceptiveField&) = default;
};

// size' = size + (kernel - 1) * jump, jump' = jump * stride over every conv
// and pool layer, starting from size = jump = 1. One record per tap.
std::vector<ReceptiveField> compute_receptive_fields(std::span<const LayerSpec> layers);

// The 16-conv VGG19 feature stack (dense layers stripped), every conv tapped.
std::vector<LayerSpec> vgg19_topology();

// Convolution parameters in out x in x k x k order.
struct ConvParams {
  std::vector<float> weight;
  std::vector<float> bias;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

// Inference-time batch-norm statistics attached to a conv layer.
struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
  float eps = 1e-5f;
};

// w' = w * g / sqrt(var + eps), b' = (b - mean) * g / sqrt(var + eps) + beta.
ConvParams fold_batch_norm(const ConvParams& conv, const BatchNormParams& bn, int in_channels, int kernel);

struct InputNormalization {
  std::vector<float> mean;
  std::vector<float> std;
};

class Backbone {
 public:
  // `conv_params` holds one entry per conv layer, in layer order. Throws
  // ValidationError naming the offending layer.
  Backbone(std::vector<LayerSpec> layers, std::vector<ConvParams> conv_params, InputNormalization norm);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ConvParams>& conv_params() const { return conv_params_; }
  const InputNormalization& normalization() const { return norm_; }
  int tap_count() const { return static_cast<int>(tap_channels_.size()); }
  // Channel count c_l of each tap, in tap order.
  const std::vector<int>& tap_channels() const { return tap_channels_; }
  int input_channels() const;
  PaddingMode padding_mode() const;

  // Same weights with every conv layer switched to `mode`.
  Backbone with_padding(PaddingMode mode) const;

  // Normalizes the image with the stored per-channel statistics and runs the
  // stack, returning the L post-ReLU tap outputs.
  // Stops after max_taps taps when max_taps > 0.
  std::vector<Tensor3> extract_features(const Tensor3& image, int max_taps = 0) const;

  DfrcFile to_dfrc() const;
  static Backbone from_dfrc(const DfrcFile& file);

  friend bool operator==(const Backbone& a, const Backbone& b) {
    return a.conv_params_ == b.conv_params_ && a.norm_.mean == b.norm_.mean && a.norm_.std == b.norm_.std &&
           a.topology_text() == b.topology_text();
  }

  std::string topology_text() const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<ConvParams> conv_params_;
  InputNormalization norm_;
  std::vector<int> tap_channels_;
  // Per conv layer: weights repacked to (k*k*in) x out for patch GEMM.
  std::vector<std::vector<float>> packed_;
};

// Single-layer forward pieces, exposed for tests and tools.
Tensor3 conv2d(const Tensor3& input, const LayerSpec& layer, const ConvParams& params);
Tensor3 maxpool2d(const Tensor3& input, int kernel, int stride);

Backbone load_backbone(const std::string& path, std::optional<PaddingMode> padding = std::nullopt);
void save_backbone(const std::string& path, const Backbone& backbone);

// 4 conv layers (8, 8, 16, 16 channels) with a 2x2 max-pool after the second,
// all tapped, seeded He-uniform weights. Deterministic per seed.
Backbone make_tiny_backbone(std::uint64_t seed);

}  // namespace dfr
