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

#include "dfr/backbone.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "dfr/error.hpp"
#include "dfr/rng.hpp"

namespace dfr {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr const char* kTopologyEntry = "topology";
constexpr const char* kNormMeanEntry = "input.mean";
constexpr const char* kNormStdEntry = "input.std";

std::string layer_label(const LayerSpec& l, std::size_t index) {
  return l.name.empty() ? "layer " + std::to_string(index) : "layer '" + l.name + "'";
}

// Maps a padded coordinate back into [0, n). Returns -1 for zero padding.
int source_index(int i, int n, PaddingMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PaddingMode::kZero) return -1;
  if (n == 1) return 0;
  // Reflection without repeating the edge (pad < n).
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return std::clamp(i, 0, n - 1);
}

std::vector<float> pack_weights(const LayerSpec& l, const ConvParams& p) {
  const int k = l.kernel, cin = l.in_channels, cout = l.out_channels;
  std::vector<float> packed(static_cast<std::size_t>(k) * k * cin * cout);
  // Row index (di * k + dj) * cin + ch matches the patch gather order.
  for (int o = 0; o < cout; ++o)
    for (int ch = 0; ch < cin; ++ch)
      for (int di = 0; di < k; ++di)
        for (int dj = 0; dj < k; ++dj) {
          const std::size_t src = ((static_cast<std::size_t>(o) * cin + ch) * k + di) * k + dj;
          const std::size_t row = (static_cast<std::size_t>(di) * k + dj) * cin + ch;
          packed[row * cout + o] = p.weight[src];
        }
  return packed;
}

Tensor3 conv_packed(const Tensor3& in, const LayerSpec& l, std::span<const float> packed, std::span<const float> bias) {
  const int k = l.kernel, s = l.stride, pad = l.pad;
  const int cin = in.channels(), cout = l.out_channels;
  if (cin != l.in_channels) {
    throw ShapeError("conv " + l.name + ": input has " + std::to_string(cin) + " channels, expected " +
                     std::to_string(l.in_channels));
  }
  if (l.padding_mode == PaddingMode::kReflect && (pad >= in.height() || pad >= in.width()) &&
      !(in.height() == 1 && in.width() == 1)) {
    throw ShapeError("conv " + l.name + ": reflect padding " + std::to_string(pad) + " needs input larger than pad");
  }
  const int oh = (in.height() + 2 * pad - k) / s + 1;
  const int ow = (in.width() + 2 * pad - k) / s + 1;
  if (in.height() + 2 * pad < k || in.width() + 2 * pad < k || oh < 1 || ow < 1) {
    throw ShapeError("conv " + l.name + ": input " + std::to_string(in.height()) + "x" + std::to_string(in.width()) +
                     " too small for kernel " + std::to_string(k));
  }
  Tensor3 out(oh, ow, cout);
  const int patch = k * k * cin;
  Eigen::Map<const RowMatrix> weights(packed.data(), patch, cout);
  Eigen::Map<const Eigen::RowVectorXf> b(bias.data(), cout);

  // Gather patches for a block of output rows at a time to bound memory.
  const int rows_per_block = std::max(1, static_cast<int>((1 << 22) / (static_cast<long long>(ow) * patch)));
  RowMatrix patches;
  for (int r0 = 0; r0 < oh; r0 += rows_per_block) {
    const int r1 = std::min(oh, r0 + rows_per_block);
    const int n = (r1 - r0) * ow;
    patches.resize(n, patch);
    for (int i = r0; i < r1; ++i) {
      for (int j = 0; j < ow; ++j) {
        float* dst = patches.row((i - r0) * ow + j).data();
        for (int di = 0; di < k; ++di) {
          const int si = source_index(i * s - pad + di, in.height(), l.padding_mode);
          for (int dj = 0; dj < k; ++dj) {
            const int sj = source_index(j * s - pad + dj, in.width(), l.padding_mode);
            if (si < 0 || sj < 0) {
              std::fill(dst, dst + cin, 0.0f);
            } else {
              auto src = in.cell(si, sj);
              std::copy(src.begin(), src.end(), dst);
            }
            dst += cin;
          }
        }
      }
    }
    Eigen::Map<RowMatrix> result(out.cell(r0, 0).data(), n, cout);
    result.noalias() = patches * weights;
    result.rowwise() += b;
  }
  return out;
}

void relu_inplace(Tensor3& t) {
  for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

struct KeyValues {
  std::string kind;
  std::map<std::string, std::string> kv;

  int integer(const std::string& key, int fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      std::size_t used = 0;
      const int v = std::stoi(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw FormatError("topology: bad integer for '" + key + "': " + it->second);
    }
  }
};

KeyValues parse_line(const std::string& line) {
  std::istringstream in(line);
  KeyValues out;
  in >> out.kind;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("topology: malformed token '" + tok + "'");
    out.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

std::vector<float> require_vector(const DfrcFile& f, const std::string& name, std::size_t expected,
                                  const std::string& layer) {
  const DfrcEntry& e = f.f32(name);
  if (e.values.size() != expected) {
    throw ValidationError("layer '" + layer + "': entry '" + name + "' has " + std::to_string(e.values.size()) +
                          " values, expected " + std::to_string(expected));
  }
  return e.values;
}

}  // namespace

const char* to_string(PaddingMode mode) { return mode == PaddingMode::kZero ? "zero" : "reflect"; }

PaddingMode parse_padding_mode(const std::string& text) {
  if (text == "zero") return PaddingMode::kZero;
  if (text == "reflect") return PaddingMode::kReflect;
  throw ConfigError("padding mode must be 'zero' or 'reflect', got '" + text + "'");
}

LayerSpec LayerSpec::conv(std::string name, int in, int out, int kernel, int pad, bool tap) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.name = std::move(name);
  l.kernel = kernel;
  l.stride = 1;
  l.in_channels = in;
  l.out_channels = out;
  l.pad = pad;
  l.tap = tap;
  return l;
}

LayerSpec LayerSpec::relu() {
  LayerSpec l;
  l.kind = LayerKind::kRelu;
  return l;
}

LayerSpec LayerSpec::maxpool(int kernel, int stride) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

std::vector<ReceptiveField> compute_receptive_fields(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw ValidationError("compute_receptive_fields: empty layer list");
  std::vector<ReceptiveField> out;
  int size = 1, jump = 1;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::kRelu) continue;
    if (l.stride < 1 || l.kernel < 1) throw ValidationError("compute_receptive_fields: kernel and stride must be >= 1");
    size += (l.kernel - 1) * jump;
    jump *= l.stride;
    if (l.kind == LayerKind::kConv && l.tap) {
      out.push_back({static_cast<int>(out.size()) + 1, size, jump});
    }
  }
  return out;
}

std::vector<LayerSpec> vgg19_topology() {
  // Convs per block, output width per block.
  constexpr int kBlocks[5][2] = {{2, 64}, {2, 128}, {4, 256}, {4, 512}, {4, 512}};
  std::vector<LayerSpec> layers;
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    for (int c = 0; c < kBlocks[b][0]; ++c) {
      const std::string name = "conv" + std::to_string(b + 1) + "_" + std::to_string(c + 1);
      layers.push_back(LayerSpec::conv(name, in, kBlocks[b][1]));
      layers.push_back(LayerSpec::relu());
      in = kBlocks[b][1];
    }
    // The final pool only follows the last tap, so it never affects features.
    if (b < 4) layers.push_back(LayerSpec::maxpool());
  }
  return layers;
}

ConvParams fold_batch_norm(const ConvParams& conv, const BatchNormParams& bn, int in_channels, int kernel) {
  const std::size_t out = conv.bias.size();
  if (bn.gamma.size() != out || bn.beta.size() != out || bn.mean.size() != out || bn.var.size() != out) {
    throw ValidationError("batch-norm parameter length does not match conv output channels");
  }
  const std::size_t per_out = static_cast<std::size_t>(in_channels) * kernel * kernel;
  ConvParams folded = conv;
  for (std::size_t o = 0; o < out; ++o) {
    const double scale = static_cast<double>(bn.gamma[o]) / std::sqrt(static_cast<double>(bn.var[o]) + bn.eps);
    for (std::size_t i = 0; i < per_out; ++i) {
      folded.weight[o * per_out + i] = static_cast<float>(conv.weight[o * per_out + i] * scale);
    }
    folded.bias[o] = static_cast<float>((conv.bias[o] - static_cast<double>(bn.mean[o])) * scale + bn.beta[o]);
  }
  return folded;
}

Backbone::Backbone(std::vector<LayerSpec> layers, std::vector<ConvParams> conv_params, InputNormalization norm)
    : layers_(std::move(layers)), conv_params_(std::move(conv_params)), norm_(std::move(norm)) {
  if (layers_.empty()) throw ValidationError("backbone has no layers");
  std::size_t conv_index = 0;
  int channels = -1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::string label = layer_label(l, i);
    if (l.kind == LayerKind::kConv) {
      if (l.kernel < 1 || l.stride < 1 || l.in_channels < 1 || l.out_channels < 1 || l.pad < 0) {
        throw ValidationError(label + ": invalid conv geometry");
      }
      if (channels >= 0 && channels != l.in_channels) {
        throw ValidationError(label + ": expects " + std::to_string(l.in_channels) + " input channels but previous layer produces " +
                              std::to_string(channels));
      }
      if (conv_index >= conv_params_.size()) throw ValidationError(label + ": missing weights");
      const ConvParams& p = conv_params_[conv_index];
      const std::size_t expected =
          static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
      if (p.weight.size() != expected || p.bias.size() != static_cast<std::size_t>(l.out_channels)) {
        throw ValidationError(label + ": weight shape mismatch (expected " + std::to_string(l.out_channels) + "x" +
                              std::to_string(l.in_channels) + "x" + std::to_string(l.kernel) + "x" +
                              std::to_string(l.kernel) + " plus bias " + std::to_string(l.out_channels) + ")");
      }
      if (l.tap) {
        if (i + 1 >= layers_.size() || layers_[i + 1].kind != LayerKind::kRelu) {
          throw ValidationError(label + ": tapped conv must be followed by a ReLU");
        }
        tap_channels_.push_back(l.out_channels);
      }
      packed_.push_back(pack_weights(l, p));
      channels = l.out_channels;
      ++conv_index;
    } else if (l.kind == LayerKind::kMaxPool) {
      if (l.kernel < 1 || l.stride < 1) throw ValidationError(label + ": invalid pool geometry");
    }
  }
  if (conv_index == 0) throw ValidationError("backbone has no conv layers");
  if (conv_index != conv_params_.size()) throw ValidationError("backbone has weights for more conv layers than it declares");
  if (tap_channels_.empty()) throw ValidationError("backbone has no tapped layers");
  const std::size_t cin = static_cast<std::size_t>(input_channels());
  if (norm_.mean.empty()) norm_.mean.assign(cin, 0.0f);
  if (norm_.std.empty()) norm_.std.assign(cin, 1.0f);
  if (norm_.mean.size() != cin || norm_.std.size() != cin) {
    throw ValidationError("input normalization must have one mean/std per input channel");
  }
  for (float sd : norm_.std)
    if (!(sd > 0.0f)) throw ValidationError("input normalization std must be positive");
}

int Backbone::input_channels() const {
  for (const auto& l : layers_)
    if (l.kind == LayerKind::kConv) return l.in_channels;
  return 0;
}

PaddingMode Backbone::padding_mode() const {
  for (const auto& l : layers_)
    if (l.kind == LayerKind::kConv) return l.padding_mode;
  return PaddingMode::kZero;
}

Backbone Backbone::with_padding(PaddingMode mode) const {
  auto layers = layers_;
  for (auto& l : layers)
    if (l.kind == LayerKind::kConv) l.padding_mode = mode;
  return Backbone(std::move(layers), conv_params_, norm_);
}

std::vector<Tensor3> Backbone::extract_features(const Tensor3& image, int max_taps) const {
  if (image.channels() != input_channels()) {
    throw ShapeError("extract_features: image has " + std::to_string(image.channels()) + " channels, backbone expects " +
                     std::to_string(input_channels()));
  }
  Tensor3 x = image;
  for (int i = 0; i < x.height(); ++i)
    for (int j = 0; j < x.width(); ++j) {
      auto c = x.cell(i, j);
      for (std::size_t ch = 0; ch < c.size(); ++ch) c[ch] = (c[ch] - norm_.mean[ch]) / norm_.std[ch];
    }

  const std::size_t want = max_taps > 0 ? std::min(tap_channels_.size(), static_cast<std::size_t>(max_taps))
                                        : tap_channels_.size();
  std::vector<Tensor3> taps;
  taps.reserve(want);
  std::size_t conv_index = 0;
  bool pending_tap = false;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::kConv:
        x = conv_packed(x, l, packed_[conv_index], conv_params_[conv_index].bias);
        pending_tap = l.tap;
        ++conv_index;
        break;
      case LayerKind::kRelu:
        relu_inplace(x);
        if (pending_tap) taps.push_back(x);
        pending_tap = false;
        break;
      case LayerKind::kMaxPool:
        x = maxpool2d(x, l.kernel, l.stride);
        break;
    }
    if (taps.size() == want) break;
  }
  return taps;
}

Tensor3 conv2d(const Tensor3& input, const LayerSpec& layer, const ConvParams& params) {
  const std::size_t expected = static_cast<std::size_t>(layer.out_channels) * layer.in_channels * layer.kernel * layer.kernel;
  if (params.weight.size() != expected || params.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
    throw ShapeError("conv2d: parameter shape mismatch");
  }
  return conv_packed(input, layer, pack_weights(layer, params), params.bias);
}

Tensor3 maxpool2d(const Tensor3& input, int kernel, int stride) {
  const int oh = (input.height() - kernel) / stride + 1;
  const int ow = (input.width() - kernel) / stride + 1;
  if (input.height() < kernel || input.width() < kernel) {
    throw ShapeError("maxpool: input " + std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                     " smaller than pool window " + std::to_string(kernel));
  }
  const int c = input.channels();
  Tensor3 out(oh, ow, c, -std::numeric_limits<float>::infinity());
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      auto dst = out.cell(i, j);
      for (int di = 0; di < kernel; ++di)
        for (int dj = 0; dj < kernel; ++dj) {
          auto src = input.cell(i * stride + di, j * stride + dj);
          for (int ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
        }
    }
  return out;
}

std::string Backbone::topology_text() const {
  std::ostringstream out;
  out << "# dfr backbone topology v1\n";
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::kConv:
        out << "conv name=" << l.name << " kernel=" << l.kernel << " stride=" << l.stride << " in=" << l.in_channels
            << " out=" << l.out_channels << " pad=" << l.pad << " padding=" << to_string(l.padding_mode)
            << " tap=" << (l.tap ? 1 : 0) << "\n";
        break;
      case LayerKind::kRelu:
        out << "relu\n";
        break;
      case LayerKind::kMaxPool:
        out << "maxpool kernel=" << l.kernel << " stride=" << l.stride << "\n";
        break;
    }
  }
  return out.str();
}

DfrcFile Backbone::to_dfrc() const {
  DfrcFile f;
  f.add_text(kTopologyEntry, topology_text());
  const auto cin = static_cast<std::uint32_t>(input_channels());
  f.add_f32(kNormMeanEntry, {cin}, norm_.mean);
  f.add_f32(kNormStdEntry, {cin}, norm_.std);
  std::size_t ci = 0;
  for (const auto& l : layers_) {
    if (l.kind != LayerKind::kConv) continue;
    const auto& p = conv_params_[ci++];
    f.add_f32(l.name + ".weight",
              {static_cast<std::uint32_t>(l.out_channels), static_cast<std::uint32_t>(l.in_channels),
               static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)},
              p.weight);
    f.add_f32(l.name + ".bias", {static_cast<std::uint32_t>(l.out_channels)}, p.bias);
  }
  return f;
}

Backbone Backbone::from_dfrc(const DfrcFile& file) {
  std::istringstream topo(file.text(kTopologyEntry));
  std::vector<LayerSpec> layers;
  std::vector<ConvParams> params;
  std::string line;
  int line_no = 0;
  while (std::getline(topo, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const KeyValues kv = parse_line(line);
    if (kv.kind == "conv") {
      LayerSpec l;
      l.kind = LayerKind::kConv;
      auto name = kv.kv.find("name");
      l.name = name != kv.kv.end() ? name->second : "conv" + std::to_string(params.size() + 1);
      l.kernel = kv.integer("kernel", 3);
      l.stride = kv.integer("stride", 1);
      l.in_channels = kv.integer("in", 0);
      l.out_channels = kv.integer("out", 0);
      l.pad = kv.integer("pad", 0);
      l.tap = kv.integer("tap", 0) != 0;
      auto pm = kv.kv.find("padding");
      if (pm != kv.kv.end()) {
        try {
          l.padding_mode = parse_padding_mode(pm->second);
        } catch (const ConfigError& e) {
          throw FormatError(std::string("topology line ") + std::to_string(line_no) + ": " + e.what());
        }
      }
      if (l.in_channels < 1 || l.out_channels < 1 || l.kernel < 1) {
        throw ValidationError("layer '" + l.name + "': invalid conv geometry in topology");
      }
      const std::size_t wcount = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
      ConvParams p;
      p.weight = require_vector(file, l.name + ".weight", wcount, l.name);
      p.bias = require_vector(file, l.name + ".bias", static_cast<std::size_t>(l.out_channels), l.name);
      if (file.contains(l.name + ".bn.gamma")) {
        BatchNormParams bn;
        const auto n = static_cast<std::size_t>(l.out_channels);
        bn.gamma = require_vector(file, l.name + ".bn.gamma", n, l.name);
        bn.beta = require_vector(file, l.name + ".bn.beta", n, l.name);
        bn.mean = require_vector(file, l.name + ".bn.mean", n, l.name);
        bn.var = require_vector(file, l.name + ".bn.var", n, l.name);
        auto eps = kv.kv.find("bn_eps");
        if (eps != kv.kv.end()) bn.eps = std::stof(eps->second);
        p = fold_batch_norm(p, bn, l.in_channels, l.kernel);
      }
      layers.push_back(l);
      params.push_back(std::move(p));
    } else if (kv.kind == "relu") {
      layers.push_back(LayerSpec::relu());
    } else if (kv.kind == "maxpool") {
      layers.push_back(LayerSpec::maxpool(kv.integer("kernel", 2), kv.integer("stride", 2)));
    } else {
      throw FormatError("topology line " + std::to_string(line_no) + ": unknown layer kind '" + kv.kind + "'");
    }
  }
  InputNormalization norm;
  if (file.contains(kNormMeanEntry)) norm.mean = file.f32(kNormMeanEntry).values;
  if (file.contains(kNormStdEntry)) norm.std = file.f32(kNormStdEntry).values;
  return Backbone(std::move(layers), std::move(params), std::move(norm));
}

Backbone load_backbone(const std::string& path, std::optional<PaddingMode> padding) {
  Backbone b = Backbone::from_dfrc(read_dfrc(path));
  if (padding) return b.with_padding(*padding);
  return b;
}

void save_backbone(const std::string& path, const Backbone& backbone) { write_dfrc(path, backbone.to_dfrc()); }

Backbone make_tiny_backbone(std::uint64_t seed) {
  std::vector<LayerSpec> layers = {
      LayerSpec::conv("conv1", 3, 8),  LayerSpec::relu(), LayerSpec::conv("conv2", 8, 8),   LayerSpec::relu(),
      LayerSpec::maxpool(),            LayerSpec::conv("conv3", 8, 16), LayerSpec::relu(),
      LayerSpec::conv("conv4", 16, 16), LayerSpec::relu(),
  };
  Rng rng(seed);
  std::vector<ConvParams> params;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::kConv) continue;
    const int fan_in = l.in_channels * l.kernel * l.kernel;
    const double bound = std::sqrt(6.0 / fan_in);
    ConvParams p;
    p.weight.resize(static_cast<std::size_t>(l.out_channels) * fan_in);
    for (float& w : p.weight) w = static_cast<float>(rng.uniform(-bound, bound));
    p.bias.resize(l.out_channels);
    for (float& b : p.bias) b = static_cast<float>(rng.uniform(-0.1, 0.1));
    params.push_back(std::move(p));
  }
  // ImageNet statistics, the convention pretrained backbones expect.
  InputNormalization norm{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
  return Backbone(std::move(layers), std::move(params), std::move(norm));
}

}  // namespace dfr
