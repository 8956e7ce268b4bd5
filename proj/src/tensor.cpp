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

#include "dfr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dfr/error.hpp"

namespace dfr {

namespace {

void require_positive(int v, const char* what) {
  if (v < 1) throw ValidationError(std::string(what) + " must be >= 1, got " + std::to_string(v));
}

}  // namespace

Tensor3::Tensor3(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  require_positive(height, "height");
  require_positive(width, "width");
  require_positive(channels, "channels");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Tensor3::Tensor3(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  require_positive(height, "height");
  require_positive(width, "width");
  require_positive(channels, "channels");
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(height) + "x" + std::to_string(width) + "x" +
                     std::to_string(channels));
  }
}

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor3::min() const {
  if (data_.empty()) return std::numeric_limits<float>::quiet_NaN();
  return *std::min_element(data_.begin(), data_.end());
}

float Tensor3::max() const {
  if (data_.empty()) return std::numeric_limits<float>::quiet_NaN();
  return *std::max_element(data_.begin(), data_.end());
}

Tensor3 resize_nearest(const Tensor3& src, int out_h, int out_w) {
  require_positive(out_h, "out_h");
  require_positive(out_w, "out_w");
  const int c = src.channels();
  Tensor3 out(out_h, out_w, c);
  std::vector<int> col_src(out_w);
  for (int j = 0; j < out_w; ++j) {
    col_src[j] = static_cast<int>(static_cast<long long>(j) * src.width() / out_w);
  }
  for (int i = 0; i < out_h; ++i) {
    const int si = static_cast<int>(static_cast<long long>(i) * src.height() / out_h);
    for (int j = 0; j < out_w; ++j) {
      auto from = src.cell(si, col_src[j]);
      std::copy(from.begin(), from.end(), out.cell(i, j).begin());
    }
  }
  return out;
}

namespace {

struct LinearTap {
  int lo;
  int hi;
  float frac;  // weight of hi
};

std::vector<LinearTap> linear_taps(int src, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(src) / out;
  for (int i = 0; i < out; ++i) {
    double pos = (i + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, static_cast<float>(pos - lo)};
  }
  return taps;
}

// Never leaves [min(a, b), max(a, b)], even after rounding.
float lerp_bounded(float a, float b, float t) {
  return std::clamp(a + t * (b - a), std::min(a, b), std::max(a, b));
}

}  // namespace

Tensor3 resize_bilinear(const Tensor3& src, int out_h, int out_w) {
  require_positive(out_h, "out_h");
  require_positive(out_w, "out_w");
  const int c = src.channels();
  Tensor3 out(out_h, out_w, c);
  const auto rows = linear_taps(src.height(), out_h);
  const auto cols = linear_taps(src.width(), out_w);
  for (int i = 0; i < out_h; ++i) {
    const auto& r = rows[i];
    for (int j = 0; j < out_w; ++j) {
      const auto& q = cols[j];
      auto dst = out.cell(i, j);
      for (int ch = 0; ch < c; ++ch) {
        const float top = lerp_bounded(src.at(r.lo, q.lo, ch), src.at(r.lo, q.hi, ch), q.frac);
        const float bot = lerp_bounded(src.at(r.hi, q.lo, ch), src.at(r.hi, q.hi, ch), q.frac);
        dst[ch] = lerp_bounded(top, bot, r.frac);
      }
    }
  }
  return out;
}

Tensor3 mean_filter(const Tensor3& src, int k, int stride) {
  require_positive(k, "kernel");
  require_positive(stride, "stride");
  auto check = [&](int extent, const char* dim) {
    if (extent < k || (extent - k) % stride != 0) {
      throw ShapeError(std::string("mean_filter: ") + dim + " " + std::to_string(extent) +
                       " is incompatible with kernel " + std::to_string(k) + " and stride " +
                       std::to_string(stride) + " ((" + dim + " - k) must be a nonnegative multiple of stride)");
    }
  };
  check(src.height(), "height");
  check(src.width(), "width");
  const int oh = (src.height() - k) / stride + 1;
  const int ow = (src.width() - k) / stride + 1;
  const int c = src.channels();
  Tensor3 out(oh, ow, c);
  std::vector<double> acc(c);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int di = 0; di < k; ++di) {
        for (int dj = 0; dj < k; ++dj) {
          auto in = src.cell(i * stride + di, j * stride + dj);
          for (int ch = 0; ch < c; ++ch) acc[ch] += in[ch];
        }
      }
      auto dst = out.cell(i, j);
      for (int ch = 0; ch < c; ++ch) dst[ch] = static_cast<float>(acc[ch] * inv);
    }
  }
  return out;
}

Tensor3 concat_channels(std::span<const Tensor3> parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no inputs");
  const int h = parts.front().height();
  const int w = parts.front().width();
  int total = 0;
  for (const auto& p : parts) {
    if (p.height() != h || p.width() != w) throw ShapeError("concat_channels: spatial sizes differ");
    total += p.channels();
  }
  Tensor3 out(h, w, total);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float* dst = out.cell(i, j).data();
      for (const auto& p : parts) {
        auto from = p.cell(i, j);
        dst = std::copy(from.begin(), from.end(), dst);
      }
    }
  }
  return out;
}

}  // namespace dfr
