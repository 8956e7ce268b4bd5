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
#include <span>
#include <vector>

namespace dfr {

// Dense height x width x channels array of floats stored row-major with the
// channel index fastest: offset = (row * width + col) * channels + ch.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int height, int width, int channels, float fill = 0.0f);
  Tensor3(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  int cells() const { return height_ * width_; }

  float& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  // All channels of one spatial cell.
  std::span<float> cell(int row, int col) {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const float> cell(int row, int col) const {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool all_finite() const;
  float min() const;
  float max() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Source row for output row i is floor(i * src / out); no centre offset.
Tensor3 resize_nearest(const Tensor3& src, int out_h, int out_w);

// Half-pixel-centre bilinear: output i samples source position
// (i + 0.5) * src / out - 0.5, clamped to [0, src - 1].
Tensor3 resize_bilinear(const Tensor3& src, int out_h, int out_w);

// k x k box mean with the given stride, no padding. (src - k) must be a
// multiple of stride in both dimensions; otherwise ShapeError.
Tensor3 mean_filter(const Tensor3& src, int k, int stride);

// Concatenate along channels; all inputs share height and width.
Tensor3 concat_channels(std::span<const Tensor3> parts);

}  // namespace dfr
