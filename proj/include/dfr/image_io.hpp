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

#include <optional>
#include <string>

#include "dfr/tensor.hpp"

namespace dfr {

enum class ImageLabel { kNormal, kAnomalous, kUnknown };

struct ImageRecord {
  std::string path;
  Tensor3 pixels;              // side x side x 3, values in [0, 1]
  ImageLabel label = ImageLabel::kUnknown;
  std::optional<Tensor3> mask;  // side x side x 1, values in {0, 1}
};

// Raw decode at native resolution. Values are in [0, 1]; channel count is the
// file's (1 gray, 3 RGB; alpha is dropped). PNG always, JPEG when built with
// libjpeg. Throws IoError / FormatError.
Tensor3 decode_image(const std::string& path);

// Decodes, triplicates gray channels, and bilinearly resizes to
// target_side x target_side.
ImageRecord load_image(const std::string& path, int target_side);

// Loads a ground-truth mask: nearest resize to target_side, then > 0.5.
Tensor3 load_mask(const std::string& path, int target_side);

// Encoders. Values are clamped to [0, 1] and quantized.
void write_png_rgb8(const std::string& path, const Tensor3& image);
void write_png_gray8(const std::string& path, const Tensor3& image);
void write_png_gray16(const std::string& path, const Tensor3& image);
// 1-bit grayscale; a pixel is set when its value is > 0.5.
void write_png_mask(const std::string& path, const Tensor3& mask);

}  // namespace dfr
