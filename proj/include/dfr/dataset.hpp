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
#include <string>
#include <vector>

#include "dfr/image_io.hpp"

namespace dfr {

struct TestSample {
  std::string image_path;
  ImageLabel label = ImageLabel::kUnknown;
  std::string anomaly_type;  // "good" for normal images
  std::optional<std::string> mask_path;
};

struct DatasetManifest {
  std::string category;
  std::vector<std::string> train_normal;
  std::vector<TestSample> test;
  std::vector<std::string> anomaly_types;  // sorted, excludes "good"
};

// Reads <root>/<category>/{train/good, test/<type>, ground_truth/<type>}.
// Every listing is sorted lexicographically. Masks are looked up as
// ground_truth/<type>/<stem>_mask.<ext> (falling back to <stem>.<ext>).
// ManifestError for an empty train set or anomalous images without masks.
DatasetManifest scan_mvtec(const std::string& root, const std::string& category);

// Writes a seeded synthetic texture category under <root>/<category> in the
// MVTec layout and returns its manifest. Normal images are three random
// sinusoidal gratings plus 2% Gaussian noise; the first n_test / 2 test
// images are normal, the rest carry 1-3 rectangular or elliptical patches
// with shifted colour, each 4-12% of the side, with exact masks.
DatasetManifest make_synthetic_category(const std::string& root, const std::string& category, std::uint64_t seed,
                                        int n_train, int n_test, int side);

}  // namespace dfr
