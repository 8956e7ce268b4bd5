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

#include "dfr/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dfr/error.hpp"
#include "dfr/rng.hpp"

namespace fs = std::filesystem;

namespace dfr {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  // Byte-wise comparison of the generic form is identical on every platform.
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
  return out;
}

std::vector<std::string> list_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_mask(const fs::path& gt_dir, const fs::path& image) {
  const std::string stem = image.stem().string();
  for (const char* suffix : {"_mask", ""}) {
    for (const char* ext : {".png", ".PNG", ".jpg", ".jpeg"}) {
      fs::path candidate = gt_dir / (stem + suffix + ext);
      if (fs::is_regular_file(candidate)) return candidate;
    }
  }
  return std::nullopt;
}

std::string numbered(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d.png", i);
  return buf;
}

struct Grating {
  double frequency;  // cycles per image side
  double cos_t;
  double sin_t;
  double amplitude;
  std::array<double, 3> colour;
};

struct Texture {
  std::array<Grating, 3> gratings;
  std::array<double, 3> base;
};

Texture make_texture(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  Texture t;
  for (auto& g : t.gratings) {
    g.frequency = rng.uniform(2.0, 8.0);
    const double theta = rng.uniform(0.0, 3.141592653589793);
    g.cos_t = std::cos(theta);
    g.sin_t = std::sin(theta);
    g.amplitude = rng.uniform(0.08, 0.14);
    for (double& c : g.colour) c = rng.uniform(0.5, 1.0);
  }
  for (double& b : t.base) b = rng.uniform(0.4, 0.6);
  return t;
}

Tensor3 render_texture(const Texture& tex, Rng& rng, int side) {
  std::array<double, 3> phase;
  for (double& p : phase) p = rng.uniform(0.0, 6.283185307179586);
  Tensor3 img(side, side, 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      std::array<double, 3> v = tex.base;
      for (std::size_t g = 0; g < tex.gratings.size(); ++g) {
        const Grating& gr = tex.gratings[g];
        const double u = (x * gr.cos_t + y * gr.sin_t) / side;
        const double s = gr.amplitude * std::sin(6.283185307179586 * gr.frequency * u + phase[g]);
        for (int c = 0; c < 3; ++c) v[c] += s * gr.colour[c];
      }
      auto cell = img.cell(y, x);
      for (int c = 0; c < 3; ++c) cell[c] = static_cast<float>(std::clamp(v[c] + 0.02 * rng.normal(), 0.0, 1.0));
    }
  return img;
}

// Plants 1-3 patches; returns the mask.
Tensor3 plant_defects(Tensor3& img, Rng& rng) {
  const int side = img.height();
  Tensor3 mask(side, side, 1);
  const int min_px = static_cast<int>(std::ceil(0.0016 * side * side));
  const int max_px = static_cast<int>(std::floor(0.0144 * side * side));
  const int dim_lo = static_cast<int>(std::ceil(0.04 * side));
  const int dim_hi = static_cast<int>(std::floor(0.12 * side));
  const int count = rng.range(1, 3);
  for (int d = 0; d < count; ++d) {
    const bool ellipse = rng.uniform() < 0.5;
    std::array<double, 3> shift;
    for (double& s : shift) s = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.25, 0.45);
    // Redraw until the rasterized patch area is inside the per-defect bounds.
    std::vector<std::pair<int, int>> pixels;
    for (;;) {
      pixels.clear();
      const int h = rng.range(dim_lo, dim_hi);
      const int w = rng.range(dim_lo, dim_hi);
      const int top = rng.range(0, side - h);
      const int left = rng.range(0, side - w);
      const double cy = top + h / 2.0, cx = left + w / 2.0;
      for (int y = top; y < top + h; ++y)
        for (int x = left; x < left + w; ++x) {
          if (ellipse) {
            const double dy = (y + 0.5 - cy) / (h / 2.0);
            const double dx = (x + 0.5 - cx) / (w / 2.0);
            if (dy * dy + dx * dx > 1.0) continue;
          }
          pixels.push_back({y, x});
        }
      const int area = static_cast<int>(pixels.size());
      if (area >= min_px && area <= max_px) break;
    }
    for (const auto& [y, x] : pixels) {
      auto cell = img.cell(y, x);
      for (int c = 0; c < 3; ++c) cell[c] = static_cast<float>(std::clamp(cell[c] + shift[c], 0.0, 1.0));
      mask.at(y, x, 0) = 1.0f;
    }
  }
  return mask;
}

}  // namespace

DatasetManifest scan_mvtec(const std::string& root, const std::string& category) {
  const fs::path base = fs::path(root) / category;
  if (!fs::is_directory(base)) throw IoError("category directory '" + base.string() + "' does not exist");
  DatasetManifest m;
  m.category = category;
  for (const auto& p : list_images(base / "train" / "good")) m.train_normal.push_back(p.string());
  if (m.train_normal.empty()) {
    throw ManifestError("no training images under '" + (base / "train" / "good").string() + "'");
  }
  const fs::path test_dir = base / "test";
  if (!fs::is_directory(test_dir)) throw ManifestError("missing test directory '" + test_dir.string() + "'");
  std::vector<std::string> missing;
  for (const auto& type : list_subdirs(test_dir)) {
    const bool good = type == "good";
    if (!good) m.anomaly_types.push_back(type);
    for (const auto& p : list_images(test_dir / type)) {
      TestSample s;
      s.image_path = p.string();
      s.anomaly_type = type;
      s.label = good ? ImageLabel::kNormal : ImageLabel::kAnomalous;
      if (!good) {
        auto mask = find_mask(base / "ground_truth" / type, p);
        if (mask) {
          s.mask_path = mask->string();
        } else {
          missing.push_back(p.string());
        }
      }
      m.test.push_back(std::move(s));
    }
  }
  if (!missing.empty()) {
    std::string msg = "anomalous test images without ground-truth masks:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw ManifestError(msg);
  }
  return m;
}

DatasetManifest make_synthetic_category(const std::string& root, const std::string& category, std::uint64_t seed,
                                        int n_train, int n_test, int side) {
  if (side < 32) throw ValidationError("synthetic images need side >= 32");
  if (n_train < 1 || n_test < 0) throw ValidationError("synthetic category needs n_train >= 1 and n_test >= 0");
  const fs::path base = fs::path(root) / category;
  const fs::path train_dir = base / "train" / "good";
  const fs::path good_dir = base / "test" / "good";
  const fs::path defect_dir = base / "test" / "patch";
  const fs::path gt_dir = base / "ground_truth" / "patch";
  std::error_code ec;
  for (const auto& d : {train_dir, good_dir, defect_dir, gt_dir}) {
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create '" + d.string() + "': " + ec.message());
  }
  const Texture tex = make_texture(seed);
  for (int i = 0; i < n_train; ++i) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    write_png_rgb8((train_dir / numbered(i)).string(), render_texture(tex, rng, side));
  }
  const int n_good = n_test / 2;
  for (int i = 0; i < n_test; ++i) {
    Rng rng(derive_seed(seed, 100000 + static_cast<std::uint64_t>(i)));
    Tensor3 img = render_texture(tex, rng, side);
    if (i < n_good) {
      write_png_rgb8((good_dir / numbered(i)).string(), img);
    } else {
      const int k = i - n_good;
      Tensor3 mask = plant_defects(img, rng);
      write_png_rgb8((defect_dir / numbered(k)).string(), img);
      const std::string stem = numbered(k).substr(0, 3);
      write_png_mask((gt_dir / (stem + "_mask.png")).string(), mask);
    }
  }
  return scan_mvtec(root, category);
}

}  // namespace dfr
