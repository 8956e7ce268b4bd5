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
#include <iosfwd>
#include <string>
#include <vector>

#include "dfr/backbone.hpp"
#include "dfr/cae.hpp"
#include "dfr/config.hpp"
#include "dfr/dataset.hpp"
#include "dfr/metrics.hpp"
#include "dfr/regional.hpp"
#include "dfr/scoring.hpp"

namespace dfr {

struct DfrModel {
  RunConfig config;
  CaeModel cae;
  int pca_dim = 0;  // before clamping to c_o - 1
  bool pca_degenerate = false;
  std::size_t pca_samples = 0;
  std::vector<double> loss_history;

  friend bool operator==(const DfrModel&, const DfrModel&) = default;
};

// DFRC layout: CAE entries, "meta" (key=value text), "loss_history" (one value per line).
DfrcFile model_to_dfrc(const DfrModel& model);
DfrModel model_from_dfrc(const DfrcFile& file);
void save_model(const std::string& path, const DfrModel& model);
DfrModel load_model(const std::string& path);

class Detector {
 public:
  // The backbone is switched to the model's padding mode. ConfigError when the
  // fused channel count for the model's scale range differs from the CAE c_o.
  Detector(const Backbone& backbone, DfrModel model);

  const DfrModel& model() const { return model_; }
  const Backbone& backbone() const { return backbone_; }
  int image_side() const { return model_.config.image_side; }

  RegionalFeatureMap regional(const Tensor3& image) const;
  AnomalyMap regional_scores(const Tensor3& image) const;
  AnomalyMap pixel_scores(const Tensor3& image) const;

 private:
  Backbone backbone_;
  DfrModel model_;
};

RegionalFeatureMap regional_features(const Backbone& backbone, const Tensor3& image, const RunConfig& cfg);

// Loads every training image, sizes c_d by PCA, trains the CAE. Loss per epoch
// goes to `log` when non-null.
DfrModel train_model(const Backbone& backbone, const DatasetManifest& manifest, const RunConfig& cfg,
                     std::ostream* log = nullptr);

// Pixel scores of every training image, pooled in manifest order.
std::vector<float> training_pixel_scores(const Detector& detector, const DatasetManifest& manifest);

// Highest per-image threshold over the training set.
Threshold per_image_threshold(const Detector& detector, const DatasetManifest& manifest, double acceptable_fpr);

struct ThresholdRow {
  double fpr = 0.0;
  double value = 0.0;
};

struct EvalReport {
  std::string category;
  std::size_t test_images = 0;
  std::size_t anomalous_images = 0;
  double roc_auc = 0.0;
  double pro_auc = 0.0;
  double pro_cap = 0.3;
  std::vector<ProCurvePoint> curve;
  std::vector<ThresholdRow> thresholds;
  double seconds = 0.0;
  std::vector<EvalImage> images;  // filled only when requested
};

struct EvalOptions {
  bool keep_maps = false;
  bool thresholds = true;  // adds the fpr 0 / 0.005 / 0.05 table from training scores
  std::size_t curve_points = 0;
};

// Pixel ROC-AUC over all test pixels and PRO-AUC up to fpr 0.3.
EvalReport evaluate(const Detector& detector, const DatasetManifest& manifest, const EvalOptions& options = {});

std::string format_report(const EvalReport& report);
void write_report(const std::string& path, const EvalReport& report);
void write_curve_csv(const std::string& path, std::span<const ProCurvePoint> curve);

struct BenchResult {
  std::size_t images = 0;
  int repetitions = 0;
  double mean_fps = 0.0;
  double std_fps = 0.0;
};

// Images are decoded once up front; each repetition times a full pass.
BenchResult bench(const Detector& detector, const std::vector<std::string>& image_paths, int repetitions);

// Writes <stem>.scores.dfrc, <stem>.png (16-bit normalized) and, with a
// threshold, <stem>.mask.png. Returns the maximum pixel score.
double detect_to_files(const Detector& detector, const std::string& image_path, const std::string& out_dir,
                       const Threshold* threshold);

}  // namespace dfr
