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

#include "dfr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "dfr/error.hpp"
#include "dfr/image_io.hpp"
#include "dfr/rng.hpp"

namespace fs = std::filesystem;

namespace dfr {

namespace {

constexpr std::uint64_t kStreamPca = 1;
constexpr std::uint64_t kStreamInit = 2;
constexpr std::uint64_t kStreamTrain = 3;

// Keys stored in "meta" next to the run configuration.
const char* const kModelKeys[] = {"c_o", "c_d", "pca_dim", "pca_degenerate", "pca_samples", "loss_normalization",
                                  "image_resize", "format"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

DfrcFile model_to_dfrc(const DfrModel& model) {
  DfrcFile f = cae_to_dfrc(model.cae);
  KeyValueMap kv = model.config.to_key_values();
  kv["format"] = "dfr-model";
  kv["c_o"] = std::to_string(model.cae.c_o);
  kv["c_d"] = std::to_string(model.cae.c_d);
  kv["pca_dim"] = std::to_string(model.pca_dim);
  kv["pca_degenerate"] = model.pca_degenerate ? "1" : "0";
  kv["pca_samples"] = std::to_string(model.pca_samples);
  kv["loss_normalization"] = "mean_over_cells";
  kv["image_resize"] = "bilinear";
  f.add_text("meta", format_key_values(kv));
  std::string hist;
  for (double l : model.loss_history) hist += format_double(l) + "\n";
  f.add_text("loss_history", hist);
  return f;
}

DfrModel model_from_dfrc(const DfrcFile& file) {
  if (!file.contains("meta")) throw FormatError("model file has no 'meta' entry");
  KeyValueMap kv = parse_key_values(file.text("meta"));
  if (kv["format"] != "dfr-model") throw FormatError("'meta' does not describe a dfr model");
  DfrModel m;
  m.cae = cae_from_dfrc(file);
  if (parse_integer("c_o", kv["c_o"]) != m.cae.c_o || parse_integer("c_d", kv["c_d"]) != m.cae.c_d) {
    throw FormatError("model metadata disagrees with stored CAE shape");
  }
  m.pca_dim = static_cast<int>(parse_integer("pca_dim", kv["pca_dim"]));
  m.pca_degenerate = kv["pca_degenerate"] == "1";
  m.pca_samples = static_cast<std::size_t>(parse_integer("pca_samples", kv["pca_samples"]));
  for (const char* k : kModelKeys) kv.erase(k);
  m.config = RunConfig::from_key_values(kv);
  if (file.contains("loss_history")) {
    std::istringstream in(file.text("loss_history"));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) m.loss_history.push_back(parse_double("loss_history", line));
    }
  }
  return m;
}

void save_model(const std::string& path, const DfrModel& model) { write_dfrc(path, model_to_dfrc(model)); }

DfrModel load_model(const std::string& path) { return model_from_dfrc(read_dfrc(path)); }

RegionalFeatureMap regional_features(const Backbone& backbone, const Tensor3& image, const RunConfig& cfg) {
  const auto taps = backbone.extract_features(image, cfg.scales.hi);
  return generate_regional_features(taps, cfg.scales, image.height(), image.width(), cfg.agg_k, cfg.agg_stride);
}

Detector::Detector(const Backbone& backbone, DfrModel model)
    : backbone_(backbone.with_padding(model.config.padding)), model_(std::move(model)) {
  model_.config.scales.validate(backbone_.tap_count());
  const int c_o = fused_channels(backbone_.tap_channels(), model_.config.scales);
  if (c_o != model_.cae.c_o) {
    throw ConfigError("backbone and scale range " + model_.config.scales.to_string() + " give c_o=" +
                      std::to_string(c_o) + " but the model expects c_o=" + std::to_string(model_.cae.c_o));
  }
}

RegionalFeatureMap Detector::regional(const Tensor3& image) const {
  if (image.height() != image_side() || image.width() != image_side()) {
    throw ShapeError("detector expects " + std::to_string(image_side()) + "x" + std::to_string(image_side()) +
                     " images, got " + std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  return regional_features(backbone_, image, model_.config);
}

AnomalyMap Detector::regional_scores(const Tensor3& image) const {
  const RegionalFeatureMap rfm = regional(image);
  return anomaly_map(rfm.map, cae_forward(model_.cae, rfm));
}

AnomalyMap Detector::pixel_scores(const Tensor3& image) const {
  return to_pixel_map(regional_scores(image), image.height(), image.width());
}

DfrModel train_model(const Backbone& backbone_in, const DatasetManifest& manifest, const RunConfig& cfg,
                     std::ostream* log) {
  cfg.validate();
  if (manifest.train_normal.empty()) throw ManifestError("no training images");
  const Backbone backbone = backbone_in.with_padding(cfg.padding);
  cfg.scales.validate(backbone.tap_count());
  const int c_o = fused_channels(backbone.tap_channels(), cfg.scales);
  if (c_o < 2) throw ConfigError("fused channel count c_o=" + std::to_string(c_o) + " leaves no room for a bottleneck");

  std::vector<Tensor3> maps;
  maps.reserve(manifest.train_normal.size());
  for (const auto& path : manifest.train_normal) {
    maps.push_back(regional_features(backbone, load_image(path, cfg.image_side).pixels, cfg).map);
  }

  const int n_images = static_cast<int>(maps.size());
  const int per_image = std::max(1, std::min(cfg.pca_per_image, cfg.pca_max_samples / n_images));
  const MatrixX<float> samples = sample_features(maps, per_image, derive_seed(cfg.seed, kStreamPca));
  const LatentDimEstimate est = estimate_latent_dim(samples, cfg.pca_variance);

  DfrModel model;
  model.config = cfg;
  model.config.train.seed = cfg.seed;
  model.pca_dim = est.dim;
  model.pca_degenerate = est.degenerate;
  model.pca_samples = static_cast<std::size_t>(samples.rows());
  const int c_d = std::clamp(est.dim, 1, c_o - 1);
  if (log) {
    *log << "c_o=" << c_o << " pca_dim=" << est.dim << " c_d=" << c_d << (est.degenerate ? " (degenerate)" : "")
         << " samples=" << samples.rows() << "\n";
  }

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, kStreamTrain);
  auto on_epoch = [log, &tc](int epoch, double loss) {
    if (log) *log << "epoch " << epoch << "/" << tc.epochs << " loss " << format_double(loss) << "\n";
  };
  TrainResult tr = train_cae(build_cae(c_o, c_d, derive_seed(cfg.seed, kStreamInit)), maps, tc, on_epoch);
  model.cae = std::move(tr.model);
  model.loss_history = std::move(tr.loss_history);
  return model;
}

std::vector<float> training_pixel_scores(const Detector& detector, const DatasetManifest& manifest) {
  std::vector<float> pooled;
  for (const auto& path : manifest.train_normal) {
    const AnomalyMap m = detector.pixel_scores(load_image(path, detector.image_side()).pixels);
    pooled.insert(pooled.end(), m.scores.data().begin(), m.scores.data().end());
  }
  return pooled;
}

Threshold per_image_threshold(const Detector& detector, const DatasetManifest& manifest, double acceptable_fpr) {
  if (manifest.train_normal.empty()) throw ManifestError("no training images");
  Threshold best;
  best.value = -1.0;
  for (const auto& path : manifest.train_normal) {
    const AnomalyMap m = detector.pixel_scores(load_image(path, detector.image_side()).pixels);
    const Threshold t = calibrate_threshold(m.scores.data(), acceptable_fpr);
    if (t.value > best.value) best = t;
  }
  return best;
}

EvalReport evaluate(const Detector& detector, const DatasetManifest& manifest, const EvalOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (manifest.test.empty()) throw ManifestError("no test images");
  EvalReport report;
  report.category = manifest.category;
  const int side = detector.image_side();
  std::vector<EvalImage> images;
  images.reserve(manifest.test.size());
  for (const auto& s : manifest.test) {
    EvalImage e;
    e.scores = detector.pixel_scores(load_image(s.image_path, side).pixels).scores;
    if (s.label == ImageLabel::kAnomalous) {
      if (!s.mask_path) throw ManifestError("anomalous test image '" + s.image_path + "' has no mask");
      e.mask = load_mask(*s.mask_path, side);
      ++report.anomalous_images;
    } else {
      e.mask = Tensor3(side, side, 1);
    }
    images.push_back(std::move(e));
  }
  report.test_images = images.size();

  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& e : images) {
    scores.insert(scores.end(), e.scores.data().begin(), e.scores.data().end());
    for (float v : e.mask.data()) labels.push_back(v > 0.5f ? 1 : 0);
  }
  report.roc_auc = roc_auc(scores, labels);
  report.curve = pro_curve(images, options.curve_points);
  report.pro_auc = pro_auc(report.curve, report.pro_cap);

  if (options.thresholds) {
    const std::vector<float> train = training_pixel_scores(detector, manifest);
    for (double fpr : {0.0, 0.005, 0.05}) report.thresholds.push_back({fpr, calibrate_threshold(train, fpr).value});
  }
  if (options.keep_maps) report.images = std::move(images);
  report.seconds = seconds_since(t0);
  return report;
}

std::string format_report(const EvalReport& r) {
  KeyValueMap kv;
  kv["category"] = r.category;
  kv["test_images"] = std::to_string(r.test_images);
  kv["anomalous_images"] = std::to_string(r.anomalous_images);
  kv["roc_auc"] = format_double(r.roc_auc);
  kv["pro_auc"] = format_double(r.pro_auc);
  kv["pro_fpr_cap"] = format_double(r.pro_cap);
  kv["curve_points"] = std::to_string(r.curve.size());
  kv["seconds"] = format_double(r.seconds);
  for (const auto& t : r.thresholds) kv["threshold.fpr_" + format_double(t.fpr)] = format_double(t.value);
  return format_key_values(kv);
}

void write_report(const std::string& path, const EvalReport& report) { write_text_file(path, format_report(report)); }

void write_curve_csv(const std::string& path, std::span<const ProCurvePoint> curve) {
  std::string out = "fpr,mean_pro\n";
  for (const auto& p : curve) out += format_double(p.fpr) + "," + format_double(p.mean_pro) + "\n";
  write_text_file(path, out);
}

BenchResult bench(const Detector& detector, const std::vector<std::string>& image_paths, int repetitions) {
  if (image_paths.empty()) throw ValidationError("bench needs at least one image");
  if (repetitions < 1) throw ValidationError("bench needs at least one repetition");
  std::vector<Tensor3> images;
  for (const auto& p : image_paths) images.push_back(load_image(p, detector.image_side()).pixels);
  // One untimed pass warms caches and allocator pools.
  for (const auto& img : images) (void)detector.pixel_scores(img);
  std::vector<double> fps;
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& img : images) (void)detector.pixel_scores(img);
    const double dt = std::max(seconds_since(t0), 1e-9);
    fps.push_back(static_cast<double>(images.size()) / dt);
  }
  BenchResult b{images.size(), repetitions, 0.0, 0.0};
  for (double f : fps) b.mean_fps += f;
  b.mean_fps /= repetitions;
  for (double f : fps) b.std_fps += (f - b.mean_fps) * (f - b.mean_fps);
  b.std_fps = repetitions > 1 ? std::sqrt(b.std_fps / (repetitions - 1)) : 0.0;
  return b;
}

double detect_to_files(const Detector& detector, const std::string& image_path, const std::string& out_dir,
                       const Threshold* threshold) {
  const AnomalyMap m = detector.pixel_scores(load_image(image_path, detector.image_side()).pixels);
  const std::string stem = (fs::path(out_dir) / fs::path(image_path).stem()).string();
  DfrcFile f;
  f.add_f32("scores", {static_cast<std::uint32_t>(m.height()), static_cast<std::uint32_t>(m.width())}, m.scores.vec());
  write_dfrc(stem + ".scores.dfrc", f);
  write_png_gray16(stem + ".png", normalize_for_display(m).image);
  if (threshold) write_png_mask(stem + ".mask.png", segment(m, *threshold));
  return m.scores.max();
}

}  // namespace dfr
