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

// Command-line front end: synth, tiny-backbone, rf, features, train,
// threshold, detect, eval, bench.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dfr/backbone.hpp"
#include "dfr/config.hpp"
#include "dfr/dataset.hpp"
#include "dfr/error.hpp"
#include "dfr/image_io.hpp"
#include "dfr/pipeline.hpp"
#include "dfr/regional.hpp"

namespace fs = std::filesystem;
using namespace dfr;

namespace {

// Flags shared by every command that resolves a RunConfig. Values stay unset
// unless given so that --config and defaults are only overridden explicitly.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> scales, padding, agg, backbone;
  std::optional<double> fpr, lr;
  std::optional<int> epochs, batch, image_side;
  std::optional<long long> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value run configuration file");
    cmd->add_option("--scales", scales, "tap range A:B (1-based, inclusive)");
    cmd->add_option("--padding", padding, "zero|reflect");
    cmd->add_option("--agg", agg, "aggregation kernel:stride, e.g. 4:4");
    cmd->add_option("--fpr", fpr, "acceptable false-positive rate");
    cmd->add_option("--epochs", epochs, "CAE training epochs");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--backbone", backbone, "backbone DFRC file");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--batch", batch, "images per batch");
    cmd->add_option("--image-side", image_side, "square input side in pixels");
  }

  RunConfig resolve() const {
    KeyValueMap kv;
    if (!config_path.empty()) kv = parse_key_values(read_text_file(config_path));
    if (scales) kv["scales"] = *scales;
    if (padding) kv["padding"] = *padding;
    if (agg) kv["agg"] = *agg;
    if (backbone) kv["backbone"] = *backbone;
    if (fpr) kv["fpr"] = format_double(*fpr);
    if (lr) kv["learning_rate"] = format_double(*lr);
    if (epochs) kv["epochs"] = std::to_string(*epochs);
    if (batch) kv["batch_size"] = std::to_string(*batch);
    if (image_side) kv["image_side"] = std::to_string(*image_side);
    if (seed) kv["seed"] = std::to_string(*seed);
    RunConfig cfg = RunConfig::from_key_values(kv);
    cfg.validate();
    return cfg;
  }
};

Backbone require_backbone(const std::string& path) {
  if (path.empty()) throw ConfigError("no backbone given (use --backbone PATH)");
  return load_backbone(path);
}

// Model-bound commands take the backbone from --backbone or the model metadata.
Detector make_detector(const std::string& model_path, const std::string& backbone_override) {
  DfrModel model = load_model(model_path);
  const std::string path = backbone_override.empty() ? model.config.backbone_path : backbone_override;
  return Detector(require_backbone(path), std::move(model));
}

std::vector<std::string> list_image_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep feature reconstruction anomaly detector"};
  app.require_subcommand(1);

  std::string data, category, out, model_path, backbone_path, image_path, image_dir, curve_path;
  std::uint64_t seed = 0;
  int n_train = 40, n_test = 20, side = 128, repetitions = 5;
  double fpr = 0.0;
  std::optional<double> threshold;
  bool per_image = false;
  std::vector<std::string> images;
  ConfigFlags flags;

  auto* synth = app.add_subcommand("synth", "write a synthetic texture category");
  synth->add_option("--data", data, "dataset root")->required();
  synth->add_option("--category", category, "category name")->required();
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--train", n_train, "training images");
  synth->add_option("--test", n_test, "test images (first half normal)");
  synth->add_option("--side", side, "image side in pixels");

  auto* tiny = app.add_subcommand("tiny-backbone", "write the seeded 4-conv test backbone");
  tiny->add_option("--seed", seed, "weight seed");
  tiny->add_option("--out", out, "output DFRC path")->required();

  auto* rf = app.add_subcommand("rf", "print per-tap receptive fields");
  rf->add_option("--backbone", backbone_path, "backbone DFRC file (default: VGG19 topology)");

  auto* feats = app.add_subcommand("features", "dump the regional feature map of one image");
  flags.attach(feats);
  feats->add_option("--image", image_path, "input image")->required();
  feats->add_option("--out", out, "output DFRC path")->required();

  auto* train = app.add_subcommand("train", "train a model on a category's normal images");
  flags.attach(train);
  train->add_option("--data", data, "dataset root")->required();
  train->add_option("--category", category, "category name")->required();
  train->add_option("--out", out, "output model path")->required();

  auto* thr = app.add_subcommand("threshold", "calibrate T on the training images and print it");
  thr->add_option("--model", model_path, "model file")->required();
  thr->add_option("--data", data, "dataset root")->required();
  thr->add_option("--category", category, "category name")->required();
  thr->add_option("--fpr", fpr, "acceptable false-positive rate");
  thr->add_option("--backbone", backbone_path, "override the model's backbone path");
  thr->add_flag("--per-image-threshold,--per-image", per_image,
                "experimental: calibrate each image separately and keep the highest T");

  auto* det = app.add_subcommand("detect", "score images and write maps");
  det->add_option("--model", model_path, "model file")->required();
  det->add_option("--out", out, "output directory")->required();
  det->add_option("--threshold", threshold, "write binary masks for scores above T");
  det->add_option("--backbone", backbone_path, "override the model's backbone path");
  det->add_option("images", images, "image files");

  auto* ev = app.add_subcommand("eval", "pixel ROC-AUC and PRO-AUC on the test split");
  ev->add_option("--model", model_path, "model file")->required();
  ev->add_option("--data", data, "dataset root")->required();
  ev->add_option("--category", category, "category name")->required();
  ev->add_option("--out", out, "report path (key=value)");
  ev->add_option("--curve", curve_path, "PRO curve CSV path");
  ev->add_option("--backbone", backbone_path, "override the model's backbone path");

  auto* bn = app.add_subcommand("bench", "inference throughput");
  bn->add_option("--model", model_path, "model file")->required();
  bn->add_option("--images", image_dir, "directory of images")->required();
  bn->add_option("--repetitions", repetitions, "timed passes");
  bn->add_option("--backbone", backbone_path, "override the model's backbone path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (synth->parsed()) {
      const DatasetManifest m = make_synthetic_category(data, category, seed, n_train, n_test, side);
      std::cout << "train=" << m.train_normal.size() << " test=" << m.test.size() << "\n";
    } else if (tiny->parsed()) {
      save_backbone(out, make_tiny_backbone(seed));
    } else if (rf->parsed()) {
      const auto layers = backbone_path.empty() ? vgg19_topology() : load_backbone(backbone_path).layers();
      for (const auto& r : compute_receptive_fields(layers)) {
        std::cout << r.layer_index << " " << r.size << " " << r.jump << "\n";
      }
    } else if (feats->parsed()) {
      const RunConfig cfg = flags.resolve();
      const Backbone bb = require_backbone(cfg.backbone_path).with_padding(cfg.padding);
      const RegionalFeatureMap rfm = regional_features(bb, load_image(image_path, cfg.image_side).pixels, cfg);
      write_dfrc(out, regional_to_dfrc(rfm));
      std::cout << "c_o=" << rfm.c_o() << " cells=" << rfm.map.height() << "x" << rfm.map.width() << "\n";
    } else if (train->parsed()) {
      const RunConfig cfg = flags.resolve();
      const Backbone bb = require_backbone(cfg.backbone_path);
      const DatasetManifest m = scan_mvtec(data, category);
      const DfrModel model = train_model(bb, m, cfg, &std::cerr);
      save_model(out, model);
      save_run_config(out + ".cfg", cfg);
      std::cout << "c_o=" << model.cae.c_o << " c_d=" << model.cae.c_d << "\n";
    } else if (thr->parsed()) {
      const Detector d = make_detector(model_path, backbone_path);
      const DatasetManifest m = scan_mvtec(data, category);
      const Threshold t =
          per_image ? per_image_threshold(d, m, fpr) : calibrate_threshold(training_pixel_scores(d, m), fpr);
      std::cout << format_double(t.value) << "\n";
    } else if (det->parsed()) {
      if (images.empty()) return kExitOk;
      const Detector d = make_detector(model_path, backbone_path);
      fs::create_directories(out);
      std::optional<Threshold> t;
      if (threshold) t = Threshold{*threshold, 0.0, 0};
      for (const auto& img : images) {
        const double mx = detect_to_files(d, img, out, t ? &*t : nullptr);
        std::cout << img << " " << format_double(mx) << "\n";
      }
    } else if (ev->parsed()) {
      const Detector d = make_detector(model_path, backbone_path);
      const EvalReport r = evaluate(d, scan_mvtec(data, category));
      std::cout << format_report(r);
      if (!out.empty()) write_report(out, r);
      if (!curve_path.empty()) write_curve_csv(curve_path, r.curve);
    } else if (bn->parsed()) {
      const Detector d = make_detector(model_path, backbone_path);
      const BenchResult b = bench(d, list_image_files(image_dir), repetitions);
      std::cout << "images=" << b.images << " repetitions=" << b.repetitions << " mean_fps=" << format_double(b.mean_fps)
                << " std_fps=" << format_double(b.std_fps) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
