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

// Pointwise (1x1 convolution) autoencoder over regional feature maps.
//
// A 1x1 convolution is the same affine map applied to every cell, so the
// network is evaluated on a c_o x N matrix whose columns are cells. An HWC
// Tensor3 already has that memory layout (channels contiguous per cell), so
// maps are viewed as column-major matrices without copying.

#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dfr/dfrc.hpp"
#include "dfr/regional.hpp"
#include "dfr/tensor.hpp"

namespace dfr {

inline constexpr int kCaeLayers = 6;
// ReLU after layers 1, 2, 4, 5; the bottleneck and the output are linear.
inline constexpr std::array<bool, kCaeLayers> kCaeReluAfter = {true, true, false, true, true, false};

// Output widths: (c_o+c_d)//2, 2c_d, c_d, 2c_d, (c_o+c_d)//2, c_o.
std::array<int, kCaeLayers> cae_widths(int c_o, int c_d);

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct CaeParams {
  std::array<MatrixX<Scalar>, kCaeLayers> weights;  // out x in
  std::array<VectorX<Scalar>, kCaeLayers> biases;

  template <typename To>
  CaeParams<To> cast() const {
    CaeParams<To> out;
    for (int k = 0; k < kCaeLayers; ++k) {
      out.weights[k] = weights[k].template cast<To>();
      out.biases[k] = biases[k].template cast<To>();
    }
    return out;
  }

  CaeParams zeros_like() const {
    CaeParams out;
    for (int k = 0; k < kCaeLayers; ++k) {
      out.weights[k] = MatrixX<Scalar>::Zero(weights[k].rows(), weights[k].cols());
      out.biases[k] = VectorX<Scalar>::Zero(biases[k].size());
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int k = 0; k < kCaeLayers; ++k) n += weights[k].size() + biases[k].size();
    return n;
  }

  friend bool operator==(const CaeParams& a, const CaeParams& b) {
    for (int k = 0; k < kCaeLayers; ++k) {
      if (a.weights[k].rows() != b.weights[k].rows() || a.weights[k].cols() != b.weights[k].cols()) return false;
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    }
    return true;
  }
};

struct CaeModel {
  int c_o = 0;
  int c_d = 0;
  CaeParams<float> params;

  std::array<int, kCaeLayers> widths() const { return cae_widths(c_o, c_d); }
  friend bool operator==(const CaeModel&, const CaeModel&) = default;
};

// Requires 1 <= c_d < c_o. Weights uniform in +-sqrt(6 / (fan_in + fan_out)),
// biases zero, deterministic per seed.
CaeModel build_cae(int c_o, int c_d, std::uint64_t seed);

// Forward pass over cell columns (c_o x N in, c_o x N out).
template <typename Scalar, typename Derived>
MatrixX<Scalar> cae_forward_cells(const CaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& cells) {
  MatrixX<Scalar> a = cells;
  for (int k = 0; k < kCaeLayers; ++k) {
    MatrixX<Scalar> z = p.weights[k] * a;
    z.colwise() += p.biases[k];
    if (kCaeReluAfter[k]) z = z.cwiseMax(Scalar(0));
    a = std::move(z);
  }
  return a;
}

// Per-cell reconstruction of a regional map. ValidationError on c_o mismatch.
Tensor3 cae_forward(const CaeModel& model, const Tensor3& regional);
inline Tensor3 cae_forward(const CaeModel& model, const RegionalFeatureMap& rfm) { return cae_forward(model, rfm.map); }

// Mean over cells of the Euclidean distance between corresponding feature
// vectors. ShapeError when shapes differ.
double reconstruction_loss(const Tensor3& truth, const Tensor3& recon);

template <typename Scalar>
struct LossGradient {
  double loss = 0.0;
  CaeParams<Scalar> grad;
};

// loss = sum_j w_j * ||x_j - f(x_j)||_2 over the columns x_j of `cells`, and
// its exact gradient by reverse-mode chain rule through the affine/ReLU
// stack. A column with zero residual contributes a zero subgradient.
template <typename Scalar, typename Derived>
LossGradient<Scalar> cae_loss_gradient(const CaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& cells,
                                       std::span<const double> column_weights) {
  const Eigen::Index n = cells.cols();
  std::array<MatrixX<Scalar>, kCaeLayers + 1> act;
  act[0] = cells;
  for (int k = 0; k < kCaeLayers; ++k) {
    MatrixX<Scalar> z = p.weights[k] * act[k];
    z.colwise() += p.biases[k];
    if (kCaeReluAfter[k]) z = z.cwiseMax(Scalar(0));
    act[k + 1] = std::move(z);
  }

  LossGradient<Scalar> out;
  MatrixX<Scalar> delta = act[kCaeLayers] - act[0];  // f(x) - x
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = std::sqrt(static_cast<double>(delta.col(j).squaredNorm()));
    const double w = column_weights[static_cast<std::size_t>(j)];
    loss += w * norm;
    if (norm > 0.0) {
      delta.col(j) *= static_cast<Scalar>(w / norm);
    } else {
      delta.col(j).setZero();
    }
  }
  out.loss = loss;

  for (int k = kCaeLayers - 1; k >= 0; --k) {
    if (kCaeReluAfter[k]) {
      delta = (act[k + 1].array() > Scalar(0)).select(delta, Scalar(0));
    }
    out.grad.weights[k].noalias() = delta * act[k].transpose();
    out.grad.biases[k] = delta.rowwise().sum();
    if (k > 0) {
      MatrixX<Scalar> next = p.weights[k].transpose() * delta;
      delta = std::move(next);
    }
  }
  return out;
}

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 4;
  int epochs = 700;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  // ConfigError when out of range.
  void validate() const;
};

// Adam with bias correction; moments kept in double.
class AdamState {
 public:
  explicit AdamState(const CaeParams<float>& shape);

  std::int64_t step() const { return step_; }
  void update(CaeParams<float>& params, const CaeParams<double>& grad, const TrainConfig& cfg);

  // One Adam step on a flat parameter block; `step` is the 1-based step
  // number used for bias correction.
  static void apply(std::span<float> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                    std::int64_t step, const TrainConfig& cfg);

 private:
  std::int64_t step_ = 0;
  std::array<std::vector<double>, 2 * kCaeLayers> m_;
  std::array<std::vector<double>, 2 * kCaeLayers> v_;
};

struct TrainResult {
  CaeModel model;
  // Mean batch loss of each epoch, measured before each batch's update.
  std::vector<double> loss_history;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Trains on precomputed regional maps of normal images. Each epoch visits the
// maps in a seeded permutation, in batches of cfg.batch_size; the batch loss is
// the mean over its images of the per-image cell-averaged loss. Throws
// DivergenceError on a non-finite batch loss.
TrainResult train_cae(CaeModel model, std::span<const Tensor3> regional_maps, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

// Uniformly samples `per_image` distinct cells from each map (all cells when
// per_image exceeds the map). Rows are samples.
MatrixX<float> sample_features(std::span<const Tensor3> regional_maps, int per_image, std::uint64_t seed);

struct LatentDimEstimate {
  int dim = 1;
  bool degenerate = false;          // zero total variance
  std::vector<double> eigenvalues;  // descending
};

// Smallest d whose leading eigenvalues of the centred sample covariance
// explain at least target_variance of the total (capped at c_o).
LatentDimEstimate estimate_latent_dim(const MatrixX<float>& samples, double target_variance);

DfrcFile cae_to_dfrc(const CaeModel& model);
CaeModel cae_from_dfrc(const DfrcFile& file);

}  // namespace dfr
