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

#include "dfr/cae.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <functional>
#include <numeric>
#include <string>

#include "dfr/error.hpp"
#include "dfr/rng.hpp"

namespace dfr {

namespace {

// Fraction slack so that exact ties with the target (e.g. 9 of 10 equal
// components against 0.9) are not lost to rounding in the eigensolver.
constexpr double kVarianceSlack = 1e-9;

using ConstCellMap = Eigen::Map<const MatrixX<float>>;

ConstCellMap cells_of(const Tensor3& t) { return ConstCellMap(t.data().data(), t.channels(), t.cells()); }

}  // namespace

std::array<int, kCaeLayers> cae_widths(int c_o, int c_d) {
  const int mid = (c_o + c_d) / 2;
  return {mid, 2 * c_d, c_d, 2 * c_d, mid, c_o};
}

CaeModel build_cae(int c_o, int c_d, std::uint64_t seed) {
  if (c_d < 1 || c_o < 1 || c_d >= c_o) {
    throw ValidationError("build_cae: need 1 <= c_d < c_o, got c_o=" + std::to_string(c_o) +
                          " c_d=" + std::to_string(c_d));
  }
  CaeModel model;
  model.c_o = c_o;
  model.c_d = c_d;
  Rng rng(seed);
  const auto widths = cae_widths(c_o, c_d);
  int in = c_o;
  for (int k = 0; k < kCaeLayers; ++k) {
    const int out = widths[k];
    const double bound = std::sqrt(6.0 / (in + out));
    MatrixX<float> w(out, in);
    // Row-major fill order so the draw sequence does not depend on storage order.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = static_cast<float>(rng.uniform(-bound, bound));
    model.params.weights[k] = std::move(w);
    model.params.biases[k] = VectorX<float>::Zero(out);
    in = out;
  }
  return model;
}

Tensor3 cae_forward(const CaeModel& model, const Tensor3& regional) {
  if (regional.channels() != model.c_o) {
    throw ValidationError("cae_forward: map has " + std::to_string(regional.channels()) + " channels, model expects c_o=" +
                          std::to_string(model.c_o));
  }
  Tensor3 out(regional.height(), regional.width(), regional.channels());
  Eigen::Map<MatrixX<float>> dst(out.data().data(), out.channels(), out.cells());
  dst = cae_forward_cells(model.params, cells_of(regional));
  return out;
}

double reconstruction_loss(const Tensor3& truth, const Tensor3& recon) {
  if (!truth.same_shape(recon)) throw ShapeError("reconstruction_loss: shapes differ");
  double sum = 0.0;
  for (int i = 0; i < truth.height(); ++i)
    for (int j = 0; j < truth.width(); ++j) {
      auto a = truth.cell(i, j);
      auto b = recon.cell(i, j);
      double sq = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = static_cast<double>(a[c]) - b[c];
        sq += d * d;
      }
      sum += std::sqrt(sq);
    }
  return sum / truth.cells();
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

AdamState::AdamState(const CaeParams<float>& shape) {
  for (int k = 0; k < kCaeLayers; ++k) {
    m_[2 * k].assign(static_cast<std::size_t>(shape.weights[k].size()), 0.0);
    v_[2 * k].assign(static_cast<std::size_t>(shape.weights[k].size()), 0.0);
    m_[2 * k + 1].assign(static_cast<std::size_t>(shape.biases[k].size()), 0.0);
    v_[2 * k + 1].assign(static_cast<std::size_t>(shape.biases[k].size()), 0.0);
  }
}

void AdamState::apply(std::span<float> params, std::span<const double> grads, std::span<double> m,
                      std::span<double> v, std::int64_t step, const TrainConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] = static_cast<float>(params[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

void AdamState::update(CaeParams<float>& params, const CaeParams<double>& grad, const TrainConfig& cfg) {
  ++step_;
  for (int k = 0; k < kCaeLayers; ++k) {
    apply({params.weights[k].data(), static_cast<std::size_t>(params.weights[k].size())},
          {grad.weights[k].data(), static_cast<std::size_t>(grad.weights[k].size())}, m_[2 * k], v_[2 * k], step_, cfg);
    apply({params.biases[k].data(), static_cast<std::size_t>(params.biases[k].size())},
          {grad.biases[k].data(), static_cast<std::size_t>(grad.biases[k].size())}, m_[2 * k + 1], v_[2 * k + 1],
          step_, cfg);
  }
}

TrainResult train_cae(CaeModel model, std::span<const Tensor3> regional_maps, const TrainConfig& cfg,
                      const EpochCallback& on_epoch) {
  cfg.validate();
  if (regional_maps.empty()) throw ValidationError("train_cae: no training maps");
  for (const auto& m : regional_maps) {
    if (m.channels() != model.c_o) {
      throw ValidationError("train_cae: training map has " + std::to_string(m.channels()) +
                            " channels, model expects c_o=" + std::to_string(model.c_o));
    }
  }
  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  AdamState adam(model.params);
  Rng rng(cfg.seed);
  const std::size_t n_maps = regional_maps.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  MatrixX<float> cells;
  std::vector<double> weights;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(n_maps);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n_maps; start += batch) {
      const std::size_t end = std::min(n_maps, start + batch);
      const std::size_t b = end - start;
      Eigen::Index total = 0;
      for (std::size_t i = start; i < end; ++i) total += regional_maps[order[i]].cells();
      cells.resize(model.c_o, total);
      weights.resize(static_cast<std::size_t>(total));
      Eigen::Index col = 0;
      for (std::size_t i = start; i < end; ++i) {
        const Tensor3& m = regional_maps[order[i]];
        cells.middleCols(col, m.cells()) = cells_of(m);
        std::fill(weights.begin() + col, weights.begin() + col + m.cells(), 1.0 / (static_cast<double>(b) * m.cells()));
        col += m.cells();
      }
      const auto lg = cae_loss_gradient(model.params, cells, weights);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batches + 1),
                              epoch + 1, batches + 1);
      }
      adam.update(model.params, lg.grad.cast<double>(), cfg);
      epoch_loss += lg.loss;
      ++batches;
    }
    const double mean_loss = epoch_loss / batches;
    result.loss_history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch + 1, mean_loss);
  }
  result.model = std::move(model);
  return result;
}

MatrixX<float> sample_features(std::span<const Tensor3> regional_maps, int per_image, std::uint64_t seed) {
  if (regional_maps.empty()) throw ValidationError("sample_features: no maps");
  if (per_image < 1) throw ValidationError("sample_features: per_image must be >= 1");
  const int c_o = regional_maps.front().channels();
  Eigen::Index rows = 0;
  for (const auto& m : regional_maps) {
    if (m.channels() != c_o) throw ValidationError("sample_features: maps disagree on channel count");
    rows += std::min(per_image, m.cells());
  }
  MatrixX<float> out(rows, c_o);
  Rng rng(seed);
  Eigen::Index r = 0;
  for (const auto& m : regional_maps) {
    const int cells = m.cells();
    const int take = std::min(per_image, cells);
    // Partial Fisher-Yates: the first `take` entries are a uniform sample
    // without replacement.
    std::vector<int> idx(cells);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < take; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(cells - i)));
      std::swap(idx[i], idx[j]);
    }
    for (int i = 0; i < take; ++i) {
      auto v = m.data().subspan(static_cast<std::size_t>(idx[i]) * c_o, static_cast<std::size_t>(c_o));
      for (int c = 0; c < c_o; ++c) out(r, c) = v[c];
      ++r;
    }
  }
  return out;
}

LatentDimEstimate estimate_latent_dim(const MatrixX<float>& samples, double target_variance) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index c_o = samples.cols();
  if (n < 2) throw ValidationError("estimate_latent_dim: need at least 2 samples");
  if (c_o < 1) throw ValidationError("estimate_latent_dim: samples have no features");
  if (!(target_variance > 0.0 && target_variance <= 1.0)) {
    throw ValidationError("estimate_latent_dim: target_variance must be in (0, 1]");
  }
  const MatrixX<double> x = samples.cast<double>();
  const MatrixX<double> centred = x.rowwise() - x.colwise().mean();
  // The n x n Gram matrix shares the nonzero spectrum of the c_o x c_o
  // covariance and is cheaper when there are fewer samples than features.
  MatrixX<double> scatter = (n < c_o) ? MatrixX<double>(centred * centred.transpose())
                                      : MatrixX<double>(centred.transpose() * centred);
  scatter /= static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixX<double>> solver(scatter, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw ValidationError("estimate_latent_dim: eigensolver failed");

  LatentDimEstimate est;
  est.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + solver.eigenvalues().size());
  for (double& e : est.eigenvalues) e = std::max(e, 0.0);
  std::sort(est.eigenvalues.begin(), est.eigenvalues.end(), std::greater<>());
  const double total = std::accumulate(est.eigenvalues.begin(), est.eigenvalues.end(), 0.0);
  if (!(total > 0.0)) {
    est.dim = 1;
    est.degenerate = true;
    return est;
  }
  double cumulative = 0.0;
  int d = 0;
  for (double e : est.eigenvalues) {
    cumulative += e;
    ++d;
    if (cumulative / total >= target_variance - kVarianceSlack) break;
  }
  est.dim = std::min(d, static_cast<int>(c_o));
  return est;
}

DfrcFile cae_to_dfrc(const CaeModel& model) {
  DfrcFile f;
  f.add_f32("cae.shape", {2}, {static_cast<float>(model.c_o), static_cast<float>(model.c_d)});
  for (int k = 0; k < kCaeLayers; ++k) {
    const auto& w = model.params.weights[k];
    std::vector<float> row_major(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major[static_cast<std::size_t>(r * w.cols() + c)] = w(r, c);
    const std::string prefix = "cae.layer" + std::to_string(k + 1);
    f.add_f32(prefix + ".weight", {static_cast<std::uint32_t>(w.rows()), static_cast<std::uint32_t>(w.cols())},
              std::move(row_major));
    const auto& b = model.params.biases[k];
    f.add_f32(prefix + ".bias", {static_cast<std::uint32_t>(b.size())},
              std::vector<float>(b.data(), b.data() + b.size()));
  }
  return f;
}

CaeModel cae_from_dfrc(const DfrcFile& file) {
  const auto& shape = file.f32("cae.shape").values;
  if (shape.size() != 2) throw FormatError("cae.shape must hold c_o and c_d");
  CaeModel model;
  model.c_o = static_cast<int>(shape[0]);
  model.c_d = static_cast<int>(shape[1]);
  if (model.c_d < 1 || model.c_d >= model.c_o) throw ValidationError("stored CAE has invalid c_o/c_d");
  const auto widths = model.widths();
  int in = model.c_o;
  for (int k = 0; k < kCaeLayers; ++k) {
    const std::string prefix = "cae.layer" + std::to_string(k + 1);
    const DfrcEntry& w = file.f32(prefix + ".weight");
    const DfrcEntry& b = file.f32(prefix + ".bias");
    if (w.dims.size() != 2 || static_cast<int>(w.dims[0]) != widths[k] || static_cast<int>(w.dims[1]) != in ||
        b.values.size() != static_cast<std::size_t>(widths[k])) {
      throw ValidationError(prefix + ": stored shape does not match the architecture for c_o=" +
                            std::to_string(model.c_o) + ", c_d=" + std::to_string(model.c_d));
    }
    MatrixX<float> mat(widths[k], in);
    for (int r = 0; r < widths[k]; ++r)
      for (int c = 0; c < in; ++c) mat(r, c) = w.values[static_cast<std::size_t>(r) * in + c];
    model.params.weights[k] = std::move(mat);
    model.params.biases[k] = Eigen::Map<const VectorX<float>>(b.values.data(), widths[k]);
    in = widths[k];
  }
  return model;
}

}  // namespace dfr
