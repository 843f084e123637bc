// Copyright 2026 The dpflat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPFLAT_ZEROTH_ORDER_H_
#define DPFLAT_ZEROTH_ORDER_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/flatness.h"
#include "dpflat/objective.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"

namespace dpflat {

struct ZoConfig {
  double fd_scale = 1e-3;   // perturbation scale of the symmetric difference
  double clip_norm = 1.0;   // bound on each per-sample directional derivative
  double noise_multiplier = 0.0;
  std::uint64_t seed = 1;

  void Validate() const {
    if (!(fd_scale > 0.0)) throw ConfigError("fd_scale must be > 0");
    if (!(clip_norm > 0.0)) throw ConfigError("ZO clip norm must be > 0");
    if (!(noise_multiplier >= 0.0)) throw ConfigError("ZO sigma must be >= 0");
  }
};

struct SpsaEstimate {
  TensorSet direction;                 // z
  std::vector<double> per_sample;      // d_i
  double directional_derivative = 0.0; // mean of d_i
  TensorSet update;                    // directional_derivative * z
};

// Black-box per-sample loss: the objective's sample loss, optionally plus the
// distillation term lambda * ||theta - w_nor|| folded into every sample.
template <SampleObjective O>
class BlackboxLoss {
 public:
  explicit BlackboxLoss(const O& objective) : objective_(objective) {}
  BlackboxLoss(const O& objective, const PrefixParamSet& w_nor, double lambda)
      : objective_(objective), w_nor_(&w_nor), lambda_(lambda) {}

  std::vector<double> Losses(const PrefixParamSet& theta,
                             std::span<const std::size_t> batch) const {
    ++evaluations_;
    std::vector<double> out = PerSampleLosses(objective_, theta, batch);
    if (w_nor_ != nullptr && lambda_ != 0.0) {
      const double reg = lambda_ * DistillDistance(theta, *w_nor_);
      for (double& v : out) v += reg;
    }
    for (double v : out) {
      if (!std::isfinite(v)) throw NonFiniteLoss("non-finite loss at perturbed point");
    }
    return out;
  }

  std::size_t evaluations() const { return evaluations_; }

 private:
  const O& objective_;
  const PrefixParamSet* w_nor_ = nullptr;
  double lambda_ = 0.0;
  mutable std::size_t evaluations_ = 0;
};

// z ~ N(0, I) over the active layers, regenerated from ("zo-direction", step).
inline TensorSet ZoDirection(const PrefixParamSet& theta, std::uint64_t seed,
                             std::uint64_t step) {
  RngStream stream(seed, {"zo-direction", step, 0});
  TensorSet z = theta.ZeroGrads();
  for (Tensor& t : z) {
    for (double& v : t.values()) v = stream.Gaussian();
  }
  return z;
}

namespace internal {

// Per-sample (L_i(theta + eps z) - L_i(theta - eps z)) / (2 eps). When
// `center_loss` is given it receives the batch mean of (L+ + L-) / 2.
template <SampleObjective O>
std::vector<double> DirectionalDerivatives(const BlackboxLoss<O>& loss,
                                           const PrefixParamSet& theta,
                                           std::span<const std::size_t> batch,
                                           const TensorSet& z, double fd_scale,
                                           double* center_loss = nullptr) {
  PrefixParamSet plus = theta, minus = theta;
  plus.Apply(fd_scale, z);
  minus.Apply(-fd_scale, z);
  const std::vector<double> lp = loss.Losses(plus, batch);
  const std::vector<double> lm = loss.Losses(minus, batch);
  std::vector<double> d(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    d[i] = (lp[i] - lm[i]) / (2.0 * fd_scale);
  }
  if (center_loss != nullptr) {
    double s = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) s += 0.5 * (lp[i] + lm[i]);
    *center_loss = s / static_cast<double>(batch.size());
  }
  return d;
}

inline double OrderedMean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace internal

// SPSA / MeZO estimate ((L(theta + eps z) - L(theta - eps z)) / (2 eps)) z
// from exactly two batch loss evaluations.
template <SampleObjective O>
SpsaEstimate SpsaEstimateGradient(const BlackboxLoss<O>& loss,
                                  const PrefixParamSet& theta,
                                  std::span<const std::size_t> batch,
                                  double fd_scale, std::uint64_t seed,
                                  std::uint64_t step) {
  if (!(fd_scale > 0.0)) throw ConfigError("fd_scale must be > 0");
  if (batch.empty()) throw DataError("spsa: empty batch");
  SpsaEstimate e;
  e.direction = ZoDirection(theta, seed, step);
  e.per_sample =
      internal::DirectionalDerivatives(loss, theta, batch, e.direction, fd_scale);
  e.directional_derivative = internal::OrderedMean(e.per_sample);
  e.update = e.direction;
  Scale(e.update, e.directional_derivative);
  return e;
}

struct DpZeroStats {
  std::vector<double> clipped;   // per-sample d_i after clipping
  double noisy_scalar = 0.0;     // mean(clipped) + g
  double batch_loss = 0.0;       // mean of (L+ + L-) / 2
  std::uint64_t noise_draws = 0;
};

inline std::vector<double> ClipScalars(std::vector<double> d, double clip) {
  for (double& x : d) x = std::clamp(x, -clip, clip);
  return d;
}

// DPZero: per-sample scalars clipped to |d_i| <= C, averaged, plus one
// Gaussian draw g ~ N(0, sigma^2 C^2 / B^2), then times z. The direction is
// replayed from its seed for the update instead of being kept around.
template <SampleObjective O>
DpZeroStats DpZeroStep(const BlackboxLoss<O>& loss, PrefixParamSet& theta,
                       std::span<const std::size_t> batch, const ZoConfig& zo,
                       OptimizerState& optimizer, std::uint64_t step) {
  zo.Validate();
  if (batch.empty()) throw DataError("dpzero: empty batch");
  DpZeroStats stats;
  {
    const TensorSet z = ZoDirection(theta, zo.seed, step);
    stats.clipped = ClipScalars(
        internal::DirectionalDerivatives(loss, theta, batch, z, zo.fd_scale,
                                         &stats.batch_loss),
        zo.clip_norm);
  }
  stats.noisy_scalar = internal::OrderedMean(stats.clipped);
  if (zo.noise_multiplier > 0.0) {
    RngStream noise(zo.seed, {"zo-noise", step, 0});
    const double stddev = zo.noise_multiplier * zo.clip_norm /
                          static_cast<double>(batch.size());
    stats.noisy_scalar += stddev * noise.Gaussian();
    stats.noise_draws = noise.gaussian_draws();
  }
  TensorSet update = ZoDirection(theta, zo.seed, step);
  Scale(update, stats.noisy_scalar);
  OptimizerStep(optimizer, theta, update);
  return stats;
}

struct BlackboxOptions {
  std::size_t epochs = 20;
  double sampling_rate = 0.25;
  double lr = 1e-3;
  double lambda = 0.0;
  // Called after every epoch with (1-based epoch, steps so far, theta).
  std::function<void(std::size_t, std::size_t, const PrefixParamSet&)> on_epoch;
};

struct BlackboxResult {
  PrefixParamSet theta;
  std::vector<double> step_losses;   // mean batch loss at theta +- eps z
  std::vector<double> epoch_losses;  // full-data loss after each epoch
  std::size_t steps = 0;
};

inline std::size_t StepsPerEpoch(double q) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / q)));
}

// DPZero training with SGD on L_f = L + lambda ||theta - w_nor||, the
// regularizer entering through the perturbed loss evaluations. With
// lambda > 0 a trained duplicate w_nor is required.
template <SampleObjective O>
BlackboxResult TrainBlackbox(const O& objective, PrefixParamSet theta,
                             const PrefixParamSet* w_nor, const ZoConfig& zo,
                             const BlackboxOptions& opts) {
  zo.Validate();
  if (opts.lambda > 0.0 && w_nor == nullptr) {
    throw ConfigError("black-box distillation requires a w_nor checkpoint");
  }
  const BlackboxLoss<O> loss = w_nor != nullptr && opts.lambda > 0.0
                                   ? BlackboxLoss<O>(objective, *w_nor, opts.lambda)
                                   : BlackboxLoss<O>(objective);
  OptimizerState sgd = OptimizerState::Sgd(theta, opts.lr);
  BlackboxResult result;
  const std::size_t per_epoch = StepsPerEpoch(opts.sampling_rate);
  std::uint64_t step = 0;
  const std::vector<std::size_t> all = AllIndices(objective.num_samples());
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t k = 0; k < per_epoch; ++k, ++step) {
      const std::vector<std::size_t> batch = PoissonBatch(
          zo.seed, step, objective.num_samples(), opts.sampling_rate);
      if (batch.empty()) continue;
      const DpZeroStats stats = DpZeroStep(loss, theta, batch, zo, sgd, step);
      result.step_losses.push_back(stats.batch_loss);
    }
    result.epoch_losses.push_back(MeanLoss<O>(objective, all).Value(theta));
    if (opts.on_epoch) opts.on_epoch(epoch + 1, step, theta);
  }
  result.steps = step;
  result.theta = std::move(theta);
  return result;
}

}  // namespace dpflat

#endif  // DPFLAT_ZEROTH_ORDER_H_
