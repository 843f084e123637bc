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

#ifndef DPFLAT_DP_H_
#define DPFLAT_DP_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpflat/errors.h"
#include "dpflat/objective.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"

namespace dpflat {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct PrivacySpec {
  double epsilon = 3.0;  // kInfinity means non-private
  double delta = 1e-5;
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;
  double sampling_rate = 0.25;
  std::size_t total_steps = 1;

  bool non_private() const { return std::isinf(epsilon); }

  void Validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0 or inf");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must be in (0,1)");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
    if (!(noise_multiplier >= 0.0)) {
      throw ConfigError("noise multiplier must be >= 0");
    }
    if (noise_multiplier == 0.0 && !non_private()) {
      throw ConfigError("zero noise is only allowed in non-private mode");
    }
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) {
      throw ConfigError("sampling rate must be in (0,1]");
    }
  }
};

// Scales each sample's gradient so that its l2 norm, taken over the
// concatenation of all slots, is at most clip_norm. Gradients already inside
// the ball are returned unchanged.
inline std::vector<TensorSet> ClipPerSample(std::vector<TensorSet> grads,
                                            double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!AllFinite(grads[i])) {
      throw NonFiniteGradient("non-finite gradient for sample " +
                              std::to_string(i));
    }
    const double norm = Norm(grads[i]);
    if (norm > clip_norm) Scale(grads[i], clip_norm / norm);
  }
  return grads;
}

// (sum_i g_i + N(0, sigma^2 C^2 I)) / batch_size. Noise is drawn slot by slot
// in slot order from the given stream; empty slots draw nothing. With
// sigma == 0 no draws are made and the result is the exact clipped mean.
inline TensorSet NoisyAggregate(std::span<const TensorSet> clipped,
                                double clip_norm, double noise_multiplier,
                                RngStream& stream) {
  if (clipped.empty()) throw ConfigError("noisy_aggregate: empty batch");
  TensorSet sum = ZerosLike(clipped.front());
  for (const TensorSet& g : clipped) Axpy(sum, 1.0, g);
  if (noise_multiplier > 0.0) {
    const double stddev = noise_multiplier * clip_norm;
    for (Tensor& t : sum) {
      for (double& v : t.values()) v += stddev * stream.Gaussian();
    }
  }
  Scale(sum, 1.0 / static_cast<double>(clipped.size()));
  return sum;
}

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  TensorSet m;  // first moments, one slot per layer
  TensorSet v;  // second moments

  static OptimizerState Adam(const PrefixParamSet& w, double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::kAdam;
    s.lr = lr;
    s.Reset(w);
    return s;
  }

  static OptimizerState Sgd(const PrefixParamSet& w, double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::kSgd;
    s.lr = lr;
    s.Reset(w);
    return s;
  }

  void Reset(const PrefixParamSet& w) {
    step = 0;
    m.clear();
    v.clear();
    for (const Tensor& t : w.layers) {
      m.push_back(Tensor::ZerosLike(t));
      v.push_back(Tensor::ZerosLike(t));
    }
  }
};

// The additive update the optimizer would apply for `grad`, advancing the
// optimizer state. Slots of inactive layers are empty.
inline TensorSet OptimizerUpdate(OptimizerState& state, const PrefixParamSet& w,
                                 const TensorSet& grad) {
  if (state.m.size() != w.layers.size()) {
    throw ConfigError("optimizer state does not match parameters");
  }
  ++state.step;
  TensorSet delta(w.layers.size());
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    if (!w.active[l] || grad[l].empty()) continue;
    const Tensor& g = grad[l];
    Tensor d = Tensor::ZerosLike(g);
    if (state.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = -(state.lr * g[i]);
    } else {
      Tensor& m = state.m[l];
      Tensor& v = state.v[l];
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        d[i] = -(state.lr * mhat / (std::sqrt(vhat) + state.eps));
      }
    }
    delta[l] = std::move(d);
  }
  return delta;
}

// One optimizer update w <- w + delta on active layers only.
inline void OptimizerStep(OptimizerState& state, PrefixParamSet& w,
                          const TensorSet& grad) {
  w.Apply(1.0, OptimizerUpdate(state, w, grad));
}

// Adam applied to an already clipped-and-noised gradient.
inline void DpAdamStep(OptimizerState& state, PrefixParamSet& w,
                       const TensorSet& noisy_grad) {
  if (state.kind != OptimizerKind::kAdam) {
    throw ConfigError("dp_adam_step requires an Adam optimizer state");
  }
  OptimizerStep(state, w, noisy_grad);
}

// Per-sample gradients of the given samples -> clipped -> noisy mean.
// `extra_grad`, when non-empty, is added to every per-sample gradient before
// clipping (a data-independent loss term such as a regularizer).
template <SampleObjective O>
TensorSet PrivatizedGradient(const O& objective, const PrefixParamSet& w,
                             std::span<const std::size_t> batch,
                             const PrivacySpec& privacy, RngStream& noise,
                             const TensorSet& extra_grad = {}) {
  std::vector<TensorSet> grads;
  grads.reserve(batch.size());
  for (std::size_t i : batch) {
    LossAndGrad r = objective.SampleLossAndGrad(w, i);
    if (!extra_grad.empty()) Axpy(r.grad, 1.0, extra_grad);
    grads.push_back(std::move(r.grad));
  }
  grads = ClipPerSample(std::move(grads), privacy.clip_norm);
  return NoisyAggregate(grads, privacy.clip_norm, privacy.noise_multiplier,
                        noise);
}

// Poisson subsampling: each index joins the batch independently with
// probability q. Draws come from the ("batch", step) stream.
inline std::vector<std::size_t> PoissonBatch(std::uint64_t root_seed,
                                             std::uint64_t step, std::size_t n,
                                             double q) {
  RngStream stream(root_seed, {"batch", step, 0});
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (stream.Uniform() < q) out.push_back(i);
  }
  return out;
}

}  // namespace dpflat

#endif  // DPFLAT_DP_H_
