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

#ifndef DPFLAT_FLATNESS_H_
#define DPFLAT_FLATNESS_H_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/objective.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"

namespace dpflat {

// A scalar objective that can be evaluated with or without its gradient.
template <class F>
concept ScalarObjective = Differentiable<F> && requires(const F& f,
                                                        const PrefixParamSet& w) {
  { f.Value(w) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// Within-layer flattening (adversarial weight perturbation)
// ---------------------------------------------------------------------------

struct AwpConfig {
  double gamma = 0.01;             // relative l2 budget per layer
  std::size_t warmup_epochs = 2;   // AWP active while epoch <= warmup_epochs

  void Validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("AWP gamma must be >= 0");
  }
};

// One ascent step: v_l = gamma * ||w_l|| * g_l / ||g_l|| for each active
// layer l, with g the (unclipped, noise-free) gradient. Layers with a zero
// gradient get v_l = 0.
template <Differentiable F>
TensorSet AwpPerturbation(const F& loss, const PrefixParamSet& w, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("AWP gamma must be >= 0");
  TensorSet v = w.ZeroGrads();
  if (gamma == 0.0) return v;
  const TensorSet g = Grad(loss, w);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    if (!w.active[l]) continue;
    const double gn = g[l].Norm();
    if (gn == 0.0) continue;
    const double scale = gamma * w.layers[l].Norm() / gn;
    v[l] = scale * g[l];
  }
  return v;
}

// AWP descent step around w:
//   w <- (w + v) - lr * privatized_grad(w + v) - v  ==  w + update(w + v)
// The ascent gradient for v sees neither clipping nor noise; only the final
// gradient goes through the clip-and-noise path. `extra_grad` is a
// data-independent term (the distillation gradient at w) added to every
// per-sample gradient.
template <SampleObjective O>
void AwpUpdate(const O& objective, PrefixParamSet& w,
               std::span<const std::size_t> batch, double gamma,
               OptimizerState& optimizer, const PrivacySpec& privacy,
               RngStream& noise, const TensorSet& extra_grad = {}) {
  PrefixParamSet perturbed = w;
  if (gamma > 0.0) {
    perturbed.Apply(1.0, AwpPerturbation(MeanLoss<O>(objective, batch), w, gamma));
  }
  const TensorSet g =
      PrivatizedGradient(objective, perturbed, batch, privacy, noise, extra_grad);
  w.Apply(1.0, OptimizerUpdate(optimizer, perturbed, g));
}

// ---------------------------------------------------------------------------
// Sharpness along the negative-gradient ray
// ---------------------------------------------------------------------------

struct SharpnessReport {
  std::vector<double> eta_grid;
  std::vector<double> losses;
  double base_loss = 0.0;
  double sharpness = 0.0;
};

inline constexpr std::size_t kDefaultEtaPoints = 21;

// S = max_eta (L(w - eta * grad L(w)) - L(w)) / (1 + L(w)) over eta_points
// values spaced uniformly on [0, 1]. eta = 0 is on the grid, so S >= 0.
template <ScalarObjective F>
SharpnessReport Sharpness(const F& loss, const PrefixParamSet& w,
                          std::size_t eta_points = kDefaultEtaPoints) {
  if (eta_points < 2) throw ConfigError("sharpness needs at least 2 eta points");
  LossAndGrad center = loss.ValueAndGrad(w);
  if (!std::isfinite(center.loss) || !AllFinite(center.grad)) {
    throw NonFiniteLoss("non-finite loss or gradient at sharpness center");
  }
  SharpnessReport r;
  r.base_loss = center.loss;
  double worst = 0.0;
  for (std::size_t k = 0; k < eta_points; ++k) {
    const double eta =
        static_cast<double>(k) / static_cast<double>(eta_points - 1);
    double value = center.loss;
    if (k > 0) {
      PrefixParamSet probe = w;
      probe.Apply(-eta, center.grad);
      value = loss.Value(probe);
    }
    r.eta_grid.push_back(eta);
    r.losses.push_back(value);
    worst = std::max(worst, value - center.loss);
  }
  r.sharpness = worst / (1.0 + center.loss);
  return r;
}

// ---------------------------------------------------------------------------
// Cross-layer flattening (greedy prefix elimination)
// ---------------------------------------------------------------------------

struct EliminationRound {
  std::vector<std::size_t> candidate_layers;
  std::vector<double> candidate_sharpness;
  std::size_t removed_layer = 0;
  double min_sharpness = 0.0;
};

struct EliminationTrace {
  double initial_sharpness = 0.0;
  std::vector<EliminationRound> rounds;
  std::vector<bool> active_mask;
};

// Removes one prefix layer per round, always the one whose removal gives the
// lowest sharpness at the fixed initialization (ties -> lowest index). Stops
// after `rounds` rounds, once at most `keep_at_least` layers remain, when
// only one layer is left, or when no removal lowers the current sharpness.
// `make_loss()` returns the ScalarObjective of the evaluation set; it is called
// once per sharpness evaluation.
template <class MakeLoss>
EliminationTrace GreedyEliminate(const PrefixParamSet& init, MakeLoss&& make_loss,
                                 std::size_t rounds, std::size_t keep_at_least,
                                 std::size_t eta_points = kDefaultEtaPoints) {
  init.Validate();
  if (init.num_active() == 0) throw ConfigError("no active prefix layer");
  EliminationTrace trace;
  PrefixParamSet current = init;
  double current_s = Sharpness(make_loss(), current, eta_points).sharpness;
  trace.initial_sharpness = current_s;
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::size_t remaining = current.num_active();
    if (remaining <= 1 || remaining <= keep_at_least) break;
    EliminationRound round;
    round.min_sharpness = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < current.num_layers(); ++i) {
      if (!current.active[i]) continue;
      PrefixParamSet candidate = current;
      candidate.active[i] = false;
      const double s = Sharpness(make_loss(), candidate, eta_points).sharpness;
      round.candidate_layers.push_back(i);
      round.candidate_sharpness.push_back(s);
      if (s < round.min_sharpness) {
        round.min_sharpness = s;
        round.removed_layer = i;
      }
    }
    if (!(round.min_sharpness < current_s)) break;
    current.active[round.removed_layer] = false;
    current_s = round.min_sharpness;
    trace.rounds.push_back(std::move(round));
  }
  trace.active_mask = current.active;
  return trace;
}

// ---------------------------------------------------------------------------
// Cross-model flattening (distillation toward the non-private duplicate)
// ---------------------------------------------------------------------------

struct DistillConfig {
  double lambda = 0.01;

  void Validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  }
};

// ||w - w_nor||_2 over active layers.
inline double DistillDistance(const PrefixParamSet& w,
                              const PrefixParamSet& w_nor) {
  if (w.layers.size() != w_nor.layers.size()) {
    throw ConfigError("distillation: layer count mismatch");
  }
  double s = 0.0;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    if (!w.active[l]) continue;
    const Tensor& a = w.layers[l];
    const Tensor& b = w_nor.layers[l];
    if (!a.SameShape(b)) throw ConfigError("distillation: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

// L_f = base_loss + lambda * ||w - w_nor||_2
inline double DistillLoss(double base_loss, const PrefixParamSet& w,
                          const PrefixParamSet& w_nor, double lambda) {
  if (lambda == 0.0) {
    DistillDistance(w, w_nor);  // still validates shapes
    return base_loss;
  }
  return base_loss + lambda * DistillDistance(w, w_nor);
}

// Gradient of lambda * ||w - w_nor||_2; zero subgradient at w == w_nor.
inline TensorSet DistillGradient(const PrefixParamSet& w,
                                 const PrefixParamSet& w_nor, double lambda) {
  TensorSet g = w.ZeroGrads();
  const double dist = DistillDistance(w, w_nor);
  if (dist == 0.0 || lambda == 0.0) return g;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    if (!w.active[l]) continue;
    for (std::size_t i = 0; i < g[l].size(); ++i) {
      g[l][i] = lambda * (w.layers[l][i] - w_nor.layers[l][i]) / dist;
    }
  }
  return g;
}

// base + lambda * ||w - w_nor||, as a ScalarObjective.
template <ScalarObjective F>
class DistilledLoss {
 public:
  DistilledLoss(const F& base, const PrefixParamSet& w_nor, double lambda)
      : base_(base), w_nor_(w_nor), lambda_(lambda) {}

  double Value(const PrefixParamSet& w) const {
    return DistillLoss(base_.Value(w), w, w_nor_, lambda_);
  }

  LossAndGrad ValueAndGrad(const PrefixParamSet& w) const {
    LossAndGrad r = base_.ValueAndGrad(w);
    r.loss = DistillLoss(r.loss, w, w_nor_, lambda_);
    Axpy(r.grad, 1.0, DistillGradient(w, w_nor_, lambda_));
    return r;
  }

 private:
  const F& base_;
  const PrefixParamSet& w_nor_;
  double lambda_;
};

// ---------------------------------------------------------------------------
// Loss landscape along random directions
// ---------------------------------------------------------------------------

struct LandscapePoint {
  std::size_t direction = 0;
  double eta = 0.0;
  double loss = 0.0;
};

// 41 points, symmetric on [-1, 1].
inline std::vector<double> DefaultLandscapeMagnitudes() {
  std::vector<double> m;
  for (int k = -20; k <= 20; ++k) m.push_back(k / 20.0);
  return m;
}

// f(eta) = L(w + eta * d) for unit-norm Gaussian directions d over the active
// layers. Direction k draws from the ("landscape", k) stream.
template <ScalarObjective F>
std::vector<LandscapePoint> LandscapeScan(const F& loss, const PrefixParamSet& w,
                                          std::span<const double> magnitudes,
                                          std::size_t n_directions,
                                          std::uint64_t root_seed) {
  if (magnitudes.empty()) throw ConfigError("landscape needs magnitudes");
  std::vector<LandscapePoint> out;
  const double center = loss.Value(w);
  for (std::size_t k = 0; k < n_directions; ++k) {
    RngStream stream(root_seed, {"landscape", k, 0});
    TensorSet d = w.ZeroGrads();
    for (Tensor& t : d) {
      for (double& x : t.values()) x = stream.Gaussian();
    }
    const double n = Norm(d);
    if (n > 0.0) Scale(d, 1.0 / n);
    for (double eta : magnitudes) {
      double value = center;
      if (eta != 0.0) {
        PrefixParamSet probe = w;
        probe.Apply(eta, d);
        value = loss.Value(probe);
      }
      out.push_back({k, eta, value});
    }
  }
  return out;
}

}  // namespace dpflat

#endif  // DPFLAT_FLATNESS_H_
