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

#ifndef DPFLAT_OBJECTIVE_H_
#define DPFLAT_OBJECTIVE_H_

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpflat/errors.h"
#include "dpflat/tensor.h"

namespace dpflat {

// Trainable prefix weights w = [w_1..w_n], one tensor per layer, plus the
// per-layer active mask. Inactive layers keep their values but take no part
// in the forward pass, gradients, clipping, or noise.
struct PrefixParamSet {
  std::vector<Tensor> layers;
  std::vector<bool> active;

  std::size_t num_layers() const { return layers.size(); }

  std::size_t num_active() const {
    std::size_t n = 0;
    for (bool a : active) n += a ? 1 : 0;
    return n;
  }

  std::size_t ActiveParameterCount() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (active[l]) n += layers[l].size();
    }
    return n;
  }

  // Gradient-shaped zeros: zero tensors for active layers, empty slots for
  // inactive ones.
  TensorSet ZeroGrads() const {
    TensorSet out(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (active[l]) out[l] = Tensor::ZerosLike(layers[l]);
    }
    return out;
  }

  // Active-layer values as a gradient-shaped set.
  TensorSet ActiveValues() const {
    TensorSet out(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (active[l]) out[l] = layers[l];
    }
    return out;
  }

  // w += alpha * delta on active layers.
  void Apply(double alpha, const TensorSet& delta) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (active[l] && !delta[l].empty()) layers[l].Axpy(alpha, delta[l]);
    }
  }

  void Validate() const {
    if (layers.empty()) throw ConfigError("prefix set needs at least one layer");
    if (active.size() != layers.size()) {
      throw ConfigError("active mask length does not match layer count");
    }
  }

  friend bool operator==(const PrefixParamSet&, const PrefixParamSet&) = default;
};

struct LossAndGrad {
  double loss = 0.0;
  TensorSet grad;
};

// A per-sample differentiable objective over prefix parameters. Sample
// indices refer to whatever data the objective is bound to.
template <class O>
concept SampleObjective = requires(const O& o, const PrefixParamSet& w,
                                   std::size_t i) {
  { o.num_samples() } -> std::convertible_to<std::size_t>;
  { o.SampleLoss(w, i) } -> std::convertible_to<double>;
  { o.SampleLossAndGrad(w, i) } -> std::same_as<LossAndGrad>;
};

// A scalar differentiable function of the parameters.
template <class F>
concept Differentiable = requires(const F& f, const PrefixParamSet& w) {
  { f.ValueAndGrad(w) } -> std::same_as<LossAndGrad>;
};

inline std::string LayerName(std::size_t l) {
  return "prefix[" + std::to_string(l) + "]";
}

// Reverse-mode gradient with finiteness checks. Returns one slot per layer;
// inactive layers are empty.
template <Differentiable F>
TensorSet Grad(const F& f, const PrefixParamSet& w) {
  LossAndGrad r = f.ValueAndGrad(w);
  for (std::size_t l = 0; l < r.grad.size(); ++l) {
    if (!r.grad[l].AllFinite()) {
      throw NonFiniteLoss("non-finite gradient in " + LayerName(l));
    }
  }
  if (!std::isfinite(r.loss)) {
    std::string where = "all parameters";
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      if (w.active[l]) {
        where = LayerName(l);
        break;
      }
    }
    throw NonFiniteLoss("non-finite loss at " + where);
  }
  return std::move(r.grad);
}

// Mean loss over the given samples of an objective, as a Differentiable.
template <SampleObjective O>
class MeanLoss {
 public:
  MeanLoss(const O& objective, std::span<const std::size_t> indices)
      : objective_(objective), indices_(indices) {}

  double Value(const PrefixParamSet& w) const {
    double s = 0.0;
    for (std::size_t i : indices_) s += objective_.SampleLoss(w, i);
    return s / static_cast<double>(indices_.size());
  }

  LossAndGrad ValueAndGrad(const PrefixParamSet& w) const {
    LossAndGrad out{0.0, w.ZeroGrads()};
    for (std::size_t i : indices_) {
      LossAndGrad r = objective_.SampleLossAndGrad(w, i);
      out.loss += r.loss;
      Axpy(out.grad, 1.0, r.grad);
    }
    const double n = static_cast<double>(indices_.size());
    out.loss /= n;
    Scale(out.grad, 1.0 / n);
    return out;
  }

 private:
  const O& objective_;
  std::span<const std::size_t> indices_;
};

template <SampleObjective O>
std::vector<double> PerSampleLosses(const O& objective, const PrefixParamSet& w,
                                    std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(objective.SampleLoss(w, i));
  return out;
}

template <SampleObjective O>
std::vector<LossAndGrad> PerSampleGrads(const O& objective,
                                        const PrefixParamSet& w,
                                        std::span<const std::size_t> indices) {
  std::vector<LossAndGrad> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(objective.SampleLossAndGrad(w, i));
  return out;
}

inline std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

template <SampleObjective O>
double EvaluateLoss(const O& objective, const PrefixParamSet& w) {
  const std::vector<std::size_t> idx = AllIndices(objective.num_samples());
  return MeanLoss<O>(objective, idx).Value(w);
}

}  // namespace dpflat

#endif  // DPFLAT_OBJECTIVE_H_
