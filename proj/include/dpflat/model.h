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

#ifndef DPFLAT_MODEL_H_
#define DPFLAT_MODEL_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpflat/dataset.h"
#include "dpflat/errors.h"
#include "dpflat/objective.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"

namespace dpflat {

struct ModelSpec {
  std::size_t n_layers = 4;
  std::size_t model_dim = 32;
  std::size_t heads = 2;
  std::size_t prefix_len = 4;
  std::size_t class_count = 2;
  std::size_t feature_dim = 16;
  std::size_t seq_len = 8;
  double prefix_init_scale = 0.025;
  // Fixed reparameterization: the injected key/value rows are
  // prefix_gain * w_l, so the rows start at scale prefix_gain *
  // prefix_init_scale = 0.5.
  double prefix_gain = 20.0;
  double head_scale = 1.0;  // 0 gives an all-zero classifier (uniform logits)
  std::uint64_t seed = 1;

  void Validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (model_dim == 0 || heads == 0 || model_dim % heads != 0) {
      throw ConfigError("model_dim must be a positive multiple of heads");
    }
    if (prefix_len == 0) throw ConfigError("prefix_len must be >= 1");
    if (class_count < 2) throw ConfigError("class_count must be >= 2");
    if (feature_dim == 0 || seq_len == 0) {
      throw ConfigError("feature_dim and seq_len must be positive");
    }
  }
};

namespace internal {

// C[n x m] = A[n x k] * B[k x m]
inline void MatMul(const double* a, const double* b, double* c, std::size_t n,
                   std::size_t k, std::size_t m) {
  std::fill(c, c + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * m;
      double* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n x k] += A[n x m] * B[k x m]^T
inline void MatMulAddBT(const double* a, const double* b, double* c,
                        std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < m; ++p) s += a[i * m + p] * b[j * m + p];
      c[i * k + j] += s;
    }
  }
}

}  // namespace internal

// A frozen random transformer encoder with per-layer prefix key/value
// pseudo-tokens. Layer l maps h -> h + Attn(h; prefix_l) -> h + MLP(h), with
// bidirectional multi-head attention over [prefix keys; token keys]. The
// classifier reads the mean-pooled final hidden state.
class PrefixTransformer {
 public:
  explicit PrefixTransformer(const ModelSpec& spec) : spec_(spec) {
    spec_.Validate();
    const std::size_t d = spec_.model_dim;
    const std::uint64_t seed = spec_.seed;
    auto draw = [&](std::uint64_t which, std::vector<std::size_t> shape,
                    double scale) {
      Tensor t = DrawGaussian(seed, {"backbone", which, 0}, std::move(shape));
      t *= scale;
      return t;
    };
    const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
    embed_ = draw(0, {spec_.feature_dim, d},
                  1.0 / std::sqrt(static_cast<double>(spec_.feature_dim)));
    position_ = draw(1, {spec_.seq_len, d}, 0.1);
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      const std::uint64_t base = 16 + 8 * l;
      Layer layer;
      layer.wq = draw(base + 0, {d, d}, s_d);
      layer.wk = draw(base + 1, {d, d}, s_d);
      layer.wv = draw(base + 2, {d, d}, s_d);
      layer.wo = draw(base + 3, {d, d}, s_d);
      layer.w1 = draw(base + 4, {d, d}, s_d);
      layer.w2 = draw(base + 5, {d, d}, s_d);
      layers_.push_back(std::move(layer));
    }
    classifier_ = draw(2, {d, spec_.class_count}, s_d * spec_.head_scale);
  }

  const ModelSpec& spec() const { return spec_; }

  std::size_t PrefixValuesPerLayer() const {
    return 2 * spec_.prefix_len * spec_.model_dim;
  }

  // Fresh prefixes for every layer, all active. Shape per layer is
  // {2, prefix_len, model_dim}: keys then values.
  PrefixParamSet InitPrefixes() const {
    PrefixParamSet w;
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      Tensor t = DrawGaussian(spec_.seed, {"prefix-init", l, 0},
                              {2, spec_.prefix_len, spec_.model_dim});
      t *= spec_.prefix_init_scale;
      w.layers.push_back(std::move(t));
      w.active.push_back(true);
    }
    return w;
  }

  std::vector<double> Logits(const PrefixParamSet& w,
                             const Tensor& features) const {
    Workspace ws;
    Forward(w, features, ws);
    return ws.logits;
  }

  double Loss(const PrefixParamSet& w, const Record& r) const {
    CheckLabel(r.label);
    Workspace ws;
    Forward(w, r.features, ws);
    return CrossEntropy(ws.logits, r.label);
  }

  LossAndGrad LossAndGradient(const PrefixParamSet& w, const Record& r) const {
    CheckLabel(r.label);
    Workspace ws;
    Forward(w, r.features, ws);
    LossAndGrad out{CrossEntropy(ws.logits, r.label), w.ZeroGrads()};
    Backward(w, r.label, ws, out.grad);
    return out;
  }

  int Predict(const PrefixParamSet& w, const Tensor& features) const {
    const std::vector<double> z = Logits(w, features);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }

 private:
  struct Layer {
    Tensor wq, wk, wv, wo, w1, w2;
  };

  struct LayerCache {
    std::vector<double> h_in;  // L x D
    std::vector<double> q;     // L x D
    std::vector<double> keys;  // (P+L) x D
    std::vector<double> vals;  // (P+L) x D
    std::vector<double> attn;  // H x L x (P+L)
    std::vector<double> h_mid; // L x D, after attention residual
    std::vector<double> act;   // L x D, tanh(h_mid W1)
    std::size_t prefix_rows = 0;
  };

  struct Workspace {
    std::vector<LayerCache> cache;
    std::vector<double> h_out;
    std::vector<double> logits;
  };

  void CheckLabel(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= spec_.class_count) {
      throw DataError("label " + std::to_string(label) + " out of range");
    }
  }

  static double CrossEntropy(const std::vector<double>& z, int label) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s) - z[static_cast<std::size_t>(label)];
  }

  void Forward(const PrefixParamSet& w, const Tensor& x, Workspace& ws) const {
    if (x.shape() != std::vector<std::size_t>{spec_.seq_len, spec_.feature_dim}) {
      throw DataError("feature shape does not match the model");
    }
    if (w.layers.size() != spec_.n_layers || w.active.size() != spec_.n_layers) {
      throw ConfigError("prefix set does not match the model depth");
    }
    const std::size_t L = spec_.seq_len, D = spec_.model_dim;
    const std::size_t H = spec_.heads, dh = D / H, P = spec_.prefix_len;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> h(L * D);
    internal::MatMul(x.data(), embed_.data(), h.data(), L, spec_.feature_dim, D);
    for (std::size_t i = 0; i < L * D; ++i) h[i] += position_[i];

    ws.cache.resize(spec_.n_layers);
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      const Layer& layer = layers_[l];
      LayerCache& c = ws.cache[l];
      const std::size_t pr = w.active[l] ? P : 0;
      const std::size_t S = pr + L;
      c.prefix_rows = pr;
      c.h_in = h;
      c.q.resize(L * D);
      c.keys.assign(S * D, 0.0);
      c.vals.assign(S * D, 0.0);
      internal::MatMul(h.data(), layer.wq.data(), c.q.data(), L, D, D);
      internal::MatMul(h.data(), layer.wk.data(), c.keys.data() + pr * D, L, D, D);
      internal::MatMul(h.data(), layer.wv.data(), c.vals.data() + pr * D, L, D, D);
      if (pr > 0) {
        const Tensor& pw = w.layers[l];
        const double gain = spec_.prefix_gain;
        for (std::size_t i = 0; i < P * D; ++i) {
          c.keys[i] = gain * pw[i];
          c.vals[i] = gain * pw[P * D + i];
        }
      }
      c.attn.assign(H * L * S, 0.0);
      std::vector<double> o(L * D, 0.0);
      for (std::size_t hd = 0; hd < H; ++hd) {
        const std::size_t off = hd * dh;
        for (std::size_t t = 0; t < L; ++t) {
          double* a = c.attn.data() + (hd * L + t) * S;
          double mx = -INFINITY;
          for (std::size_t s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dh; ++j) {
              acc += c.q[t * D + off + j] * c.keys[s * D + off + j];
            }
            a[s] = acc * scale;
            mx = std::max(mx, a[s]);
          }
          double z = 0.0;
          for (std::size_t s = 0; s < S; ++s) {
            a[s] = std::exp(a[s] - mx);
            z += a[s];
          }
          for (std::size_t s = 0; s < S; ++s) a[s] /= z;
          for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t j = 0; j < dh; ++j) {
              o[t * D + off + j] += a[s] * c.vals[s * D + off + j];
            }
          }
        }
      }
      std::vector<double> proj(L * D);
      internal::MatMul(o.data(), layer.wo.data(), proj.data(), L, D, D);
      c.h_mid.resize(L * D);
      for (std::size_t i = 0; i < L * D; ++i) c.h_mid[i] = h[i] + proj[i];
      c.act.resize(L * D);
      internal::MatMul(c.h_mid.data(), layer.w1.data(), c.act.data(), L, D, D);
      for (double& v : c.act) v = std::tanh(v);
      internal::MatMul(c.act.data(), layer.w2.data(), proj.data(), L, D, D);
      for (std::size_t i = 0; i < L * D; ++i) h[i] = c.h_mid[i] + proj[i];
    }
    ws.h_out = h;

    const std::size_t C = spec_.class_count;
    std::vector<double> pooled(D, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t j = 0; j < D; ++j) pooled[j] += h[t * D + j];
    }
    for (double& v : pooled) v /= static_cast<double>(L);
    ws.logits.assign(C, 0.0);
    internal::MatMul(pooled.data(), classifier_.data(), ws.logits.data(), 1, D, C);
  }

  void Backward(const PrefixParamSet& w, int label, const Workspace& ws,
                TensorSet& grads) const {
    const std::size_t L = spec_.seq_len, D = spec_.model_dim;
    const std::size_t H = spec_.heads, dh = D / H, P = spec_.prefix_len;
    const std::size_t C = spec_.class_count;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::size_t lowest_active = spec_.n_layers;
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      if (w.active[l]) {
        lowest_active = l;
        break;
      }
    }
    if (lowest_active == spec_.n_layers) return;

    // d loss / d logits = softmax - onehot
    std::vector<double> dz(C);
    const double mx = *std::max_element(ws.logits.begin(), ws.logits.end());
    double zsum = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      dz[k] = std::exp(ws.logits[k] - mx);
      zsum += dz[k];
    }
    for (std::size_t k = 0; k < C; ++k) dz[k] /= zsum;
    dz[static_cast<std::size_t>(label)] -= 1.0;

    std::vector<double> dpooled(D, 0.0);
    internal::MatMulAddBT(dz.data(), classifier_.data(), dpooled.data(), 1, C, D);
    std::vector<double> dh_cur(L * D);
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t j = 0; j < D; ++j) {
        dh_cur[t * D + j] = dpooled[j] / static_cast<double>(L);
      }
    }

    std::vector<double> dact(L * D), dmid(L * D), dout(L * D);
    for (std::size_t l = spec_.n_layers; l-- > lowest_active;) {
      const Layer& layer = layers_[l];
      const LayerCache& c = ws.cache[l];
      const std::size_t pr = c.prefix_rows;
      const std::size_t S = pr + L;

      // MLP residual: h_out = h_mid + tanh(h_mid W1) W2
      std::fill(dact.begin(), dact.end(), 0.0);
      internal::MatMulAddBT(dh_cur.data(), layer.w2.data(), dact.data(), L, D, D);
      for (std::size_t i = 0; i < L * D; ++i) {
        dact[i] *= 1.0 - c.act[i] * c.act[i];
      }
      dmid = dh_cur;
      internal::MatMulAddBT(dact.data(), layer.w1.data(), dmid.data(), L, D, D);

      // Attention residual: h_mid = h_in + O Wo
      std::fill(dout.begin(), dout.end(), 0.0);
      internal::MatMulAddBT(dmid.data(), layer.wo.data(), dout.data(), L, D, D);

      std::vector<double> dq(L * D, 0.0), dkeys(S * D, 0.0), dvals(S * D, 0.0);
      std::vector<double> da(S), ds(S);
      for (std::size_t hd = 0; hd < H; ++hd) {
        const std::size_t off = hd * dh;
        for (std::size_t t = 0; t < L; ++t) {
          const double* a = c.attn.data() + (hd * L + t) * S;
          double dot = 0.0;
          for (std::size_t s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dh; ++j) {
              const double g = dout[t * D + off + j];
              acc += g * c.vals[s * D + off + j];
              dvals[s * D + off + j] += a[s] * g;
            }
            da[s] = acc;
            dot += acc * a[s];
          }
          for (std::size_t s = 0; s < S; ++s) {
            ds[s] = a[s] * (da[s] - dot) * scale;
          }
          for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t j = 0; j < dh; ++j) {
              dq[t * D + off + j] += ds[s] * c.keys[s * D + off + j];
              dkeys[s * D + off + j] += ds[s] * c.q[t * D + off + j];
            }
          }
        }
      }
      if (pr > 0) {
        Tensor& g = grads[l];
        const double gain = spec_.prefix_gain;
        for (std::size_t i = 0; i < P * D; ++i) {
          g[i] = gain * dkeys[i];
          g[P * D + i] = gain * dvals[i];
        }
      }
      if (l == lowest_active) break;
      dh_cur = dmid;
      internal::MatMulAddBT(dq.data(), layer.wq.data(), dh_cur.data(), L, D, D);
      internal::MatMulAddBT(dkeys.data() + pr * D, layer.wk.data(),
                            dh_cur.data(), L, D, D);
      internal::MatMulAddBT(dvals.data() + pr * D, layer.wv.data(),
                            dh_cur.data(), L, D, D);
    }
  }

  ModelSpec spec_;
  Tensor embed_;
  Tensor position_;
  std::vector<Layer> layers_;
  Tensor classifier_;
};

struct BuiltModel {
  PrefixTransformer model;
  PrefixParamSet params;
};

inline BuiltModel BuildPrefixTransformer(const ModelSpec& spec) {
  PrefixTransformer model(spec);
  PrefixParamSet params = model.InitPrefixes();
  return {std::move(model), std::move(params)};
}

// Binds a model to a list of records so it satisfies SampleObjective.
class ClassificationObjective {
 public:
  ClassificationObjective(const PrefixTransformer& model,
                          std::span<const Record> records)
      : model_(&model), records_(records) {}

  std::size_t num_samples() const { return records_.size(); }

  double SampleLoss(const PrefixParamSet& w, std::size_t i) const {
    return model_->Loss(w, records_[i]);
  }

  LossAndGrad SampleLossAndGrad(const PrefixParamSet& w, std::size_t i) const {
    return model_->LossAndGradient(w, records_[i]);
  }

  const PrefixTransformer& model() const { return *model_; }
  std::span<const Record> records() const { return records_; }

 private:
  const PrefixTransformer* model_;
  std::span<const Record> records_;
};

inline std::vector<double> PerSampleLosses(const PrefixTransformer& model,
                                           const PrefixParamSet& w,
                                           std::span<const Record> batch) {
  if (batch.empty()) throw DataError("per_sample_losses: empty batch");
  std::vector<double> out;
  out.reserve(batch.size());
  for (const Record& r : batch) out.push_back(model.Loss(w, r));
  return out;
}

inline double Accuracy(const PrefixTransformer& model, const PrefixParamSet& w,
                       std::span<const Record> records) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Record& r : records) {
    hits += model.Predict(w, r.features) == r.label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace dpflat

#endif  // DPFLAT_MODEL_H_
