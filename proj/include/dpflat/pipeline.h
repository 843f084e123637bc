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

#ifndef DPFLAT_PIPELINE_H_
#define DPFLAT_PIPELINE_H_

#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpflat/accountant.h"
#include "dpflat/checkpoint.h"
#include "dpflat/config.h"
#include "dpflat/dataset.h"
#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/flatness.h"
#include "dpflat/metrics.h"
#include "dpflat/mia.h"
#include "dpflat/model.h"
#include "dpflat/objective.h"
#include "dpflat/rng.h"
#include "dpflat/zeroth_order.h"

namespace dpflat {

// Dataset, frozen model, and initial prefixes of one experiment. Everything
// here is a pure function of the config (and so of the root seed).
struct Experiment {
  ExperimentConfig config;
  SyntheticDataset dataset;
  PrefixTransformer model;
  PrefixParamSet init;

  explicit Experiment(const ExperimentConfig& c)
      : config(c),
        dataset(MakeSyntheticDataset(c.ResolvedData())),
        model(c.ResolvedModel()),
        init(model.InitPrefixes()) {}

  ClassificationObjective members() const {
    return ClassificationObjective(model, dataset.members);
  }

  // Indices of the member samples used for sharpness and elimination.
  std::vector<std::size_t> SharpnessIndices() const {
    std::size_t n = dataset.members.size();
    if (config.sharpness_subset > 0) n = std::min(n, config.sharpness_subset);
    return AllIndices(n);
  }

  double MemberLoss(const PrefixParamSet& w) const {
    return PerSampleMean(PerSampleLosses(model, w, dataset.members));
  }

  double TestAccuracy(const PrefixParamSet& w) const {
    return Accuracy(model, w, dataset.non_members);
  }

  SharpnessReport SharpnessOf(const PrefixParamSet& w) const {
    const ClassificationObjective obj = members();
    const std::vector<std::size_t> idx = SharpnessIndices();
    return Sharpness(MeanLoss<ClassificationObjective>(obj, idx), w,
                     config.eta_points);
  }

  MiaReport Attack(const PrefixParamSet& w) const {
    const std::vector<double> in = PerSampleLosses(model, w, dataset.members);
    const std::vector<double> out = PerSampleLosses(model, w, dataset.non_members);
    return LossThresholdAttack(in, out, config.mia_fraction);
  }

  EliminationTrace Eliminate(const PrefixParamSet& w) const {
    const ClassificationObjective obj = members();
    const std::vector<std::size_t> idx = SharpnessIndices();
    return GreedyEliminate(
        w, [&] { return MeanLoss<ClassificationObjective>(obj, idx); },
        config.elimination_rounds, config.keep_layers, config.eta_points);
  }

  static double PerSampleMean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

// Seeds of the independent phases of a run.
inline std::uint64_t PhaseSeed(std::uint64_t root, std::string_view phase) {
  return RngStream::Derive(root, {phase, 0, 0});
}

struct RunOptions {
  std::string metrics_path;     // JSON lines; empty: no file
  std::string summary_path;     // CSV summary; empty: no file
  std::string checkpoint_path;  // written at the end (or at stop/abort)
  std::string resume_from;      // checkpoint to continue from
  std::optional<std::size_t> stop_after_epoch;
  bool probe_sharpness_each_epoch = false;
  bool include_wall_time = true;
  bool final_evaluation = true;
};

struct RunResult {
  PrefixParamSet params;
  std::optional<PrefixParamSet> w_nor;
  std::optional<EliminationTrace> trace;
  double sigma = 0.0;
  double spent_epsilon = 0.0;
  std::size_t steps = 0;
  bool completed = false;
  std::vector<MetricsRecord> metrics;
  // Final evaluation (when requested).
  double test_accuracy = 0.0;
  double train_loss = 0.0;
  std::optional<SharpnessReport> sharpness;
  std::optional<MiaReport> mia;
};

struct ResolvedPrivacy {
  PrivacySpec spec;
  double target_epsilon = 0.0;
};

// Noise multiplier and clip bound for a run of `total_steps` steps. A finite
// target epsilon calibrates sigma unless the config pins it.
inline ResolvedPrivacy ResolvePrivacy(const ExperimentConfig& c,
                                      std::size_t total_steps, double clip_norm) {
  ResolvedPrivacy r;
  r.target_epsilon = c.epsilon;
  r.spec.delta = c.Delta();
  r.spec.sampling_rate = c.SamplingRate();
  r.spec.total_steps = total_steps;
  if (c.NonPrivate()) {
    r.spec.epsilon = kInfinity;
    r.spec.clip_norm = kInfinity;
    r.spec.noise_multiplier = 0.0;
    return r;
  }
  r.spec.epsilon = c.epsilon;
  r.spec.clip_norm = clip_norm;
  r.spec.noise_multiplier =
      c.sigma >= 0.0 ? c.sigma
                     : CalibrateSigma(c.epsilon, r.spec.delta, r.spec.sampling_rate,
                                      static_cast<double>(total_steps))
                           .sigma;
  return r;
}

namespace internal {

inline Checkpoint MakeCheckpoint(const ExperimentConfig& c, std::size_t epoch,
                                 std::size_t step, const PrefixParamSet& w,
                                 const std::optional<PrefixParamSet>& w_nor,
                                 const OptimizerState* opt) {
  Checkpoint ck;
  ck.root_seed = c.seed;
  ck.config_digest = ConfigDigest(c);
  ck.epoch = epoch;
  ck.step = step;
  ck.active_mask = w.active;
  ck.PutLayers("w", w.layers);
  if (w_nor) ck.PutLayers("w_nor", w_nor->layers);
  if (opt != nullptr) {
    ck.PutLayers("opt.m", opt->m);
    ck.PutLayers("opt.v", opt->v);
    ck.Put("opt.step", Tensor::Vector({static_cast<double>(opt->step)}));
  }
  return ck;
}

inline void CheckResumable(const Checkpoint& ck, const ExperimentConfig& c) {
  if (ck.config_digest != ConfigDigest(c)) {
    throw ConfigError("checkpoint config digest does not match the config");
  }
  if (ck.root_seed != c.seed) throw ConfigError("checkpoint seed mismatch");
}

class Stopwatch {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void FinalEvaluation(const Experiment& ex, RunResult& r) {
  r.test_accuracy = ex.TestAccuracy(r.params);
  r.train_loss = ex.MemberLoss(r.params);
  r.sharpness = ex.SharpnessOf(r.params);
  r.mia = ex.Attack(r.params);
}

inline void WriteSummary(const std::string& path,
                         const std::vector<MetricsRecord>& records) {
  if (path.empty()) return;
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open summary " + path);
  WriteMetricsCsv(records, os);
}

}  // namespace internal

// Non-private training of the duplicate w_nor: minibatch Adam on the plain
// loss, same initialization and mask as w.
inline PrefixParamSet TrainDuplicate(const Experiment& ex, PrefixParamSet w_nor) {
  const ExperimentConfig& c = ex.config;
  const ClassificationObjective obj = ex.members();
  const std::uint64_t seed = PhaseSeed(c.seed, "phase-nor");
  OptimizerState adam = OptimizerState::Adam(w_nor, c.lr);
  const std::size_t per_epoch = c.StepsPerEpoch();
  std::uint64_t step = 0;
  for (std::size_t e = 0; e < c.epochs_nor; ++e) {
    for (std::size_t k = 0; k < per_epoch; ++k, ++step) {
      const std::vector<std::size_t> batch =
          PoissonBatch(seed, step, obj.num_samples(), c.SamplingRate());
      if (batch.empty()) continue;
      const TensorSet g = Grad(MeanLoss<ClassificationObjective>(obj, batch), w_nor);
      OptimizerStep(adam, w_nor, g);
    }
  }
  return w_nor;
}

// White-box pipeline: (1) greedy prefix elimination when cross-layer
// flattening is on, (2) non-private training of the duplicate when
// cross-model flattening is on, (3) DP-Adam over T_dp epochs with AWP in the
// first E epochs (within-layer) and the distillation term (cross-model).
inline RunResult TrainWhitebox(const ExperimentConfig& config,
                               const RunOptions& options = {}) {
  config.Validate();
  if (config.mode != Mode::kWhiteBox) {
    throw ConfigError("train_whitebox requires white-box mode");
  }
  internal::Stopwatch clock;
  const Experiment ex(config);
  const ClassificationObjective obj = ex.members();
  const bool use_awp = config.within_layer;
  const bool use_distill = config.cross_model && config.lambda > 0.0;

  const std::size_t per_epoch = config.StepsPerEpoch();
  const std::size_t total_steps = per_epoch * config.epochs_dp;
  const ResolvedPrivacy privacy =
      ResolvePrivacy(config, total_steps, config.clip_norm);
  const PrivacyAccountant accountant(privacy.spec.noise_multiplier,
                                     privacy.spec.sampling_rate, privacy.spec.delta);

  RunResult result;
  result.sigma = privacy.spec.noise_multiplier;
  PrefixParamSet w = ex.init;
  std::optional<PrefixParamSet> w_nor;
  OptimizerState adam;
  std::size_t start_epoch = 0;
  std::uint64_t step = 0;

  if (!options.resume_from.empty()) {
    const Checkpoint ck = LoadCheckpoint(options.resume_from);
    internal::CheckResumable(ck, config);
    w = ck.Params("w");
    if (ck.HasLayers("w_nor")) w_nor = ck.Params("w_nor");
    adam = OptimizerState::Adam(w, config.lr);
    adam.m = ck.GetLayers("opt.m", w.num_layers());
    adam.v = ck.GetLayers("opt.v", w.num_layers());
    adam.step = static_cast<std::uint64_t>(ck.Get("opt.step")[0]);
    start_epoch = ck.epoch;
    step = ck.step;
  } else {
    if (config.cross_layer) {
      result.trace = ex.Eliminate(w);
      w.active = result.trace->active_mask;
    }
    if (use_distill) w_nor = TrainDuplicate(ex, w);
    adam = OptimizerState::Adam(w, config.lr);
  }

  MetricsLog log(options.metrics_path, options.include_wall_time,
                 /*append=*/!options.resume_from.empty());
  const std::uint64_t seed = PhaseSeed(config.seed, "phase-dp");
  auto save = [&](std::size_t epoch) {
    if (options.checkpoint_path.empty()) return;
    SaveCheckpoint(internal::MakeCheckpoint(config, epoch, step, w, w_nor, &adam),
                   options.checkpoint_path);
  };

  for (std::size_t epoch = start_epoch + 1; epoch <= config.epochs_dp; ++epoch) {
    for (std::size_t k = 0; k < per_epoch; ++k, ++step) {
      if (!privacy.spec.non_private() &&
          accountant.EpsilonAfter(step + 1) > privacy.target_epsilon) {
        save(epoch - 1);
        throw PrivacyBudgetExceeded("step " + std::to_string(step + 1) +
                                    " would exceed the privacy budget");
      }
      const std::vector<std::size_t> batch =
          PoissonBatch(seed, step, obj.num_samples(), privacy.spec.sampling_rate);
      if (batch.empty()) continue;
      RngStream noise(seed, {"dp-noise", step, 0});
      const TensorSet extra =
          use_distill ? DistillGradient(w, *w_nor, config.lambda) : TensorSet{};
      if (use_awp && epoch <= config.warmup_epochs) {
        AwpUpdate(obj, w, batch, config.gamma, adam, privacy.spec, noise, extra);
      } else {
        const TensorSet g =
            PrivatizedGradient(obj, w, batch, privacy.spec, noise, extra);
        DpAdamStep(adam, w, g);
      }
    }
    MetricsRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.loss = ex.MemberLoss(w);
    rec.l_g = w_nor ? DistillDistance(w, *w_nor) : 0.0;
    rec.accuracy = ex.TestAccuracy(w);
    if (options.probe_sharpness_each_epoch) rec.sharpness = ex.SharpnessOf(w).sharpness;
    rec.spent_epsilon = accountant.EpsilonAfter(step);
    rec.wall_time = clock.Seconds();
    log.Append(rec);
    result.metrics.push_back(rec);
    if (options.stop_after_epoch && epoch == *options.stop_after_epoch &&
        epoch < config.epochs_dp) {
      save(epoch);
      result.params = w;
      result.w_nor = w_nor;
      result.steps = step;
      result.spent_epsilon = accountant.EpsilonAfter(step);
      return result;
    }
  }
  save(config.epochs_dp);
  result.completed = true;
  result.steps = step;
  result.spent_epsilon = accountant.EpsilonAfter(step);
  result.params = std::move(w);
  result.w_nor = std::move(w_nor);
  internal::WriteSummary(options.summary_path, result.metrics);
  if (options.final_evaluation) internal::FinalEvaluation(ex, result);
  return result;
}

// Black-box pipeline: the duplicate is trained with non-private SPSA, then
// DPZero minimizes L + lambda ||theta - w_nor|| with the same accountant.
inline RunResult TrainBlackboxExperiment(const ExperimentConfig& config,
                                         const RunOptions& options = {}) {
  config.Validate();
  if (config.mode != Mode::kBlackBox) {
    throw ConfigError("zo training requires black-box mode");
  }
  internal::Stopwatch clock;
  const Experiment ex(config);
  const ClassificationObjective obj = ex.members();
  const bool use_distill = config.cross_model && config.lambda > 0.0;
  const std::size_t per_epoch = config.StepsPerEpoch();
  const std::size_t total_steps = per_epoch * config.epochs_dp;
  const ResolvedPrivacy privacy = ResolvePrivacy(config, total_steps, config.zo_clip);
  const PrivacyAccountant accountant(privacy.spec.noise_multiplier,
                                     privacy.spec.sampling_rate, privacy.spec.delta);

  RunResult result;
  result.sigma = privacy.spec.noise_multiplier;
  std::optional<PrefixParamSet> w_nor;
  if (use_distill) {
    ZoConfig nor;
    nor.fd_scale = config.zo_fd_scale;
    nor.clip_norm = kInfinity;
    nor.noise_multiplier = 0.0;
    nor.seed = PhaseSeed(config.seed, "phase-nor");
    BlackboxOptions o;
    o.epochs = config.epochs_nor;
    o.sampling_rate = config.SamplingRate();
    o.lr = config.zo_lr;
    w_nor = TrainBlackbox(obj, ex.init, nullptr, nor, o).theta;
  }

  MetricsLog log(options.metrics_path, options.include_wall_time, false);
  ZoConfig zo;
  zo.fd_scale = config.zo_fd_scale;
  zo.clip_norm = privacy.spec.clip_norm;
  zo.noise_multiplier = privacy.spec.noise_multiplier;
  zo.seed = PhaseSeed(config.seed, "phase-dp");
  BlackboxOptions o;
  o.epochs = config.epochs_dp;
  o.sampling_rate = config.SamplingRate();
  o.lr = config.zo_lr;
  o.lambda = use_distill ? config.lambda : 0.0;
  o.on_epoch = [&](std::size_t epoch, std::size_t step, const PrefixParamSet& theta) {
    MetricsRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.loss = ex.MemberLoss(theta);
    rec.l_g = w_nor ? DistillDistance(theta, *w_nor) : 0.0;
    rec.accuracy = ex.TestAccuracy(theta);
    if (options.probe_sharpness_each_epoch) {
      rec.sharpness = ex.SharpnessOf(theta).sharpness;
    }
    rec.spent_epsilon = accountant.EpsilonAfter(step);
    rec.wall_time = clock.Seconds();
    log.Append(rec);
    result.metrics.push_back(rec);
  };
  BlackboxResult trained =
      TrainBlackbox(obj, ex.init, w_nor ? &*w_nor : nullptr, zo, o);
  result.params = std::move(trained.theta);
  result.w_nor = std::move(w_nor);
  result.steps = trained.steps;
  result.spent_epsilon = accountant.EpsilonAfter(trained.steps);
  result.completed = true;
  if (!options.checkpoint_path.empty()) {
    SaveCheckpoint(internal::MakeCheckpoint(config, config.epochs_dp, result.steps,
                                            result.params, result.w_nor, nullptr),
                   options.checkpoint_path);
  }
  internal::WriteSummary(options.summary_path, result.metrics);
  if (options.final_evaluation) internal::FinalEvaluation(ex, result);
  return result;
}

inline RunResult RunExperiment(const ExperimentConfig& config,
                               const RunOptions& options = {}) {
  return config.mode == Mode::kWhiteBox ? TrainWhitebox(config, options)
                                        : TrainBlackboxExperiment(config, options);
}

// ---------------------------------------------------------------------------
// Ablation and lambda-sensitivity sweeps
// ---------------------------------------------------------------------------

enum class SweepKind { kFlags, kLambda };

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  bool within_layer = false;
  bool cross_layer = false;
  bool cross_model = false;
  double lambda = 0.0;
  double accuracy = 0.0;
  double sharpness = 0.0;
  double mia_accuracy = 0.0;
  double spent_epsilon = 0.0;
  std::uint64_t init_checksum = 0;
  std::vector<bool> active_mask;
  PrefixParamSet params;
};

// FNV-1a over the bit patterns of all prefix values.
inline std::uint64_t ParamChecksum(const PrefixParamSet& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor& t : w.layers) {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

inline std::string VariantName(const ExperimentConfig& c) {
  if (!c.within_layer && !c.cross_layer && !c.cross_model) return "dp-prefix";
  std::string s;
  auto add = [&s](const char* part) {
    if (!s.empty()) s += '+';
    s += part;
  };
  if (c.within_layer) add("within");
  if (c.cross_layer) add("cross-layer");
  if (c.cross_model) add("cross-model");
  return s;
}

inline AblationRow RunVariant(const ExperimentConfig& c) {
  const RunResult r = TrainWhitebox(c);
  AblationRow row;
  row.variant = VariantName(c);
  row.seed = c.seed;
  row.within_layer = c.within_layer;
  row.cross_layer = c.cross_layer;
  row.cross_model = c.cross_model;
  row.lambda = c.lambda;
  row.accuracy = r.test_accuracy;
  row.sharpness = r.sharpness->sharpness;
  row.mia_accuracy = r.mia->accuracy;
  row.spent_epsilon = r.spent_epsilon;
  row.init_checksum = ParamChecksum(Experiment(c).init);
  row.active_mask = r.params.active;
  row.params = r.params;
  return row;
}

// kFlags: all 8 on/off combinations of the three aspects. kLambda: cross-model
// on (other aspects as in `base`) for each lambda. Every variant runs once per
// seed; variants with the same seed share data, initialization, batches, and
// DP noise streams.
inline std::vector<AblationRow> RunAblation(
    const ExperimentConfig& base, SweepKind kind,
    const std::vector<double>& lambdas = {0.0, 1e-3, 1e-2, 1e-1},
    std::vector<std::uint64_t> seeds = {},
    const std::function<void(const AblationRow&)>& on_row = {}) {
  if (seeds.empty()) seeds.push_back(base.seed);
  std::vector<AblationRow> rows;
  auto run = [&](const ExperimentConfig& c) {
    rows.push_back(RunVariant(c));
    if (on_row) on_row(rows.back());
  };
  for (std::uint64_t seed : seeds) {
    ExperimentConfig c = base;
    c.seed = seed;
    if (kind == SweepKind::kFlags) {
      for (int mask = 0; mask < 8; ++mask) {
        c.within_layer = (mask & 1) != 0;
        c.cross_layer = (mask & 2) != 0;
        c.cross_model = (mask & 4) != 0;
        run(c);
      }
    } else {
      c.cross_model = true;
      for (double lambda : lambdas) {
        c.lambda = lambda;
        run(c);
      }
    }
  }
  return rows;
}

}  // namespace dpflat

#endif  // DPFLAT_PIPELINE_H_
