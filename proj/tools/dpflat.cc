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

// Command-line front end: training, evaluation, accounting, and sweeps.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpflat.h"
#include "json.hpp"

namespace {

using dpflat::ExperimentConfig;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool no_within = false;
  bool no_cross_layer = false;
  bool no_cross_model = false;
};

void AddCommon(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "Config file (key = value with [sections])")
      ->check(CLI::ExistingFile);
  app->add_option("--set", o.overrides, "Override a config key, e.g. --set train.lr=0.01");
  app->add_option("--seed", o.seed, "Root seed");
  app->add_flag("--no-within-layer", o.no_within, "Disable within-layer flattening (AWP)");
  app->add_flag("--no-cross-layer", o.no_cross_layer, "Disable layer elimination");
  app->add_flag("--no-cross-model", o.no_cross_model, "Disable cross-model distillation");
}

ExperimentConfig Resolve(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = dpflat::LoadConfig(o.config_path);
  for (const std::string& kv : o.overrides) dpflat::ApplyOverride(c, kv);
  if (o.seed) c.seed = *o.seed;
  if (o.no_within) c.within_layer = false;
  if (o.no_cross_layer) c.cross_layer = false;
  if (o.no_cross_model) c.cross_model = false;
  c.Validate();
  return c;
}

dpflat::PrefixParamSet ParamsFrom(const dpflat::Experiment& ex,
                                  const std::string& checkpoint) {
  if (checkpoint.empty()) return ex.init;
  const dpflat::Checkpoint ck = dpflat::LoadCheckpoint(checkpoint);
  dpflat::PrefixParamSet w = ck.Params("w");
  if (w.num_layers() != ex.init.num_layers()) {
    throw dpflat::FormatError("checkpoint layer count does not match the config");
  }
  return w;
}

std::string Fmt(double v) { return dpflat::internal::FormatDouble(v); }

void PrintRunSummary(const dpflat::RunResult& r) {
  std::printf("steps %zu  sigma %s  spent_epsilon %s\n", r.steps, Fmt(r.sigma).c_str(),
              Fmt(r.spent_epsilon).c_str());
  if (r.trace) {
    std::printf("active layers:");
    for (std::size_t l = 0; l < r.params.num_layers(); ++l) {
      if (r.params.active[l]) std::printf(" %zu", l);
    }
    std::printf("\n");
  }
  if (r.sharpness) {
    std::printf("test_accuracy %s  train_loss %s  sharpness %s  mia_accuracy %s\n",
                Fmt(r.test_accuracy).c_str(), Fmt(r.train_loss).c_str(),
                Fmt(r.sharpness->sharpness).c_str(), Fmt(r.mia->accuracy).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpflat: differentially private prefix tuning with weight flattening"};
  app.require_subcommand(1);

  CommonOptions common;
  dpflat::RunOptions run;
  bool no_wall_time = false;
  std::string checkpoint_in;

  CLI::App* train = app.add_subcommand("train", "White-box DP-Flat training");
  CLI::App* zo = app.add_subcommand("zo-train", "Black-box zeroth-order training (DPZero)");
  for (CLI::App* sub : {train, zo}) {
    AddCommon(sub, common);
    sub->add_option("--metrics", run.metrics_path, "JSON-lines metrics log");
    sub->add_option("--summary", run.summary_path, "CSV per-epoch summary");
    sub->add_option("--checkpoint", run.checkpoint_path, "Checkpoint to write");
    sub->add_option("--resume", run.resume_from, "Checkpoint to resume from")
        ->check(CLI::ExistingFile);
    sub->add_option("--stop-after-epoch", run.stop_after_epoch, "Stop after this epoch");
    sub->add_flag("--probe-sharpness", run.probe_sharpness_each_epoch,
                  "Record sharpness every epoch");
    sub->add_flag("--no-wall-time", no_wall_time, "Omit wall time from the metrics log");
  }

  CLI::App* eliminate = app.add_subcommand("eliminate", "Greedy cross-layer elimination");
  AddCommon(eliminate, common);

  std::size_t directions = 2;
  std::string out_path;
  CLI::App* sharpness = app.add_subcommand("sharpness", "Sharpness of the trained prefix");
  CLI::App* landscape = app.add_subcommand("landscape", "1-D loss landscape scan");
  CLI::App* attack = app.add_subcommand("attack", "Loss-threshold membership inference");
  std::string attack_metrics;
  for (CLI::App* sub : {sharpness, landscape, attack}) {
    AddCommon(sub, common);
    sub->add_option("--checkpoint", checkpoint_in, "Checkpoint to evaluate (default: init)")
        ->check(CLI::ExistingFile);
  }
  landscape->add_option("--directions", directions, "Number of random directions");
  landscape->add_option("--out", out_path, "CSV output (default: stdout)");
  attack->add_option("--metrics", attack_metrics, "Metrics log to append the result to");

  double eps = 3.0, delta = 1e-5, q = 1.0, sigma = -1.0;
  std::size_t steps = 1;
  CLI::App* account = app.add_subcommand("account", "RDP accountant");
  account->add_option("--epsilon", eps, "Target epsilon");
  account->add_option("--delta", delta, "Target delta");
  account->add_option("--q", q, "Sampling rate");
  account->add_option("--steps", steps, "Number of steps");
  account->add_option("--sigma", sigma, "Report epsilon for this sigma instead of calibrating");

  std::string sweep = "flags";
  std::vector<double> lambdas = {0.0, 1e-3, 1e-2, 1e-1};
  std::vector<std::uint64_t> seeds;
  CLI::App* ablate = app.add_subcommand("ablate", "Flag ablation or lambda sweep");
  AddCommon(ablate, common);
  ablate->add_option("--sweep", sweep, "flags | lambda")
      ->check(CLI::IsMember({"flags", "lambda"}));
  ablate->add_option("--lambdas", lambdas, "Lambda grid for --sweep lambda");
  ablate->add_option("--seeds", seeds, "Seeds (default: the config seed)");
  ablate->add_option("--out", out_path, "CSV output (default: stdout)");

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dpflat: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    run.include_wall_time = !no_wall_time;
    if (train->parsed()) {
      ExperimentConfig c = Resolve(common);
      c.mode = dpflat::Mode::kWhiteBox;
      PrintRunSummary(dpflat::RunExperiment(c, run));
    } else if (zo->parsed()) {
      common.no_within = common.no_cross_layer = true;
      ExperimentConfig c = Resolve(common);
      c.mode = dpflat::Mode::kBlackBox;
      PrintRunSummary(dpflat::RunExperiment(c, run));
    } else if (eliminate->parsed()) {
      const ExperimentConfig c = Resolve(common);
      const dpflat::Experiment ex(c);
      const dpflat::EliminationTrace t = ex.Eliminate(ex.init);
      std::printf("initial_sharpness %s\n", Fmt(t.initial_sharpness).c_str());
      for (std::size_t i = 0; i < t.rounds.size(); ++i) {
        const dpflat::EliminationRound& r = t.rounds[i];
        std::printf("round %zu:", i + 1);
        for (std::size_t k = 0; k < r.candidate_layers.size(); ++k) {
          std::printf(" S(-%zu)=%s", r.candidate_layers[k],
                      Fmt(r.candidate_sharpness[k]).c_str());
        }
        std::printf("  removed %zu\n", r.removed_layer);
      }
      std::printf("active mask:");
      for (bool b : t.active_mask) std::printf(" %d", b ? 1 : 0);
      std::printf("\n");
    } else if (sharpness->parsed()) {
      const ExperimentConfig c = Resolve(common);
      const dpflat::Experiment ex(c);
      const dpflat::SharpnessReport s = ex.SharpnessOf(ParamsFrom(ex, checkpoint_in));
      std::printf("eta,loss\n");
      for (std::size_t i = 0; i < s.eta_grid.size(); ++i) {
        std::printf("%s,%s\n", Fmt(s.eta_grid[i]).c_str(), Fmt(s.losses[i]).c_str());
      }
      std::printf("sharpness %s\n", Fmt(s.sharpness).c_str());
    } else if (landscape->parsed()) {
      const ExperimentConfig c = Resolve(common);
      const dpflat::Experiment ex(c);
      const dpflat::ClassificationObjective obj = ex.members();
      const std::vector<std::size_t> idx = ex.SharpnessIndices();
      const std::vector<double> mags = dpflat::DefaultLandscapeMagnitudes();
      const auto points = dpflat::LandscapeScan(
          dpflat::MeanLoss<dpflat::ClassificationObjective>(obj, idx),
          ParamsFrom(ex, checkpoint_in), mags, directions,
          dpflat::PhaseSeed(c.seed, "landscape"));
      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw dpflat::FormatError("cannot open " + out_path);
      }
      std::ostream& os = out_path.empty() ? std::cout : file;
      os << "direction,eta,loss\n";
      for (const dpflat::LandscapePoint& p : points) {
        os << p.direction << ',' << Fmt(p.eta) << ',' << Fmt(p.loss) << '\n';
      }
    } else if (attack->parsed()) {
      const ExperimentConfig c = Resolve(common);
      const dpflat::Experiment ex(c);
      const dpflat::MiaReport m = ex.Attack(ParamsFrom(ex, checkpoint_in));
      nlohmann::ordered_json j;
      j["event"] = "mia";
      j["flagged_fraction"] = m.flagged_fraction;
      j["pool_size"] = m.pool_size;
      j["flagged"] = m.flagged;
      j["threshold"] = m.threshold;
      j["accuracy"] = m.accuracy;
      j["true_positives"] = m.true_positives;
      j["false_positives"] = m.false_positives;
      std::printf("%s\n", j.dump().c_str());
      if (!attack_metrics.empty()) {
        std::ofstream log(attack_metrics, std::ios::app);
        if (!log) throw dpflat::FormatError("cannot open metrics log " + attack_metrics);
        log << j.dump() << '\n';
      }
    } else if (account->parsed()) {
      if (sigma < 0.0) {
        const dpflat::Calibration cal = dpflat::CalibrateSigma(eps, delta, q, steps);
        sigma = cal.sigma;
      }
      const dpflat::RdpCurve curve = dpflat::ComputeRdpCurve(q, sigma);
      const dpflat::DpConversion dp =
          dpflat::RdpToDp(curve, static_cast<double>(steps), delta);
      std::printf("sigma %s\n", Fmt(sigma).c_str());
      std::printf("order,rdp_per_step,rdp_total\n");
      for (std::size_t i = 0; i < curve.orders.size(); ++i) {
        std::printf("%s,%s,%s\n", Fmt(curve.orders[i]).c_str(),
                    Fmt(curve.eps_at_order[i]).c_str(),
                    Fmt(curve.eps_at_order[i] * static_cast<double>(steps)).c_str());
      }
      nlohmann::ordered_json j;
      j["sigma"] = sigma;
      j["q"] = q;
      j["steps"] = steps;
      j["delta"] = delta;
      j["epsilon"] = dp.epsilon;
      j["order"] = dp.order;
      std::printf("%s\n", j.dump().c_str());
    } else if (ablate->parsed()) {
      const ExperimentConfig c = Resolve(common);
      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw dpflat::FormatError("cannot open " + out_path);
      }
      std::ostream& os = out_path.empty() ? std::cout : file;
      os << "variant,seed,lambda,accuracy,sharpness,mia_accuracy,spent_epsilon,"
            "init_checksum,active_mask\n";
      dpflat::RunAblation(
          c, sweep == "flags" ? dpflat::SweepKind::kFlags : dpflat::SweepKind::kLambda,
          lambdas, seeds, [&os](const dpflat::AblationRow& r) {
            std::string mask;
            for (bool b : r.active_mask) mask += b ? '1' : '0';
            os << r.variant << ',' << r.seed << ',' << Fmt(r.lambda) << ','
               << Fmt(r.accuracy) << ',' << Fmt(r.sharpness) << ','
               << Fmt(r.mia_accuracy) << ',' << Fmt(r.spent_epsilon) << ','
               << r.init_checksum << ',' << mask << '\n';
            os.flush();
          });
    }
  } catch (const std::exception& e) {
    std::cerr << "dpflat: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
