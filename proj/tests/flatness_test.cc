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


#include <cmath>
#include <vector>

#include "dpflat/dataset.h"
#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/flatness.h"
#include "dpflat/model.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace dpflat {
namespace {

using testing::QuadraticLoss;

PrivacySpec NoMechanism() {
  PrivacySpec p;
  p.epsilon = kInfinity;
  p.clip_norm = kInfinity;
  p.noise_multiplier = 0.0;
  return p;
}

TEST(AwpTest, ScalarPerturbation) {
  const QuadraticLoss loss = QuadraticLoss::Isotropic(1, 1.0);
  const TensorSet v = AwpPerturbation(loss, QuadraticLoss::Params({2.0}), 0.1);
  EXPECT_NEAR(v[0][0], 0.2, 1e-15);
}

TEST(AwpTest, ZeroGradientOrGammaGivesZero) {
  const QuadraticLoss loss = QuadraticLoss::Isotropic(2, 1.0, 3.0);
  EXPECT_EQ(Norm(AwpPerturbation(loss, QuadraticLoss::Params({3.0, 3.0}), 0.1)), 0.0);
  EXPECT_EQ(Norm(AwpPerturbation(loss, QuadraticLoss::Params({1.0, 2.0}), 0.0)), 0.0);
  EXPECT_THROW(AwpPerturbation(loss, QuadraticLoss::Params({1.0, 2.0}), -1.0),
               ConfigError);
}

TEST(AwpTest, ScalarUpdate) {
  const QuadraticLoss loss = QuadraticLoss::Isotropic(1, 1.0);
  PrefixParamSet w = QuadraticLoss::Params({2.0});
  OptimizerState sgd = OptimizerState::Sgd(w, 0.1);
  RngStream noise(1, {"noise", 0, 0});
  const std::vector<std::size_t> batch = {0};
  AwpUpdate(loss, w, batch, 0.1, sgd, NoMechanism(), noise);
  EXPECT_NEAR(w.layers[0][0], 1.78, 1e-15);
}

TEST(AwpTest, ZeroGammaIsPlainStep) {
  const QuadraticLoss loss({2.0, 0.3, 0.3, 1.0}, {0.5, 0.0}, {1.0, 1.0}, 3);
  PrefixParamSet a = QuadraticLoss::Params({0.2, -0.4}), b = a;
  OptimizerState sa = OptimizerState::Adam(a, 0.05), sb = sa;
  const std::vector<std::size_t> batch = {0, 1, 2};
  for (int t = 0; t < 10; ++t) {
    RngStream na(3, {"noise", static_cast<std::uint64_t>(t), 0}), nb = na;
    AwpUpdate(loss, a, batch, 0.0, sa, NoMechanism(), na);
    DpAdamStep(sb, b, PrivatizedGradient(loss, b, batch, NoMechanism(), nb));
  }
  EXPECT_EQ(a, b);
}

TEST(AwpTest, ZeroLearningRateCenters) {
  const QuadraticLoss loss({2.0, 0.3, 0.3, 1.0}, {0.5, 0.0}, {1.0, 1.0}, 3);
  PrefixParamSet w = QuadraticLoss::Params({0.7, -1.3});
  const PrefixParamSet before = w;
  OptimizerState sgd = OptimizerState::Sgd(w, 0.0);
  RngStream noise(1, {"noise", 0, 0});
  const std::vector<std::size_t> batch = {0, 1, 2};
  AwpUpdate(loss, w, batch, 0.05, sgd, NoMechanism(), noise);
  EXPECT_EQ(w, before);
}

TEST(SharpnessTest, ClosedFormQuadratic) {
  // L(w) = 2 (w - 1)^2
  const QuadraticLoss loss = QuadraticLoss::Isotropic(1, 4.0, 1.0);
  const SharpnessReport r = Sharpness(loss, QuadraticLoss::Params({0.0}));
  EXPECT_EQ(r.eta_grid.size(), 21u);
  EXPECT_DOUBLE_EQ(r.base_loss, 2.0);
  EXPECT_DOUBLE_EQ(r.losses.back(), 18.0);
  EXPECT_NEAR(r.sharpness, 16.0 / 3.0, 1e-14);
}

TEST(SharpnessTest, StationaryPointIsZero) {
  const QuadraticLoss loss = QuadraticLoss::Isotropic(3, 2.0, 0.5);
  EXPECT_EQ(Sharpness(loss, QuadraticLoss::Params({0.5, 0.5, 0.5})).sharpness, 0.0);
}

TEST(SharpnessTest, NonNegativeAndLiteralNormalization) {
  const QuadraticLoss loss = QuadraticLoss::Isotropic(2, 0.5, 0.0);
  const SharpnessReport r = Sharpness(loss, QuadraticLoss::Params({1.0, 2.0}));
  EXPECT_GE(r.sharpness, 0.0);
  double worst = 0.0;
  for (double l : r.losses) worst = std::max(worst, l - r.base_loss);
  EXPECT_EQ(r.sharpness, worst / (1.0 + r.base_loss));
  EXPECT_THROW(Sharpness(loss, QuadraticLoss::Params({1.0, 2.0}), 1), ConfigError);
}

TEST(SharpnessTest, LossScaling) {
  const double c = 3.0;
  const QuadraticLoss base = QuadraticLoss::Isotropic(1, 4.0, 1.0);
  const QuadraticLoss scaled = QuadraticLoss::Isotropic(1, 4.0 * c, 1.0);
  const PrefixParamSet w = QuadraticLoss::Params({0.9});
  const SharpnessReport a = Sharpness(base, w), b = Sharpness(scaled, w);
  double worst = 0.0;
  for (std::size_t k = 0; k < b.losses.size(); ++k) {
    worst = std::max(worst, b.losses[k] - b.base_loss);
  }
  EXPECT_DOUBLE_EQ(b.sharpness, worst / (1.0 + c * a.base_loss));
}

class EliminationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticSpec d;
    d.members = 24;
    d.non_members = 4;
    d.seed = 5;
    data_ = MakeSyntheticDataset(d);
  }

  PrefixTransformer Model(std::uint64_t seed) const {
    ModelSpec s;
    s.prefix_gain = 10.0;
    s.prefix_init_scale = 0.05;
    s.seed = seed;
    return PrefixTransformer(s);
  }

  SyntheticDataset data_;
};

TEST_F(EliminationTest, SingleLayerHasNothingToRemove) {
  const PrefixTransformer model = Model(1);
  const ClassificationObjective obj(model, data_.members);
  const std::vector<std::size_t> idx = AllIndices(data_.members.size());
  PrefixParamSet w = model.InitPrefixes();
  w.active = {false, false, true, false};
  const EliminationTrace t = GreedyEliminate(
      w, [&] { return MeanLoss<ClassificationObjective>(obj, idx); }, 3, 1);
  EXPECT_TRUE(t.rounds.empty());
  EXPECT_EQ(t.active_mask, w.active);
}

TEST_F(EliminationTest, MatchesExhaustiveOracle) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const PrefixTransformer model = Model(seed);
    const ClassificationObjective obj(model, data_.members);
    const std::vector<std::size_t> idx = AllIndices(data_.members.size());
    const MeanLoss<ClassificationObjective> loss(obj, idx);
    const PrefixParamSet init = model.InitPrefixes();
    const EliminationTrace t = GreedyEliminate(init, [&] { return loss; }, 3, 1);
    PrefixParamSet current = init;
    double s = testing::OracleSharpness(loss, current, 21);
    EXPECT_NEAR(t.initial_sharpness, s, 1e-12);
    for (const EliminationRound& r : t.rounds) {
      const auto [layer, value] = testing::ExhaustiveRemoval(loss, current, 21);
      EXPECT_EQ(r.removed_layer, layer) << "seed " << seed;
      EXPECT_NEAR(r.min_sharpness, value, 1e-12);
      EXPECT_LT(value, s);
      current.active[layer] = false;
      s = value;
    }
    if (t.rounds.size() < 3 && current.num_active() > 1) {
      EXPECT_GE(testing::ExhaustiveRemoval(loss, current, 21).second, s);
    }
    EXPECT_EQ(t.active_mask, current.active);
  }
}

TEST_F(EliminationTest, StopsWhenNoRemovalHelps) {
  // A quadratic where every layer is at its own minimum: S = 0 everywhere, so
  // no candidate is strictly lower.
  PrefixParamSet w;
  for (int l = 0; l < 3; ++l) {
    w.layers.push_back(Tensor::Vector({0.0}));
    w.active.push_back(true);
  }
  struct Bowl {
    double Value(const PrefixParamSet& p) const {
      double s = 0.0;
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        s += p.layers[l][0] * p.layers[l][0];
      }
      return s;
    }
    LossAndGrad ValueAndGrad(const PrefixParamSet& p) const {
      LossAndGrad r{Value(p), p.ZeroGrads()};
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        if (p.active[l]) r.grad[l][0] = 2.0 * p.layers[l][0];
      }
      return r;
    }
  };
  const EliminationTrace t = GreedyEliminate(w, [] { return Bowl{}; }, 2, 1);
  EXPECT_TRUE(t.rounds.empty());
}

TEST(DistillTest, WorkedExamples) {
  const PrefixParamSet w = QuadraticLoss::Params({3.0, 4.0});
  const PrefixParamSet w_nor = QuadraticLoss::Params({0.0, 0.0});
  EXPECT_DOUBLE_EQ(DistillLoss(1.0, w, w_nor, 0.01), 1.05);
  EXPECT_EQ(DistillLoss(1.0, w, w, 0.01), 1.0);
  EXPECT_EQ(DistillLoss(1.0, w, w_nor, 0.0), 1.0);
  EXPECT_EQ(Norm(DistillGradient(w, w, 0.5)), 0.0);
}

TEST(DistillTest, GradientMatchesFiniteDifferences) {
  const QuadraticLoss base({1.0, 0.2, 0.2, 3.0}, {0.1, -0.3}, {0.5, 0.5});
  const PrefixParamSet w_nor = QuadraticLoss::Params({0.2, -0.1});
  const DistilledLoss<QuadraticLoss> f(base, w_nor, 0.3);
  const PrefixParamSet w = QuadraticLoss::Params({1.1, 0.7});
  const std::vector<double> analytic = Flatten(f.ValueAndGrad(w).grad);
  const std::vector<double> numeric = testing::FiniteDifferenceGradient(
      [&](const PrefixParamSet& p) { return f.Value(p); }, w, 1e-6);
  EXPECT_LT(testing::MaxRelativeError(analytic, numeric), 1e-7);
  // Hand form: base gradient plus lambda (w - w_nor) / ||w - w_nor||.
  const std::vector<double> g = base.TrueGradient({1.1, 0.7});
  const double d = std::hypot(0.9, 0.8);
  EXPECT_NEAR(analytic[0], g[0] + 0.3 * 0.9 / d, 1e-15);
  EXPECT_NEAR(analytic[1], g[1] + 0.3 * 0.8 / d, 1e-15);
}

TEST(LandscapeTest, CenterSymmetryAndDeterminism) {
  const QuadraticLoss loss({2.0, 0.5, 0.5, 1.0}, {0.0, 0.0}, {0.0, 0.0});
  const PrefixParamSet w = QuadraticLoss::Params({0.0, 0.0});
  const std::vector<double> mags = DefaultLandscapeMagnitudes();
  ASSERT_EQ(mags.size(), 41u);
  const auto pts = LandscapeScan(loss, w, mags, 3, 99);
  ASSERT_EQ(pts.size(), 3u * 41u);
  for (std::size_t k = 0; k < 3; ++k) {
    const LandscapePoint* row = &pts[k * 41];
    EXPECT_EQ(row[20].eta, 0.0);
    EXPECT_NEAR(row[20].loss, loss.Value(w), 1e-12);
    for (std::size_t i = 0; i < 41; ++i) {
      EXPECT_NEAR(row[i].loss, row[40 - i].loss, 1e-9);
    }
  }
  const auto again = LandscapeScan(loss, w, mags, 3, 99);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(pts[i].loss, again[i].loss);
}

}  // namespace
}  // namespace dpflat
