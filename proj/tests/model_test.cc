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
#include <numbers>
#include <vector>

#include "dpflat/dataset.h"
#include "dpflat/errors.h"
#include "dpflat/model.h"
#include "dpflat/objective.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace dpflat {
namespace {

using testing::FiniteDifferenceGradient;
using testing::MaxRelativeError;

SyntheticDataset SmallData(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.members = 16;
  s.non_members = 16;
  s.seed = seed;
  return MakeSyntheticDataset(s);
}

TEST(ModelTest, DefaultParameterCount) {
  const PrefixTransformer model(ModelSpec{});
  const PrefixParamSet w = model.InitPrefixes();
  EXPECT_EQ(w.num_layers(), 4u);
  EXPECT_EQ(w.ActiveParameterCount(), 1024u);
}

TEST(ModelTest, InvalidSpecThrows) {
  ModelSpec s;
  s.heads = 3;
  EXPECT_THROW(PrefixTransformer{s}, ConfigError);
}

TEST(ModelTest, MaskedLayerHasNoGradient) {
  const PrefixTransformer model(ModelSpec{});
  const SyntheticDataset ds = SmallData();
  PrefixParamSet w = model.InitPrefixes();
  w.active[2] = false;
  const LossAndGrad r = model.LossAndGradient(w, ds.members[0]);
  EXPECT_EQ(r.grad[2].size(), 0u);
  EXPECT_GT(r.grad[1].size(), 0u);
}

TEST(ModelTest, InactivePrefixDoesNotChangeOutput) {
  const PrefixTransformer model(ModelSpec{});
  const SyntheticDataset ds = SmallData();
  PrefixParamSet w = model.InitPrefixes();
  w.active[1] = false;
  const double before = model.Loss(w, ds.members[3]);
  for (double& v : w.layers[1].values()) v += 5.0;
  EXPECT_EQ(model.Loss(w, ds.members[3]), before);
}

TEST(ModelTest, SameSeedSameLosses) {
  const SyntheticDataset ds = SmallData();
  const PrefixTransformer a(ModelSpec{}), b(ModelSpec{});
  EXPECT_EQ(PerSampleLosses(a, a.InitPrefixes(), ds.members),
            PerSampleLosses(b, b.InitPrefixes(), ds.members));
}

TEST(ModelTest, UniformLogitsGiveLn2) {
  ModelSpec s;
  s.head_scale = 0.0;
  const PrefixTransformer model(s);
  const SyntheticDataset ds = SmallData();
  for (double l : PerSampleLosses(model, model.InitPrefixes(), ds.members)) {
    EXPECT_NEAR(l, std::numbers::ln2, 1e-15);
  }
}

TEST(ModelTest, PerSampleMeanMatchesBatchLoss) {
  const PrefixTransformer model(ModelSpec{});
  const SyntheticDataset ds = SmallData();
  const ClassificationObjective obj(model, ds.members);
  const PrefixParamSet w = model.InitPrefixes();
  std::vector<std::size_t> idx = AllIndices(ds.members.size());
  const double batch = MeanLoss<ClassificationObjective>(obj, idx).Value(w);
  double reversed = 0.0;
  for (std::size_t k = idx.size(); k-- > 0;) reversed += model.Loss(w, ds.members[k]);
  EXPECT_NEAR(batch, reversed / idx.size(), 1e-12);
  EXPECT_EQ(MeanLoss<ClassificationObjective>(obj, idx).ValueAndGrad(w).loss, batch);

  const std::vector<std::size_t> one = {5};
  EXPECT_EQ(MeanLoss<ClassificationObjective>(obj, one).Value(w),
            model.Loss(w, ds.members[5]));
}

TEST(ModelTest, BadLabelThrows) {
  const PrefixTransformer model(ModelSpec{});
  Record r = SmallData().members[0];
  r.label = 7;
  EXPECT_THROW(model.Loss(model.InitPrefixes(), r), DataError);
}

TEST(ModelTest, BadFeatureShapeThrows) {
  const PrefixTransformer model(ModelSpec{});
  Record r{Tensor({3, 3}), 0};
  EXPECT_THROW(model.Loss(model.InitPrefixes(), r), DataError);
}

TEST(ModelTest, AnalyticGradientMatchesFiniteDifferences) {
  for (double gain : {1.0, 10.0}) {
    ModelSpec s;
    s.prefix_gain = gain;
    s.prefix_init_scale = 0.5 / gain;
    const PrefixTransformer model(s);
    const SyntheticDataset ds = SmallData();
    const ClassificationObjective obj(model, ds.members);
    const std::vector<std::size_t> idx = {0, 1, 2, 3};
    const MeanLoss<ClassificationObjective> loss(obj, idx);
    PrefixParamSet w = model.InitPrefixes();
    w.active[0] = false;
    const std::vector<double> analytic = Flatten(loss.ValueAndGrad(w).grad);
    const std::vector<double> numeric = FiniteDifferenceGradient(
        [&](const PrefixParamSet& p) { return loss.Value(p); }, w, 1e-5 / gain);
    ASSERT_EQ(analytic.size(), numeric.size());
    EXPECT_LT(MaxRelativeError(analytic, numeric, 1e-4), 1e-5) << "gain " << gain;
  }
}

}  // namespace
}  // namespace dpflat
