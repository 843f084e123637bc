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
#include <cstdint>
#include <vector>

#include "dpflat/errors.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"
#include "gtest/gtest.h"

namespace dpflat {
namespace {

TEST(TensorTest, ShapeAndIndexing) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  t.at(1, 2) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3, 0.0)), ConfigError);
}

TEST(TensorTest, Norms) {
  const Tensor t = Tensor::Vector({3.0, 4.0});
  EXPECT_DOUBLE_EQ(t.SquaredNorm(), 25.0);
  EXPECT_DOUBLE_EQ(t.Norm(), 5.0);
  const TensorSet s = {t, Tensor::Vector({12.0})};
  EXPECT_DOUBLE_EQ(Norm(s), 13.0);
}

TEST(TensorTest, AxpySkipsEmptySlots) {
  TensorSet a = {Tensor::Vector({1.0, 2.0}), Tensor()};
  const TensorSet b = {Tensor::Vector({1.0, 1.0}), Tensor()};
  Axpy(a, 2.0, b);
  EXPECT_EQ(a[0], Tensor::Vector({3.0, 4.0}));
  EXPECT_EQ(a[1].size(), 0u);
}

TEST(TensorTest, MismatchedShapesThrow) {
  Tensor a = Tensor::Vector({1.0, 2.0});
  EXPECT_THROW(a += Tensor::Vector({1.0}), ConfigError);
}

TEST(RngTest, SameKeySameSequence) {
  RngStream a(42, {"noise", 3, 1});
  RngStream b(42, {"noise", 3, 1});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(RngTest, CreationOrderDoesNotMatter) {
  RngStream first(9, {"batch", 0, 0});
  const std::uint64_t x = first();
  RngStream other(9, {"noise", 0, 0});
  other();
  RngStream again(9, {"batch", 0, 0});
  EXPECT_EQ(again(), x);
}

TEST(RngTest, KeysSeparateStreams) {
  const std::uint64_t base = RngStream(1, {"noise", 0, 0})();
  EXPECT_NE(RngStream(2, {"noise", 0, 0})(), base);
  EXPECT_NE(RngStream(1, {"batch", 0, 0})(), base);
  EXPECT_NE(RngStream(1, {"noise", 1, 0})(), base);
  EXPECT_NE(RngStream(1, {"noise", 0, 1})(), base);
}

TEST(RngTest, GaussianMoments) {
  RngStream s(2026, {"moments", 0, 0});
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.Gaussian();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_EQ(s.gaussian_draws(), static_cast<std::uint64_t>(n));
}

TEST(RngTest, IndependentStreamsAreUncorrelated) {
  RngStream a(5, {"noise", 0, 0});
  RngStream b(5, {"noise", 1, 0});
  const int n = 200000;
  double c = 0.0;
  for (int i = 0; i < n; ++i) c += a.Gaussian() * b.Gaussian();
  EXPECT_NEAR(c / n, 0.0, 5.0 / std::sqrt(n));
}

TEST(RngTest, DrawGaussianIsReplayable) {
  const Tensor a = DrawGaussian(11, {"init", 2, 0}, {3, 4});
  const Tensor b = DrawGaussian(11, {"init", 2, 0}, {3, 4});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), (std::vector<std::size_t>{3, 4}));
  EXPECT_THROW(DrawGaussian(11, {"init", 2, 0}, {}), ConfigError);
}

}  // namespace
}  // namespace dpflat
