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
#include <sstream>
#include <vector>

#include "dpflat/dataset.h"
#include "dpflat/errors.h"
#include "gtest/gtest.h"

namespace dpflat {
namespace {

// Test-only oracle: multinomial logistic regression on mean-pooled features,
// trained by full-batch gradient descent.
double LogisticProbeAccuracy(const std::vector<Record>& recs, std::size_t classes) {
  const std::size_t f = recs[0].features.shape()[1];
  const std::size_t l = recs[0].features.shape()[0];
  std::vector<std::vector<double>> x;
  for (const Record& r : recs) {
    std::vector<double> m(f, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
      for (std::size_t j = 0; j < f; ++j) m[j] += r.features.at(t, j) / l;
    }
    x.push_back(m);
  }
  std::vector<double> w(classes * (f + 1), 0.0);
  auto logits = [&](const std::vector<double>& xi) {
    std::vector<double> z(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = w[c * (f + 1) + f];
      for (std::size_t j = 0; j < f; ++j) z[c] += w[c * (f + 1) + j] * xi[j];
    }
    return z;
  };
  for (int it = 0; it < 500; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      std::vector<double> z = logits(x[i]);
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double s = 0.0;
      for (double& v : z) s += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < classes; ++c) {
        const double d = z[c] / s - (static_cast<int>(c) == recs[i].label ? 1.0 : 0.0);
        for (std::size_t j = 0; j < f; ++j) g[c * (f + 1) + j] += d * x[i][j];
        g[c * (f + 1) + f] += d;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 5.0 * g[k] / recs.size();
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::vector<double> z = logits(x[i]);
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (z[c] > z[best]) best = c;
    }
    if (static_cast<int>(best) == recs[i].label) ++correct;
  }
  return static_cast<double>(correct) / recs.size();
}

TEST(DatasetTest, Deterministic) {
  SyntheticSpec s;
  s.seed = 17;
  EXPECT_EQ(MakeSyntheticDataset(s), MakeSyntheticDataset(s));
  SyntheticSpec t = s;
  t.seed = 18;
  EXPECT_FALSE(MakeSyntheticDataset(s) == MakeSyntheticDataset(t));
}

TEST(DatasetTest, DefaultSpecIsBalanced) {
  const SyntheticDataset ds = MakeSyntheticDataset(SyntheticSpec{});
  ASSERT_EQ(ds.members.size(), 512u);
  ASSERT_EQ(ds.non_members.size(), 512u);
  for (const auto* split : {&ds.members, &ds.non_members}) {
    std::size_t ones = 0;
    for (const Record& r : *split) ones += r.label == 1;
    EXPECT_EQ(ones, split->size() / 2);
  }
  EXPECT_EQ(ds.members[0].features.shape(), (std::vector<std::size_t>{8, 16}));
}

TEST(DatasetTest, NoiselessDataIsLinearlySeparable) {
  SyntheticSpec s;
  s.noise_scale = 0.0;
  s.members = 64;
  const SyntheticDataset ds = MakeSyntheticDataset(s);
  EXPECT_EQ(LogisticProbeAccuracy(ds.members, s.class_count), 1.0);
}

TEST(DatasetTest, TextRoundTrip) {
  SyntheticSpec s;
  s.members = 10;
  s.non_members = 6;
  s.class_count = 3;
  const SyntheticDataset ds = MakeSyntheticDataset(s);
  std::stringstream ss;
  WriteDataset(ds, ss);
  EXPECT_EQ(ReadDataset(ss), ds);
}

TEST(DatasetTest, MalformedTextThrows) {
  std::stringstream bad_header("split,label\nmember,0,1\n");
  EXPECT_THROW(ReadDataset(bad_header), FormatError);
  std::stringstream short_row(
      "split,label,features(seq_len=1;feature_dim=2;class_count=2)\nmember,0,1.0\n");
  EXPECT_THROW(ReadDataset(short_row), FormatError);
}

TEST(DatasetTest, InvalidSpecThrows) {
  SyntheticSpec s;
  s.members = 0;
  EXPECT_THROW(MakeSyntheticDataset(s), ConfigError);
}

}  // namespace
}  // namespace dpflat
