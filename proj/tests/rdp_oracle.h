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

#ifndef DPFLAT_TESTS_RDP_ORACLE_H_
#define DPFLAT_TESTS_RDP_ORACLE_H_

// Independent privacy-accounting oracle: the Renyi divergence of the
// subsampled Gaussian mixture is integrated numerically (no series, no
// binomial expansion) and epsilon is minimized over a dense order grid.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace dpflat::testing {

// log E_{z ~ N(0, s^2)} [ ((1-q) + q exp((2z - 1) / (2 s^2)))^alpha ] by
// composite Simpson integration in log space.
inline double QuadratureLogA(double q, double sigma, double alpha,
                             int intervals = 4000) {
  const double lo = -14.0 * sigma;
  const double hi = alpha + 14.0 * sigma + 1.0;
  const double h = (hi - lo) / intervals;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  auto log_f = [&](double z) {
    const double a = std::log1p(-q);
    const double b = std::log(q) + (2.0 * z - 1.0) / (2.0 * sigma * sigma);
    const double m = std::max(a, b);
    const double log_ratio = m + std::log(std::exp(a - m) + std::exp(b - m));
    return log_norm - z * z / (2.0 * sigma * sigma) + alpha * log_ratio;
  };
  std::vector<double> v(intervals + 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= intervals; ++i) {
    v[i] = log_f(lo + i * h);
    mx = std::max(mx, v[i]);
  }
  double s = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    s += w * std::exp(v[i] - mx);
  }
  return mx + std::log(s * h / 3.0);
}

inline double QuadratureRdp(double q, double sigma, double alpha) {
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  return QuadratureLogA(q, sigma, alpha) / (alpha - 1.0);
}

inline std::vector<double> DenseOrders() {
  std::vector<double> out;
  for (double a = 1.05; a < 10.0; a += 0.05) out.push_back(a);
  for (double a = 10.0; a < 64.0; a += 0.5) out.push_back(a);
  for (double a = 64.0; a <= 512.0; a += 4.0) out.push_back(a);
  return out;
}

// min over alpha in [1.05, 512] of T * rdp(alpha) + log(1/delta) / (alpha - 1):
// a dense scan followed by golden-section refinement around the best point.
inline double OracleEpsilon(double q, double sigma, double steps, double delta) {
  auto eps = [&](double a) {
    return steps * QuadratureRdp(q, sigma, a) + std::log(1.0 / delta) / (a - 1.0);
  };
  const std::vector<double> grid = DenseOrders();
  std::vector<double> values;
  for (double a : grid) values.push_back(eps(a));
  const std::size_t i = static_cast<std::size_t>(
      std::min_element(values.begin(), values.end()) - values.begin());
  double lo = grid[i == 0 ? 0 : i - 1];
  double hi = grid[i + 1 == grid.size() ? i : i + 1];
  double best = values[i];
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 40; ++it) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    const double fa = eps(a), fb = eps(b);
    best = std::min({best, fa, fb});
    if (fa < fb) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return best;
}

}  // namespace dpflat::testing

#endif  // DPFLAT_TESTS_RDP_ORACLE_H_
