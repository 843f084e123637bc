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

#ifndef DPFLAT_ACCOUNTANT_H_
#define DPFLAT_ACCOUNTANT_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "dpflat/errors.h"

namespace dpflat {

// Per-step Renyi-DP curve of the Poisson-subsampled Gaussian mechanism.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> eps_at_order;
};

struct DpConversion {
  double epsilon = 0.0;
  double order = 0.0;  // the minimizing alpha
};

struct Calibration {
  double sigma = 0.0;
  bool non_private = false;
};

// {1.25, 1.5, 2, 3, ..., 64, 128, 256}, refined to steps of 0.1 up to 11,
// 0.25 up to 64 and 1 up to 512. Small sampling rates put the minimizing
// order at a steep rise of the RDP curve, where a coarse grid overshoots.
inline std::vector<double> DefaultRdpOrders() {
  std::vector<double> orders = {1.25, 1.5};
  for (int k = 1; k <= 100; ++k) orders.push_back(1.0 + k / 10.0);
  for (int k = 1; k <= 212; ++k) orders.push_back(11.0 + k / 4.0);
  for (int a = 65; a <= 512; ++a) orders.push_back(a);
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  return orders;
}

namespace internal {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// log(exp(a) - exp(b)) for a >= b.
inline double LogSub(double a, double b) {
  if (b == kNegInf) return a;
  if (a <= b) return kNegInf;
  return a + std::log1p(-std::exp(b - a));
}

inline double LogErfc(double x) {
  const double e = std::erfc(x);
  if (e > 1e-300) return std::log(e);
  // Asymptotic expansion for large positive x.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(std::numbers::pi) +
         std::log1p(-0.5 / x2 + 0.75 / (x2 * x2));
}

// log A_alpha for integer alpha: binomial expansion of
// E_{z~N(0,s^2)}[((1-q) + q exp((2z-1)/(2s^2)))^alpha].
inline double LogAInteger(double q, double sigma, int alpha) {
  double log_a = kNegInf;
  const double log_q = std::log(q), log_1q = std::log1p(-q);
  for (int k = 0; k <= alpha; ++k) {
    const double log_binom = std::lgamma(alpha + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(alpha - k + 1.0);
    const double term = log_binom + k * log_q + (alpha - k) * log_1q +
                        (static_cast<double>(k) * k - k) / (2.0 * sigma * sigma);
    log_a = LogAdd(log_a, term);
  }
  return log_a;
}

// log A_alpha for fractional alpha via the two-sided erfc series.
inline double LogAFractional(double q, double sigma, double alpha) {
  double log_a0 = kNegInf, log_a1 = kNegInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double log_q = std::log(q), log_1q = std::log1p(-q);
  double coef = 1.0;  // generalized binomial C(alpha, i)
  for (int i = 0; i < 100000; ++i) {
    if (i > 0) coef *= (alpha - (i - 1)) / static_cast<double>(i);
    if (coef == 0.0) break;
    const double log_coef = std::log(std::abs(coef));
    const double j = alpha - i;
    const double log_t0 = log_coef + i * log_q + j * log_1q;
    const double log_t1 = log_coef + j * log_q + i * log_1q;
    const double log_e0 =
        std::log(0.5) + LogErfc((i - z0) / (std::numbers::sqrt2 * sigma));
    const double log_e1 =
        std::log(0.5) + LogErfc((z0 - j) / (std::numbers::sqrt2 * sigma));
    const double log_s0 =
        log_t0 + (static_cast<double>(i) * i - i) / (2 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2 * sigma * sigma) + log_e1;
    if (coef > 0) {
      log_a0 = LogAdd(log_a0, log_s0);
      log_a1 = LogAdd(log_a1, log_s1);
    } else {
      log_a0 = LogSub(log_a0, log_s0);
      log_a1 = LogSub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30) break;
  }
  return LogAdd(log_a0, log_a1);
}

}  // namespace internal

// RDP of one step of the subsampled Gaussian mechanism at order alpha.
// q == 1 is the plain Gaussian mechanism, alpha / (2 sigma^2).
inline double RdpOfStep(double q, double sigma, double alpha) {
  if (!(sigma > 0.0)) throw RequiresNoise("RDP requires sigma > 0");
  if (!(alpha > 1.0)) throw ConfigError("RDP order must be > 1");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("sampling rate must be in (0,1]");
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  if (std::isinf(sigma)) return 0.0;
  const double log_a = std::floor(alpha) == alpha
                           ? internal::LogAInteger(q, sigma, static_cast<int>(alpha))
                           : internal::LogAFractional(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

inline RdpCurve ComputeRdpCurve(double q, double sigma,
                                const std::vector<double>& orders =
                                    DefaultRdpOrders()) {
  RdpCurve curve;
  curve.orders = orders;
  curve.eps_at_order.reserve(orders.size());
  for (double a : orders) curve.eps_at_order.push_back(RdpOfStep(q, sigma, a));
  return curve;
}

// eps = min_alpha [ T * eps(alpha) + log(1/delta) / (alpha - 1) ]
inline DpConversion RdpToDp(const RdpCurve& curve, double steps, double delta) {
  if (curve.orders.empty()) throw ConfigError("empty RDP order grid");
  if (curve.orders.size() != curve.eps_at_order.size()) {
    throw ConfigError("RDP curve lengths differ");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must be in (0,1)");
  if (!(steps >= 1.0)) throw ConfigError("step count must be >= 1");
  DpConversion best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double a = curve.orders[i];
    const double eps = steps * curve.eps_at_order[i] + std::log(1.0 / delta) / (a - 1.0);
    if (eps < best.epsilon) best = {eps, a};
  }
  return best;
}

inline double EpsilonFor(double sigma, double delta, double q, double steps) {
  return RdpToDp(ComputeRdpCurve(q, sigma), steps, delta).epsilon;
}

// Smallest sigma (to bisection precision) whose accounted epsilon does not
// exceed the target. An infinite target is the non-private mode.
inline Calibration CalibrateSigma(double target_epsilon, double delta, double q,
                                  double steps) {
  if (std::isinf(target_epsilon) && target_epsilon > 0) return {0.0, true};
  if (!(target_epsilon > 0.0)) throw ConfigError("target epsilon must be > 0");
  constexpr double kSigmaMin = 1e-2;
  constexpr double kSigmaMax = 1e4;
  if (EpsilonFor(kSigmaMax, delta, q, steps) > target_epsilon) {
    throw CalibrationError("target epsilon unreachable with sigma <= 1e4");
  }
  double lo = kSigmaMin, hi = kSigmaMax;
  if (EpsilonFor(lo, delta, q, steps) <= target_epsilon) return {lo, false};
  // Invariant: eps(lo) > target >= eps(hi).
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (EpsilonFor(mid, delta, q, steps) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {hi, false};
}

// Tracks privacy spent by a sequence of identical subsampled-Gaussian steps.
class PrivacyAccountant {
 public:
  PrivacyAccountant(double sigma, double q, double delta)
      : delta_(delta), non_private_(sigma == 0.0) {
    if (!non_private_) curve_ = ComputeRdpCurve(q, sigma);
  }

  double EpsilonAfter(std::size_t steps) const {
    if (steps == 0) return 0.0;
    if (non_private_) return std::numeric_limits<double>::infinity();
    return RdpToDp(curve_, static_cast<double>(steps), delta_).epsilon;
  }

  const RdpCurve& curve() const { return curve_; }

 private:
  double delta_;
  bool non_private_;
  RdpCurve curve_;
};

}  // namespace dpflat

#endif  // DPFLAT_ACCOUNTANT_H_
