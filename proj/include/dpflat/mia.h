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

#ifndef DPFLAT_MIA_H_
#define DPFLAT_MIA_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "dpflat/errors.h"

namespace dpflat {

inline constexpr double kDefaultFlaggedFraction = 0.01;

struct MiaReport {
  double flagged_fraction = kDefaultFlaggedFraction;
  std::size_t pool_size = 0;
  std::size_t flagged = 0;
  double threshold = 0.0;  // largest loss inside the flagged set
  double accuracy = 0.0;   // true members / flagged
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

// Loss-threshold membership inference. The pool is members followed by
// non-members (canonical indices 0..M-1, then M..M+N-1); it is ranked by loss
// ascending with ties broken by canonical index, and the lowest
// round(fraction * pool) samples are predicted to be members.
inline MiaReport LossThresholdAttack(std::span<const double> member_losses,
                                     std::span<const double> non_member_losses,
                                     double flagged_fraction =
                                         kDefaultFlaggedFraction) {
  if (member_losses.empty() || non_member_losses.empty()) {
    throw ConfigError("MIA needs non-empty member and non-member sets");
  }
  MiaReport r;
  r.flagged_fraction = flagged_fraction;
  r.pool_size = member_losses.size() + non_member_losses.size();
  r.flagged = static_cast<std::size_t>(
      std::llround(flagged_fraction * static_cast<double>(r.pool_size)));
  if (r.flagged == 0 || r.flagged > r.pool_size) {
    throw ConfigError("flagged fraction yields an empty or oversized flagged set");
  }
  const std::size_t m = member_losses.size();
  auto loss_of = [&](std::size_t i) {
    return i < m ? member_losses[i] : non_member_losses[i - m];
  };
  std::vector<std::size_t> order(r.pool_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return loss_of(a) < loss_of(b);
  });
  for (std::size_t k = 0; k < r.flagged; ++k) {
    if (order[k] < m) {
      ++r.true_positives;
    } else {
      ++r.false_positives;
    }
  }
  r.threshold = loss_of(order[r.flagged - 1]);
  r.accuracy = static_cast<double>(r.true_positives) / static_cast<double>(r.flagged);
  return r;
}

}  // namespace dpflat

#endif  // DPFLAT_MIA_H_
