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

#ifndef DPFLAT_RNG_H_
#define DPFLAT_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

#include "dpflat/tensor.h"

namespace dpflat {

namespace internal {

constexpr std::uint64_t Mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace internal

// Identifies one independent random stream: what the draws are for, and at
// which (step, sample) coordinate they are taken.
struct StreamKey {
  std::string_view purpose;
  std::uint64_t step = 0;
  std::uint64_t sample = 0;
};

// SplitMix64 generator whose starting state is a hash of the root seed and
// the stream key. Two streams with the same (root_seed, key) produce the same
// sequence no matter when or in which order they are created.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t root_seed, const StreamKey& key)
      : state_(Derive(root_seed, key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return internal::Mix64(state_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double Gaussian() {
    // Box-Muller; one fresh pair per call keeps the draw count explicit.
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    ++gaussian_draws_;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t gaussian_draws() const { return gaussian_draws_; }

  static std::uint64_t Derive(std::uint64_t root_seed, const StreamKey& key) {
    std::uint64_t h = internal::Mix64(root_seed ^ 0x6a09e667f3bcc909ULL);
    h = internal::Mix64(h ^ internal::Fnv1a(key.purpose));
    h = internal::Mix64(h ^ (key.step * 0x9e3779b97f4a7c15ULL));
    h = internal::Mix64(h ^ (key.sample + 0x3c6ef372fe94f82bULL));
    return h;
  }

 private:
  std::uint64_t state_;
  std::uint64_t gaussian_draws_ = 0;
};

// Fills a tensor of the given shape with i.i.d. standard normal draws.
inline Tensor DrawGaussian(RngStream& stream, std::vector<std::size_t> shape) {
  if (shape.empty()) throw ConfigError("draw_gaussian requires a shape");
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stream.Gaussian();
  return t;
}

inline Tensor DrawGaussian(std::uint64_t root_seed, const StreamKey& key,
                           std::vector<std::size_t> shape) {
  RngStream stream(root_seed, key);
  return DrawGaussian(stream, std::move(shape));
}

}  // namespace dpflat

#endif  // DPFLAT_RNG_H_
