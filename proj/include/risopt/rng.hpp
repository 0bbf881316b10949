// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "risopt/core.hpp"

namespace risopt {

/// Stream identifiers. Each random object in a scenario draws from its own
/// stream so adding objects never perturbs existing ones.
namespace stream {
inline constexpr std::uint64_t kUserAngles = 1;
inline constexpr std::uint64_t kBsRis = 2;
inline constexpr std::uint64_t kInitPhases = 3;
inline constexpr std::uint64_t kDirectBase = 1000;
inline constexpr std::uint64_t kRisUserBase = 2000;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seedable generator for one stream. mt19937_64 output is fixed by the
/// standard; the uniform/normal transforms below are written out so samples
/// are identical across standard library implementations.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, the pair partner is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  /// Circularly-symmetric complex Gaussian with unit variance (E|z|^2 = 1).
  cplx complex_normal() {
    const double re = normal();
    const double im = normal();
    return {re * std::sqrt(0.5), im * std::sqrt(0.5)};
  }

  cplx unit_phase() {
    const double theta = uniform(0.0, 2.0 * kPi);
    return {std::cos(theta), std::sin(theta)};
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace risopt
