// Copyright 2026 The selinf Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SELINF_RNG_HPP
#define SELINF_RNG_HPP

#include <cstdint>

namespace selinf {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of substream `index` below `root`.
constexpr std::uint64_t substream(std::uint64_t root, std::uint64_t index) {
  return mix64(mix64(root) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: draw k of stream s is a pure function of (s, k),
/// so results never depend on which thread consumes a stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t stream) : stream_(stream) {}

  std::uint64_t next() { return mix64(stream_ ^ mix64(counter_++)); }
  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  /// Standard normal by inversion.
  double normal();

 private:
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Standard normal quantile.
double normal_quantile(double u);
/// Upper-tail standard normal quantile: returns x with P(Z > x) = u.
double normal_upper_quantile(double u);

}  // namespace selinf

#endif  // SELINF_RNG_HPP
