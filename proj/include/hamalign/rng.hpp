// Copyright 2026 The hamalign Authors. All Rights Reserved.
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

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace hamalign {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based SplitMix64 stream.
///
/// Output n (1-based) is mix64(key + n * 0x9E3779B97F4A7C15), which is the
/// classic SplitMix64 sequence seeded with key. split(tag) derives an
/// independent child keyed by mix64(key ^ mix64(tag + 0x9E3779B97F4A7C15))
/// without advancing the parent, so adding a consumer never perturbs the
/// streams of the others.
///
/// Derived draws:
///   uniform()     = (next() >> 11) * 2^-53, in [0, 1)
///   below(n)      = floor(uniform() * n)
///   normal()      = Box-Muller cosine branch with u1 = 1 - uniform(), u2 = uniform()
class Rng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit Rng(std::uint64_t seed = 0) : key_(seed) {}

  std::uint64_t next() { return mix64(key_ + (++counter_) * kGolden); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Rng split(std::uint64_t tag) const { return Rng(mix64(key_ ^ mix64(tag + kGolden))); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stable tags for per-component child streams.
namespace stream {
inline constexpr std::uint64_t backbone = 1;
inline constexpr std::uint64_t encoder = 2;
inline constexpr std::uint64_t decoder = 3;
inline constexpr std::uint64_t ham = 4;
inline constexpr std::uint64_t discriminator = 5;
inline constexpr std::uint64_t source_train = 6;
inline constexpr std::uint64_t target_train = 7;
inline constexpr std::uint64_t source_eval = 8;
inline constexpr std::uint64_t target_eval = 9;
inline constexpr std::uint64_t order = 10;
inline constexpr std::uint64_t probe = 11;
}  // namespace stream

}  // namespace hamalign
