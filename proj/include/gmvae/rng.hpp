// Copyright 2026 The gmvae Authors
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

// Deterministic, splittable pseudo-random source.
//
// The core generator is xoshiro256** seeded through SplitMix64. Normal
// draws use the Box-Muller transform (cosine branch only, no caching), so a
// given seed yields the same stream on every platform with an IEEE-754 libm.

#ifndef GMVAE_RNG_HPP_
#define GMVAE_RNG_HPP_

#include <array>
#include <cstdint>

#include "gmvae/types.hpp"

namespace gmvae {

/// One step of SplitMix64. Advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for an independent child stream, derived from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). `n` must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  Matrix normal_matrix(Index rows, Index cols);

  /// Independent generator for sub-stream `stream` of this generator's seed.
  /// Does not consume state from `*this`.
  Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_;
};

}  // namespace gmvae

#endif  // GMVAE_RNG_HPP_
