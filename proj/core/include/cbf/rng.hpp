// Copyright 2026 The cbfdecode Authors.
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

#pragma once

#include <cstdint>
#include <random>

namespace cbf {

// A 64-bit seed that can be split into independent child streams.
//
// child(i) mixes the parent value and the index through SplitMix64, so any
// stream is a pure function of (master seed, path of indices). Sampling code
// that needs reproducibility under concurrency derives one child per unit of
// work instead of sharing a generator.
struct Seed {
  std::uint64_t value = 0;

  constexpr Seed child(std::uint64_t index) const noexcept {
    return Seed{mix(mix(value) ^ (index + 0x632be59bd9b4e019ULL))};
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  friend constexpr bool operator==(Seed, Seed) = default;
};

// Well-known child indices of a request's master seed.
namespace streams {
inline constexpr std::uint64_t kSelector = 1;
inline constexpr std::uint64_t kBlocks = 2;
inline constexpr std::uint64_t kProbe = 3;
}  // namespace streams

class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed.value) {}

  // Uniform in [0, 1) with 53 random bits; independent of the standard
  // library's distribution implementations.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cbf
