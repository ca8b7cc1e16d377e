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

#include "cbf/sampling.hpp"

#include "cbf/error.hpp"

namespace cbf {

std::size_t draw_index(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidDistribution, "negative sampling weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidDistribution, "sampling weights sum to zero");
  const double u = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    cumulative += weights[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // Rounding left u at or above the accumulated total.
  return last_positive;
}

std::size_t argmax_index(std::span<const double> weights) {
  if (weights.empty()) throw Error(ErrorCode::kInvalidDistribution, "argmax of empty weights");
  std::size_t best = 0;
  for (std::size_t i = 1; i < weights.size(); ++i) {
    if (weights[i] > weights[best]) best = i;
  }
  return best;
}

}  // namespace cbf
