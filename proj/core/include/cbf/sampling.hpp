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

#include <cstddef>
#include <span>

#include "cbf/rng.hpp"
#include "cbf/text.hpp"

namespace cbf {

// Inverse-CDF draw over ascending indices. Weights need not be normalized but
// must be non-negative with a positive sum. Consumes exactly one uniform.
std::size_t draw_index(std::span<const double> weights, Rng& rng);

inline TokenId draw_token(const TokenDistribution& q, Rng& rng) {
  return TokenId::from_index(draw_index(q.probs(), rng));
}

// Lowest index among the maxima.
std::size_t argmax_index(std::span<const double> weights);

}  // namespace cbf
