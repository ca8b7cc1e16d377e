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
#include <vector>

#include "cbf/lcf.hpp"
#include "cbf/predictor.hpp"
#include "cbf/text.hpp"

namespace cbf {

// Hyperparameters of the CBF filter.
//
// gamma is the decay rate in h(x ⊕ t) >= gamma * h(x). delta is the tolerated
// probability of selecting a disallowed token (0 = strict). top_k is the
// number of admissible tokens the scan tries to collect and scan_cap bounds
// how many tokens it may examine (0 selects 200 * top_k).
struct FilterConfig {
  double gamma = 0.0;
  double delta = 0.0;
  std::size_t top_k = 30;
  std::size_t scan_cap = 0;

  static constexpr std::size_t kScanCapPerK = 200;

  std::size_t effective_scan_cap() const noexcept {
    return scan_cap == 0 ? kScanCapPerK * top_k : scan_cap;
  }
  // Raises kInvalidConfig.
  void validate() const;
};

// One examined token and its look-ahead value h(x ⊕ t).
struct ScannedToken {
  TokenId token;
  double h_next = 0.0;
  bool allowed = false;
};

struct FilterResult {
  TokenDistribution q;
  std::vector<TokenId> allowed;   // in scan order
  std::size_t disallowed_count = 0;
  std::size_t scans = 0;          // == disallowed_count + allowed.size()
  double base_h = 0.0;            // h(x)
  bool truncated = false;         // scan cap hit before top_k admissible tokens were found
  std::vector<ScannedToken> examined;
};

inline bool satisfies_cbf(double h_next, double base_h, double gamma) {
  return h_next >= gamma * base_h;
}

struct Admissibility {
  bool allowed = false;
  double h_next = 0.0;
};

// Checks h(x ⊕ t) >= gamma * h(x) with an exact comparison and returns the
// evaluated h(x ⊕ t).
Admissibility is_allowed(const Lcf& h, const Text& x, TokenId t, double gamma);
Admissibility is_allowed(const Lcf& h, double base_h, const Text& x, TokenId t, double gamma);

// Zero every entry outside `allowed` and renormalize. This is the KL-minimal
// distribution supported on the allowed set. Raises InfeasibleConstraintError
// (with the supplied gamma/base_h for diagnostics) when the allowed mass is 0.
TokenDistribution restrict_and_renormalize(const TokenDistribution& p,
                                           const std::vector<bool>& allowed, double gamma = 0.0,
                                           double base_h = 0.0);

// KL-minimal q subject to sum over disallowed of q <= delta: q = p when the
// disallowed mass D is already <= delta, otherwise the disallowed group is
// scaled to total delta and the allowed group to 1 - delta, each
// proportionally. delta == 0 is exactly restrict_and_renormalize.
TokenDistribution relaxed_projection(const TokenDistribution& p, const std::vector<bool>& allowed,
                                     double delta, double gamma = 0.0, double base_h = 0.0);

// Evaluates every token of the vocabulary and applies the closed-form
// projection.
FilterResult filter_full(const TokenDistribution& p, const Text& x, const Lcf& h, double gamma);

// Scans tokens in descending probability (ties by ascending id) until top_k
// admissible tokens are collected, the scan cap is reached, or the vocabulary
// is exhausted, then renormalizes over the collected tokens. Raises
// InfeasibleConstraintError only when nothing admissible was found.
FilterResult filter_topk(const TokenPredictor& g, const Text& x, const Lcf& h,
                         const FilterConfig& cfg);

// Ranked variant over an already predicted distribution.
FilterResult filter_topk(const TokenDistribution& p, const Text& x, const Lcf& h,
                         const FilterConfig& cfg);

FilterResult filter_relaxed(const TokenDistribution& p, const Text& x, const Lcf& h,
                            double gamma, double delta);

}  // namespace cbf
