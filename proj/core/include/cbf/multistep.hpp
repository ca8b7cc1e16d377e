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

#include "cbf/error.hpp"
#include "cbf/lcf.hpp"
#include "cbf/predictor.hpp"
#include "cbf/rng.hpp"

namespace cbf {

// H consecutive tokens proposed as one unit.
struct TokenBlock {
  std::vector<TokenId> tokens;
  double logprob = 0.0;  // sum of log stepwise predictor probabilities
  double h_end = 0.0;    // h(x ⊕ y) when the block was scored
};

struct MultiStepConfig {
  std::size_t horizon = 3;      // H
  std::size_t sample_size = 2;  // K admissible candidates to collect
  double gamma = 0.0;
  std::size_t max_attempts = 0;  // 0 selects 1000 * sample_size
  std::size_t workers = 1;       // concurrent block samplers

  static constexpr std::size_t kAttemptsPerCandidate = 1000;

  std::size_t effective_max_attempts() const noexcept {
    return max_attempts == 0 ? kAttemptsPerCandidate * sample_size : max_attempts;
  }
  void validate() const;
};

struct CandidateStats {
  std::size_t attempts = 0;
  std::size_t rejections = 0;
  double base_h = 0.0;
  std::vector<TokenBlock> candidates;  // in attempt order
  std::size_t chosen = 0;              // index into candidates
};

struct MultiStepResult {
  TokenBlock block;
  CandidateStats stats;
};

// Rejection sampling ran out of attempts before collecting K candidates.
class InfeasibleHorizonError : public Error {
 public:
  InfeasibleHorizonError(CandidateStats partial, double gamma);

  const CandidateStats& partial() const noexcept { return partial_; }

 private:
  CandidateStats partial_;
};

// P[y | x] = prod_h G(x ⊕ t_1 ⊕ ... ⊕ t_h)[t_{h+1}].
double block_probability(const TokenPredictor& g, const Text& x, std::span<const TokenId> y);
double block_log_probability(const TokenPredictor& g, const Text& x,
                             std::span<const TokenId> y);

// Draws H tokens one after another from the predictor. h_end is left at 0;
// callers that score the block fill it in.
TokenBlock sample_block(const TokenPredictor& g, const Text& x, std::size_t horizon, Rng& rng);

// Selection weights proportional to exp(logprob), normalized with a max
// shift so long blocks do not underflow.
std::vector<double> candidate_weights(std::span<const TokenBlock> candidates);

// Multi-step-ahead CBF step.
//
// Attempt i samples its block from the stream step_seed.child(0).child(i),
// so attempts can run on several workers and still reproduce the sequential
// result. Blocks with h(x ⊕ y) >= gamma * h(x) become candidates (duplicates
// kept) until K are collected; one is then drawn with weight proportional to
// its probability using step_seed.child(1).
MultiStepResult multistep_step(const TokenPredictor& g, const Text& x, const Lcf& h,
                               const MultiStepConfig& cfg, Seed step_seed);

struct BestOfKResult {
  TokenBlock block;
  std::vector<TokenBlock> candidates;
  double base_h = 0.0;
};

// Unconstrained baseline: samples exactly K blocks and keeps the one with the
// largest h(x ⊕ y); ties go to the larger logprob, then the lexicographically
// smaller token ids. Uses the same per-attempt streams as multistep_step.
BestOfKResult blockwise_best_of_k_step(const TokenPredictor& g, const Text& x, const Lcf& h,
                                       std::size_t horizon, std::size_t sample_size,
                                       Seed step_seed);

}  // namespace cbf
