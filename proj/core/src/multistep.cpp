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

#include "cbf/multistep.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "cbf/filter.hpp"
#include "cbf/sampling.hpp"

namespace cbf {

void MultiStepConfig::validate() const {
  if (horizon < 1) throw Error(ErrorCode::kInvalidConfig, "horizon must be >= 1");
  if (sample_size < 1) throw Error(ErrorCode::kInvalidConfig, "sample size must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "gamma must lie in [0, 1]");
  }
  if (effective_max_attempts() < sample_size) {
    throw Error(ErrorCode::kInvalidConfig, "max_attempts must be >= sample size");
  }
  if (workers < 1) throw Error(ErrorCode::kInvalidConfig, "workers must be >= 1");
}

InfeasibleHorizonError::InfeasibleHorizonError(CandidateStats partial, double gamma)
    : Error(ErrorCode::kInfeasibleHorizon,
            "collected " + std::to_string(partial.candidates.size()) +
                " admissible blocks in " + std::to_string(partial.attempts) +
                " attempts (gamma=" + std::to_string(gamma) +
                ", h(x)=" + std::to_string(partial.base_h) + ")"),
      partial_(std::move(partial)) {}

double block_probability(const TokenPredictor& g, const Text& x, std::span<const TokenId> y) {
  double prob = 1.0;
  Text prefix = x;
  for (TokenId t : y) {
    prob *= g.predict(prefix)[t];
    prefix = concat(prefix, t);
  }
  return prob;
}

double block_log_probability(const TokenPredictor& g, const Text& x,
                             std::span<const TokenId> y) {
  double lp = 0.0;
  Text prefix = x;
  for (TokenId t : y) {
    lp += std::log(g.predict(prefix)[t]);
    prefix = concat(prefix, t);
  }
  return lp;
}

TokenBlock sample_block(const TokenPredictor& g, const Text& x, std::size_t horizon, Rng& rng) {
  if (horizon < 1) throw Error(ErrorCode::kInvalidConfig, "horizon must be >= 1");
  TokenBlock block;
  block.tokens.reserve(horizon);
  Text y = x;
  for (std::size_t i = 0; i < horizon; ++i) {
    const auto p = g.predict(y);
    const TokenId t = draw_token(p, rng);
    block.logprob += std::log(p[t]);
    block.tokens.push_back(t);
    y = concat(y, t);
  }
  return block;
}

std::vector<double> candidate_weights(std::span<const TokenBlock> candidates) {
  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) max_lp = std::max(max_lp, c.logprob);
  std::vector<double> w(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    w[i] = std::exp(candidates[i].logprob - max_lp);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

TokenBlock scored_attempt(const TokenPredictor& g, const Text& x, const Lcf& h,
                          std::size_t horizon, Seed attempts_seed, std::size_t index) {
  Rng rng(attempts_seed.child(index));
  TokenBlock b = sample_block(g, x, horizon, rng);
  b.h_end = h.evaluate(concat(x, b.tokens));
  return b;
}

// Runs attempts [first, first + count) and returns them in index order.
std::vector<TokenBlock> run_attempts(const TokenPredictor& g, const Text& x, const Lcf& h,
                                     std::size_t horizon, Seed attempts_seed, std::size_t first,
                                     std::size_t count, std::size_t workers) {
  std::vector<TokenBlock> out;
  out.reserve(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(scored_attempt(g, x, h, horizon, attempts_seed, first + i));
    }
    return out;
  }
  std::vector<std::future<TokenBlock>> pending;
  pending.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    pending.push_back(std::async(std::launch::async, [&, i] {
      return scored_attempt(g, x, h, horizon, attempts_seed, first + i);
    }));
  }
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

}  // namespace

MultiStepResult multistep_step(const TokenPredictor& g, const Text& x, const Lcf& h,
                               const MultiStepConfig& cfg, Seed step_seed) {
  cfg.validate();
  const Seed attempts_seed = step_seed.child(0);
  CandidateStats stats;
  stats.base_h = h.evaluate(x);
  const std::size_t max_attempts = cfg.effective_max_attempts();
  while (stats.candidates.size() < cfg.sample_size && stats.attempts < max_attempts) {
    const std::size_t batch = std::min(cfg.workers, max_attempts - stats.attempts);
    auto blocks = run_attempts(g, x, h, cfg.horizon, attempts_seed, stats.attempts, batch,
                               cfg.workers);
    // Merge in attempt order; anything past the K-th acceptance is discarded
    // so the outcome matches a purely sequential run.
    for (auto& b : blocks) {
      ++stats.attempts;
      if (satisfies_cbf(b.h_end, stats.base_h, cfg.gamma)) {
        stats.candidates.push_back(std::move(b));
        if (stats.candidates.size() == cfg.sample_size) break;
      } else {
        ++stats.rejections;
      }
    }
  }
  if (stats.candidates.size() < cfg.sample_size) {
    throw InfeasibleHorizonError(std::move(stats), cfg.gamma);
  }
  Rng select_rng(step_seed.child(1));
  const auto weights = candidate_weights(stats.candidates);
  stats.chosen = draw_index(weights, select_rng);
  MultiStepResult r{stats.candidates[stats.chosen], std::move(stats)};
  return r;
}

BestOfKResult blockwise_best_of_k_step(const TokenPredictor& g, const Text& x, const Lcf& h,
                                       std::size_t horizon, std::size_t sample_size,
                                       Seed step_seed) {
  if (sample_size < 1) throw Error(ErrorCode::kInvalidConfig, "sample size must be >= 1");
  if (horizon < 1) throw Error(ErrorCode::kInvalidConfig, "horizon must be >= 1");
  BestOfKResult r;
  r.base_h = h.evaluate(x);
  r.candidates = run_attempts(g, x, h, horizon, step_seed.child(0), 0, sample_size, 1);
  auto better = [](const TokenBlock& a, const TokenBlock& b) {
    if (a.h_end != b.h_end) return a.h_end > b.h_end;
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.tokens < b.tokens;
  };
  r.block = *std::min_element(r.candidates.begin(), r.candidates.end(),
                              [&](const TokenBlock& a, const TokenBlock& b) { return better(a, b); });
  return r;
}

}  // namespace cbf
