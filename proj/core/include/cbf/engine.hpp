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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbf/filter.hpp"
#include "cbf/lcf.hpp"
#include "cbf/multistep.hpp"
#include "cbf/predictor.hpp"
#include "cbf/rng.hpp"

namespace cbf {

enum class Mode { kNone, kCbfSingle, kCbfMultistep, kBestOfK };

const char* to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);
inline bool is_cbf(Mode m) { return m == Mode::kCbfSingle || m == Mode::kCbfMultistep; }
inline bool is_blockwise(Mode m) { return m == Mode::kCbfMultistep || m == Mode::kBestOfK; }

enum class SelectorKind { kGreedy, kMultinomial };

const char* to_string(SelectorKind k);
std::optional<SelectorKind> parse_selector(std::string_view s);

// Token selector C. Greedy picks the lowest-id maximum; multinomial draws by
// inverse CDF over ascending ids.
TokenId select_token(SelectorKind kind, const TokenDistribution& q, Rng& rng);

struct GenerationRequest {
  Text initial_text;
  std::size_t max_new_tokens = 30;
  Mode mode = Mode::kNone;
  FilterConfig filter;         // gamma/delta/top-K for cbf_single
  MultiStepConfig multistep;   // horizon/K for cbf_multistep and best_of_k
  SelectorKind selector = SelectorKind::kMultinomial;
  std::uint64_t seed = 0;
  bool stop_at_eos = true;
  bool measure_time = true;    // false writes elapsed_ns = 0

  // gamma governing the active mode.
  double gamma() const noexcept {
    return mode == Mode::kCbfMultistep ? multistep.gamma : filter.gamma;
  }
};

// One emitted token (or block). The aborting step of an infeasible run is
// recorded with an empty token list and aborted = true.
struct TraceEntry {
  std::size_t step = 0;
  std::vector<TokenId> token_or_block;
  double h_value = 0.0;  // h(x(k+1))
  double base_h = 0.0;   // h(x(k))
  std::size_t disallowed_count = 0;
  std::size_t scans_or_attempts = 0;
  std::int64_t elapsed_ns = 0;
  bool truncated = false;
  bool aborted = false;
};

struct GenerationResult {
  Text text;
  std::vector<TraceEntry> trace;
  std::size_t tokens_emitted = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Runs x(k+1) = x(k) ⊕ C(F(G(x(k)))) until max_new_tokens (or eos).
//
// The L-CF is memoized for the duration of the call. cbf modes raise
// kUnsafeStart when h(x0) < 0. An infeasible filter step ends the run early
// with the partial text and an aborted trace entry instead of raising.
GenerationResult generate(const GenerationRequest& req, const TokenPredictor& g, const Lcf& h);

}  // namespace cbf
