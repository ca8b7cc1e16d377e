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

#include "cbf/engine.hpp"

#include <algorithm>
#include <chrono>

#include "cbf/error.hpp"
#include "cbf/sampling.hpp"

namespace cbf {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kNone: return "none";
    case Mode::kCbfSingle: return "cbf_single";
    case Mode::kCbfMultistep: return "cbf_multistep";
    case Mode::kBestOfK: return "best_of_k";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::kNone, Mode::kCbfSingle, Mode::kCbfMultistep, Mode::kBestOfK}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

const char* to_string(SelectorKind k) {
  return k == SelectorKind::kGreedy ? "greedy" : "multinomial";
}

std::optional<SelectorKind> parse_selector(std::string_view s) {
  if (s == "greedy") return SelectorKind::kGreedy;
  if (s == "multinomial") return SelectorKind::kMultinomial;
  return std::nullopt;
}

TokenId select_token(SelectorKind kind, const TokenDistribution& q, Rng& rng) {
  if (kind == SelectorKind::kGreedy) return TokenId::from_index(argmax_index(q.probs()));
  return draw_token(q, rng);
}

namespace {

using Clock = std::chrono::steady_clock;

class StepTimer {
 public:
  explicit StepTimer(bool enabled) : enabled_(enabled), start_(Clock::now()) {}
  std::int64_t elapsed_ns() const {
    if (!enabled_) return 0;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
  }

 private:
  bool enabled_;
  Clock::time_point start_;
};

bool contains_eos(const Vocabulary& v, const std::vector<TokenId>& ids) {
  return v.eos() && std::find(ids.begin(), ids.end(), *v.eos()) != ids.end();
}

}  // namespace

GenerationResult generate(const GenerationRequest& req, const TokenPredictor& g, const Lcf& h) {
  if (req.max_new_tokens < 1) {
    throw Error(ErrorCode::kInvalidConfig, "max_new_tokens must be >= 1");
  }
  if (req.initial_text.vocab_ptr() != g.vocabulary()) {
    throw Error(ErrorCode::kInvalidToken, "initial text does not use the predictor's vocabulary");
  }
  if (req.mode == Mode::kCbfSingle) req.filter.validate();
  if (is_blockwise(req.mode)) req.multistep.validate();

  // Non-owning handle; the memo lives only for this run.
  const CachedLcf hc(LcfPtr(LcfPtr{}, &h));
  const Seed master{req.seed};
  Rng selector_rng(master.child(streams::kSelector));
  const Seed block_seed = master.child(streams::kBlocks);

  GenerationResult out{req.initial_text, {}, 0, false, {}};
  Text& x = out.text;
  const double h0 = hc.evaluate(x);
  if (is_cbf(req.mode) && !is_desirable(h0)) {
    throw Error(ErrorCode::kUnsafeStart,
                "h(x0) = " + std::to_string(h0) + " < 0; the safety guarantee needs a desirable start");
  }

  for (std::size_t k = 0; out.tokens_emitted < req.max_new_tokens; ++k) {
    TraceEntry e;
    e.step = k;
    StepTimer timer(req.measure_time);
    try {
      switch (req.mode) {
        case Mode::kNone: {
          const TokenId t = select_token(req.selector, g.predict(x), selector_rng);
          x = concat(x, t);
          e.elapsed_ns = timer.elapsed_ns();
          e.token_or_block = {t};
          break;
        }
        case Mode::kCbfSingle: {
          const FilterResult f =
              req.filter.delta > 0.0
                  ? filter_relaxed(g.predict(x), x, hc, req.filter.gamma, req.filter.delta)
                  : filter_topk(g, x, hc, req.filter);
          const TokenId t = select_token(req.selector, f.q, selector_rng);
          x = concat(x, t);
          e.elapsed_ns = timer.elapsed_ns();
          e.token_or_block = {t};
          e.disallowed_count = f.disallowed_count;
          e.scans_or_attempts = f.scans;
          e.truncated = f.truncated;
          break;
        }
        case Mode::kCbfMultistep: {
          MultiStepConfig cfg = req.multistep;
          cfg.horizon = std::min(cfg.horizon, req.max_new_tokens - out.tokens_emitted);
          const auto r = multistep_step(g, x, hc, cfg, block_seed.child(k));
          x = concat(x, r.block.tokens);
          e.elapsed_ns = timer.elapsed_ns();
          e.token_or_block = r.block.tokens;
          e.disallowed_count = r.stats.rejections;
          e.scans_or_attempts = r.stats.attempts;
          break;
        }
        case Mode::kBestOfK: {
          const std::size_t horizon =
              std::min(req.multistep.horizon, req.max_new_tokens - out.tokens_emitted);
          const auto r = blockwise_best_of_k_step(g, x, hc, horizon,
                                                  req.multistep.sample_size, block_seed.child(k));
          x = concat(x, r.block.tokens);
          e.elapsed_ns = timer.elapsed_ns();
          e.token_or_block = r.block.tokens;
          e.scans_or_attempts = r.candidates.size();
          break;
        }
      }
    } catch (const InfeasibleConstraintError& err) {
      e.elapsed_ns = timer.elapsed_ns();
      e.scans_or_attempts = err.scans();
      e.disallowed_count = err.scans();
      e.aborted = true;
      out.abort_reason = err.what();
    } catch (const InfeasibleHorizonError& err) {
      e.elapsed_ns = timer.elapsed_ns();
      e.scans_or_attempts = err.partial().attempts;
      e.disallowed_count = err.partial().rejections;
      e.aborted = true;
      out.abort_reason = err.what();
    }
    // Trace bookkeeping stays outside the timed region. For cbf modes both
    // values are already memoized by the filter.
    const std::size_t len_before = x.size() - e.token_or_block.size();
    e.base_h = hc.evaluate(x.prefix(len_before));
    e.h_value = hc.evaluate(x);
    out.trace.push_back(std::move(e));
    const TraceEntry& last = out.trace.back();
    if (last.aborted) {
      out.aborted = true;
      break;
    }
    out.tokens_emitted += last.token_or_block.size();
    if (req.stop_at_eos && contains_eos(x.vocab(), last.token_or_block)) break;
  }
  return out;
}

}  // namespace cbf
