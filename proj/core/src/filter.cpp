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

#include "cbf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "cbf/error.hpp"

namespace cbf {

void FilterConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "gamma must lie in [0, 1]");
  }
  if (!(delta >= 0.0 && delta < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "delta must lie in [0, 1)");
  }
  if (top_k < 1) throw Error(ErrorCode::kInvalidConfig, "top_k must be >= 1");
  if (effective_scan_cap() < top_k) {
    throw Error(ErrorCode::kInvalidConfig, "scan_cap must be >= top_k");
  }
}

Admissibility is_allowed(const Lcf& h, double base_h, const Text& x, TokenId t,
                         double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "gamma must lie in [0, 1]");
  }
  const double h_next = h.evaluate(concat(x, t));
  return {satisfies_cbf(h_next, base_h, gamma), h_next};
}

Admissibility is_allowed(const Lcf& h, const Text& x, TokenId t, double gamma) {
  return is_allowed(h, h.evaluate(x), x, t, gamma);
}

TokenDistribution restrict_and_renormalize(const TokenDistribution& p,
                                           const std::vector<bool>& allowed, double gamma,
                                           double base_h) {
  if (allowed.size() != p.size()) {
    throw Error(ErrorCode::kInvalidDistribution, "allowed mask does not match vocabulary");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (allowed[i]) mass += p.probs()[i];
  }
  if (!(mass > 0.0)) throw InfeasibleConstraintError(gamma, base_h, p.size());
  std::vector<double> q(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (allowed[i]) q[i] = p.probs()[i] / mass;
  }
  return TokenDistribution::from_probs(std::move(q));
}

TokenDistribution relaxed_projection(const TokenDistribution& p, const std::vector<bool>& allowed,
                                     double delta, double gamma, double base_h) {
  if (!(delta >= 0.0 && delta < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "delta must lie in [0, 1)");
  }
  if (delta == 0.0) return restrict_and_renormalize(p, allowed, gamma, base_h);
  if (allowed.size() != p.size()) {
    throw Error(ErrorCode::kInvalidDistribution, "allowed mask does not match vocabulary");
  }
  double allowed_mass = 0.0;
  double disallowed_mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    (allowed[i] ? allowed_mass : disallowed_mass) += p.probs()[i];
  }
  if (disallowed_mass <= delta) return p;
  if (!(allowed_mass > 0.0)) throw InfeasibleConstraintError(gamma, base_h, p.size());
  const double allowed_scale = (1.0 - delta) / allowed_mass;
  const double disallowed_scale = delta / disallowed_mass;
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p.probs()[i] * (allowed[i] ? allowed_scale : disallowed_scale);
  }
  return TokenDistribution::from_probs(std::move(q));
}

namespace {

std::vector<bool> evaluate_all(const TokenDistribution& p, const Text& x, const Lcf& h,
                               double gamma, double base_h, FilterResult& out) {
  if (p.size() != x.vocab().size()) {
    throw Error(ErrorCode::kInvalidDistribution, "distribution does not match the text's vocabulary");
  }
  std::vector<bool> mask(p.size(), false);
  out.examined.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const TokenId t = TokenId::from_index(i);
    const auto a = is_allowed(h, base_h, x, t, gamma);
    mask[i] = a.allowed;
    out.examined.push_back({t, a.h_next, a.allowed});
    if (a.allowed) {
      out.allowed.push_back(t);
    } else {
      ++out.disallowed_count;
    }
  }
  out.scans = p.size();
  return mask;
}

// A source of (token, probability) pairs in descending rank order.
using RankedSource = std::function<std::optional<std::pair<TokenId, double>>()>;

FilterResult scan_topk(RankedSource next, std::size_t vocab_size, const Text& x, const Lcf& h,
                       const FilterConfig& cfg) {
  cfg.validate();
  FilterResult r{TokenDistribution::from_probs({1.0}), {}, 0, 0, h.evaluate(x), false, {}};
  const std::size_t cap = std::min(cfg.effective_scan_cap(), vocab_size);
  std::vector<std::pair<TokenId, double>> kept;
  while (r.allowed.size() < cfg.top_k && r.scans < cap) {
    auto item = next();
    if (!item) break;
    const auto a = is_allowed(h, r.base_h, x, item->first, cfg.gamma);
    ++r.scans;
    r.examined.push_back({item->first, a.h_next, a.allowed});
    if (a.allowed) {
      r.allowed.push_back(item->first);
      kept.push_back(*item);
    } else {
      ++r.disallowed_count;
    }
  }
  if (r.allowed.empty()) throw InfeasibleConstraintError(cfg.gamma, r.base_h, r.scans);
  r.truncated = r.allowed.size() < cfg.top_k && r.scans < vocab_size;
  double mass = 0.0;
  for (const auto& [t, p] : kept) mass += p;
  if (!(mass > 0.0)) throw InfeasibleConstraintError(cfg.gamma, r.base_h, r.scans);
  std::vector<double> q(vocab_size, 0.0);
  for (const auto& [t, p] : kept) q[t.index()] = p / mass;
  r.q = TokenDistribution::from_probs(std::move(q));
  return r;
}

}  // namespace

FilterResult filter_full(const TokenDistribution& p, const Text& x, const Lcf& h,
                         double gamma) {
  FilterResult r{p, {}, 0, 0, h.evaluate(x), false, {}};
  const auto mask = evaluate_all(p, x, h, gamma, r.base_h, r);
  r.q = restrict_and_renormalize(p, mask, gamma, r.base_h);
  return r;
}

FilterResult filter_relaxed(const TokenDistribution& p, const Text& x, const Lcf& h,
                            double gamma, double delta) {
  if (delta == 0.0) return filter_full(p, x, h, gamma);
  FilterResult r{p, {}, 0, 0, h.evaluate(x), false, {}};
  const auto mask = evaluate_all(p, x, h, gamma, r.base_h, r);
  r.q = relaxed_projection(p, mask, delta, gamma, r.base_h);
  return r;
}

FilterResult filter_topk(const TokenDistribution& p, const Text& x, const Lcf& h,
                         const FilterConfig& cfg) {
  if (p.size() != x.vocab().size()) {
    throw Error(ErrorCode::kInvalidDistribution, "distribution does not match the text's vocabulary");
  }
  // Heap pops give the ranked order without sorting the whole vocabulary.
  std::vector<TokenId> heap(p.size());
  for (std::size_t i = 0; i < heap.size(); ++i) heap[i] = TokenId::from_index(i);
  const auto ranks_after = [&p](TokenId a, TokenId b) {
    return p[a] < p[b] || (p[a] == p[b] && a.value > b.value);
  };
  std::make_heap(heap.begin(), heap.end(), ranks_after);
  auto end = heap.end();
  RankedSource next = [&]() -> std::optional<std::pair<TokenId, double>> {
    if (end == heap.begin()) return std::nullopt;
    std::pop_heap(heap.begin(), end, ranks_after);
    --end;
    return std::pair{*end, p[*end]};
  };
  return scan_topk(next, p.size(), x, h, cfg);
}

FilterResult filter_topk(const TokenPredictor& g, const Text& x, const Lcf& h,
                         const FilterConfig& cfg) {
  const auto caps = g.capabilities();
  if (caps.supports_full_distribution || !caps.supports_paged_topm) {
    return filter_topk(g.predict(x), x, h, cfg);
  }
  // Pull pages lazily so a remote backend only ships the ranks we examine.
  const std::size_t page_size = std::max<std::size_t>(cfg.top_k, 64);
  PagedPrediction page;
  std::size_t pos = 0;
  std::size_t offset = 0;
  bool exhausted = false;
  RankedSource next = [&]() -> std::optional<std::pair<TokenId, double>> {
    if (pos >= page.entries.size()) {
      if (exhausted) return std::nullopt;
      page = g.predict_topm(x, offset, page_size);
      offset += page.entries.size();
      pos = 0;
      if (page.entries.size() < page_size) exhausted = true;
      if (page.entries.empty()) return std::nullopt;
    }
    return page.entries[pos++];
  };
  return scan_topk(next, x.vocab().size(), x, h, cfg);
}

}  // namespace cbf
