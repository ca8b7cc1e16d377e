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

#include "cbf/predictor.hpp"

#include <algorithm>
#include <mutex>

#include "cbf/error.hpp"

namespace cbf {

PagedPrediction page_of(const TokenDistribution& p, std::size_t offset, std::size_t m) {
  PagedPrediction page;
  page.offset = offset;
  if (offset >= p.size()) return page;
  auto order = p.ranked();
  std::size_t end = std::min(p.size(), offset + m);
  page.entries.reserve(end - offset);
  for (std::size_t r = offset; r < end; ++r) page.entries.emplace_back(order[r], p[order[r]]);
  double rest = 0.0;
  for (std::size_t r = end; r < order.size(); ++r) rest += p[order[r]];
  page.remaining_mass = rest;
  return page;
}

PagedPrediction TokenPredictor::predict_topm(const Text& x, std::size_t offset,
                                             std::size_t m) const {
  if (m == 0) throw Error(ErrorCode::kInvalidConfig, "predict_topm: page size must be >= 1");
  return page_of(predict(x), offset, m);
}

void TokenPredictor::check_text(const Text& x) const {
  if (x.vocab_ptr() != vocabulary()) {
    throw Error(ErrorCode::kInvalidToken, "text belongs to a different vocabulary");
  }
}

TokenDistribution UniformPredictor::predict(const Text& x) const {
  check_text(x);
  const std::size_t n = vocab_->size();
  return TokenDistribution::from_probs(std::vector<double>(n, 1.0 / static_cast<double>(n)),
                                       TokenDistribution::Support::kStrictlyPositive);
}

TokenDistribution FunctionPredictor::predict(const Text& x) const {
  check_text(x);
  auto probs = fn_(x);
  if (probs.size() != vocab_->size()) {
    throw Error(ErrorCode::kInvalidDistribution, "predictor returned wrong vocabulary size");
  }
  return TokenDistribution::from_probs(std::move(probs),
                                       TokenDistribution::Support::kStrictlyPositive);
}

TokenDistribution CachingPredictor::predict(const Text& x) const {
  {
    std::shared_lock lock(mu_);
    auto it = cache_.find(x.ids());
    if (it != cache_.end()) return it->second;
  }
  auto p = inner_->predict(x);
  std::unique_lock lock(mu_);
  auto [it, inserted] = cache_.emplace(x.ids(), std::move(p));
  if (inserted) ++misses_;
  return it->second;
}

std::size_t CachingPredictor::misses() const {
  std::shared_lock lock(mu_);
  return misses_;
}

}  // namespace cbf
