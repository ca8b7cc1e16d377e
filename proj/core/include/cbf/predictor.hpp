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

#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <utility>
#include <vector>

#include "cbf/text.hpp"

namespace cbf {

struct PredictorCapabilities {
  bool supports_full_distribution = true;
  bool supports_paged_topm = true;
};

// One page of a descending-sorted distribution: ranks offset+1..offset+m.
struct PagedPrediction {
  std::vector<std::pair<TokenId, double>> entries;
  std::size_t offset = 0;
  // Probability mass of every rank after this page.
  double remaining_mass = 0.0;
};

// Builds a page from a full distribution using the library-wide ranking
// (descending probability, ascending id on ties).
PagedPrediction page_of(const TokenDistribution& p, std::size_t offset, std::size_t m);

// The token predictor G: Text -> distribution over the vocabulary.
//
// Local implementations are immutable after construction and safe to call
// concurrently. predict() on the same text must be bit-for-bit repeatable.
class TokenPredictor {
 public:
  virtual ~TokenPredictor() = default;

  virtual const VocabularyPtr& vocabulary() const = 0;
  virtual PredictorCapabilities capabilities() const { return {}; }
  virtual TokenDistribution predict(const Text& x) const = 0;

  // Default implementation sorts predict(x).
  virtual PagedPrediction predict_topm(const Text& x, std::size_t offset,
                                       std::size_t m) const;

 protected:
  // Raises kInvalidToken unless x belongs to this predictor's vocabulary.
  void check_text(const Text& x) const;
};

using PredictorPtr = std::shared_ptr<const TokenPredictor>;

class UniformPredictor final : public TokenPredictor {
 public:
  explicit UniformPredictor(VocabularyPtr vocab) : vocab_(std::move(vocab)) {}

  const VocabularyPtr& vocabulary() const override { return vocab_; }
  TokenDistribution predict(const Text& x) const override;

 private:
  VocabularyPtr vocab_;
};

// Adapts a callable returning a probability vector; mostly for hand-built
// toy models whose conditionals are known in closed form.
class FunctionPredictor final : public TokenPredictor {
 public:
  using Fn = std::function<std::vector<double>(const Text&)>;

  FunctionPredictor(VocabularyPtr vocab, Fn fn)
      : vocab_(std::move(vocab)), fn_(std::move(fn)) {}

  const VocabularyPtr& vocabulary() const override { return vocab_; }
  TokenDistribution predict(const Text& x) const override;

 private:
  VocabularyPtr vocab_;
  Fn fn_;
};

// Memoizes predict() per token sequence. Concurrent reads, exclusive writes.
// Intended to live for one generation run.
class CachingPredictor final : public TokenPredictor {
 public:
  explicit CachingPredictor(PredictorPtr inner) : inner_(std::move(inner)) {}

  const VocabularyPtr& vocabulary() const override { return inner_->vocabulary(); }
  PredictorCapabilities capabilities() const override { return inner_->capabilities(); }
  TokenDistribution predict(const Text& x) const override;

  std::size_t misses() const;

 private:
  PredictorPtr inner_;
  mutable std::shared_mutex mu_;
  mutable std::map<std::vector<TokenId>, TokenDistribution> cache_;
  mutable std::size_t misses_ = 0;
};

}  // namespace cbf
