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
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "cbf/predictor.hpp"

namespace cbf {

// Add-alpha smoothed n-gram model.
//
// A context is the last (order - 1) tokens. Seen contexts predict
//   (c(ctx, t) + alpha) / (c(ctx) + alpha * N);
// texts shorter than the context, and unseen contexts, fall back to the
// smoothed unigram marginal (c(t) + alpha) / (total + alpha * N). Every
// induced distribution is therefore strictly positive.
class NGramModel final : public TokenPredictor {
 public:
  using Counts = std::vector<std::uint64_t>;  // indexed by TokenId::index()

  NGramModel(VocabularyPtr vocab, int order, double alpha, Counts unigram,
             std::map<std::vector<TokenId>, Counts> contexts);

  const VocabularyPtr& vocabulary() const override { return vocab_; }
  TokenDistribution predict(const Text& x) const override;

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const Counts& unigram_counts() const noexcept { return unigram_; }
  const std::map<std::vector<TokenId>, Counts>& context_counts() const noexcept {
    return contexts_;
  }
  // nullptr when the context was never observed.
  const Counts* counts_for(std::span<const TokenId> context) const;

  // JSON persistence; schema in docs/formats.md.
  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<const NGramModel> load(const std::filesystem::path& path);

 private:
  TokenDistribution smoothed(const Counts& counts) const;

  VocabularyPtr vocab_;
  int order_;
  double alpha_;
  Counts unigram_;
  std::uint64_t unigram_total_ = 0;
  std::map<std::vector<TokenId>, Counts> contexts_;
};

// Counts every order-gram inside each text (no boundary padding) plus
// unigram counts. Raises kTrainingInput on an empty corpus, order < 1 or
// alpha <= 0.
std::shared_ptr<const NGramModel> train_ngram(std::span<const Text> corpus, int order,
                                              double alpha);

// Reads one text per non-empty line and builds a word-level vocabulary from
// the tokens in first-appearance order.
struct Corpus {
  VocabularyPtr vocab;
  std::vector<Text> texts;
};
Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<std::string>& eos_token = std::nullopt);
// Reads a corpus against an existing vocabulary.
std::vector<Text> load_texts(const std::filesystem::path& path, const VocabularyPtr& vocab);

}  // namespace cbf
