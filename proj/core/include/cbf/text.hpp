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
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cbf {

// Token identifier. Ids are 1-based (1..N) on every external surface; use
// index() for 0-based storage.
struct TokenId {
  std::uint32_t value = 0;

  constexpr std::size_t index() const noexcept { return value - 1; }
  static constexpr TokenId from_index(std::size_t i) noexcept {
    return TokenId{static_cast<std::uint32_t>(i + 1)};
  }

  friend constexpr auto operator<=>(TokenId, TokenId) = default;
};

// Ordered token strings plus the rule for joining them back into a string.
//
// Word-level vocabularies use " " as separator, character-level and remote
// vocabularies use "". Every id renders to a distinct string.
class Vocabulary {
 public:
  static std::shared_ptr<const Vocabulary> create(
      std::vector<std::string> tokens, std::string separator,
      std::optional<TokenId> eos = std::nullopt);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(TokenId t) const noexcept {
    return t.value >= 1 && t.value <= tokens_.size();
  }
  const std::string& token(TokenId t) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& separator() const noexcept { return separator_; }
  std::optional<TokenId> eos() const noexcept { return eos_; }

  // Splits on whitespace when the separator is non-empty; otherwise greedy
  // longest match over the token strings. Unknown pieces raise kInvalidToken.
  std::vector<TokenId> encode(std::string_view text) const;

  // Stable hex digest of tokens, separator and eos. Used as the vocab id in
  // traces.
  std::string fingerprint() const;

 private:
  Vocabulary() = default;

  std::vector<std::string> tokens_;
  std::string separator_;
  std::optional<TokenId> eos_;
  std::unordered_map<std::string, TokenId> lookup_;
  std::size_t max_token_bytes_ = 0;
};

using VocabularyPtr = std::shared_ptr<const Vocabulary>;

// A token sequence together with its rendering. Immutable value type; the
// vocabulary is shared by pointer and is the identity a Text is valid
// against.
class Text {
 public:
  explicit Text(VocabularyPtr vocab);

  static Text from_ids(VocabularyPtr vocab, std::vector<TokenId> ids);
  static Text parse(VocabularyPtr vocab, std::string_view text);

  const std::vector<TokenId>& ids() const noexcept { return ids_; }
  const std::string& rendered() const noexcept { return rendered_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  const VocabularyPtr& vocab_ptr() const noexcept { return vocab_; }
  const std::string& token_string(std::size_t position) const {
    return vocab_->token(ids_.at(position));
  }

  Text prefix(std::size_t n) const;

  friend Text concat(const Text& x, TokenId t);
  friend Text concat(const Text& x, std::span<const TokenId> ts);

 private:
  VocabularyPtr vocab_;
  std::vector<TokenId> ids_;
  std::string rendered_;
};

// x ⊕ t. Raises kInvalidToken when t is outside x's vocabulary.
Text concat(const Text& x, TokenId t);
Text concat(const Text& x, std::span<const TokenId> ts);

inline constexpr double kDistributionSumTolerance = 1e-9;

// Probability vector over a vocabulary, indexed by TokenId.
class TokenDistribution {
 public:
  enum class Support {
    kStrictlyPositive,  // predictor output, every entry in (0, 1)
    kAllowZeros,        // filtered or truncated output
  };

  // Validates entries in [0, 1] and the sum against tolerance.
  static TokenDistribution from_probs(std::vector<double> probs,
                                      Support support = Support::kAllowZeros,
                                      double tolerance = kDistributionSumTolerance);

  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](TokenId t) const { return probs_.at(t.index()); }
  std::size_t support_size() const noexcept { return support_; }

  // Ids in descending probability order, ties broken by ascending id.
  std::vector<TokenId> ranked() const;

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;

 private:
  std::vector<double> probs_;
  std::size_t support_ = 0;
};

struct PredictorConfig {
  double temperature = 1.0;
  std::size_t top_m = 64;
};

// Temperature softmax with max subtraction. Entries that would underflow are
// floored at the smallest positive double so the result stays in (0,1)^N.
TokenDistribution softmax_with_temperature(std::span<const double> logits,
                                           const PredictorConfig& cfg);

// D_KL[q || p] in nats, with 0 ln 0 = 0. Returns +infinity when q puts mass
// where p has none.
double kl_divergence(const TokenDistribution& q, const TokenDistribution& p);
double kl_divergence(std::span<const double> q, std::span<const double> p);

}  // namespace cbf
