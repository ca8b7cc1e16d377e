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

#include "cbf/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "cbf/error.hpp"

namespace cbf {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidToken: return "invalid-token";
    case ErrorCode::kNumericInput: return "numeric-input";
    case ErrorCode::kInvalidDistribution: return "invalid-distribution";
    case ErrorCode::kTrainingInput: return "training-input";
    case ErrorCode::kInvalidScores: return "invalid-scores";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kInfeasibleConstraint: return "infeasible-constraint";
    case ErrorCode::kInfeasibleHorizon: return "infeasible-horizon";
    case ErrorCode::kUnsafeStart: return "unsafe-start";
    case ErrorCode::kBackendUnavailable: return "backend-unavailable";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kBadSpec: return "bad-spec";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

InfeasibleConstraintError::InfeasibleConstraintError(double gamma, double base_h,
                                                     std::size_t scans)
    : Error(ErrorCode::kInfeasibleConstraint,
            "no token satisfies h(x+t) >= gamma*h(x) (gamma=" + std::to_string(gamma) +
                ", h(x)=" + std::to_string(base_h) + ", scanned " +
                std::to_string(scans) + ")"),
      gamma_(gamma),
      base_h_(base_h),
      scans_(scans) {}

// ---------------------------------------------------------------------------
// Vocabulary

std::shared_ptr<const Vocabulary> Vocabulary::create(std::vector<std::string> tokens,
                                                     std::string separator,
                                                     std::optional<TokenId> eos) {
  if (tokens.empty()) {
    throw Error(ErrorCode::kInvalidToken, "vocabulary must contain at least one token");
  }
  std::shared_ptr<Vocabulary> v(new Vocabulary());
  v->separator_ = std::move(separator);
  v->lookup_.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) {
      throw Error(ErrorCode::kInvalidToken,
                  "empty token string at id " + std::to_string(i + 1));
    }
    auto [it, inserted] = v->lookup_.emplace(tokens[i], TokenId::from_index(i));
    if (!inserted) {
      throw Error(ErrorCode::kInvalidToken, "duplicate token string '" + tokens[i] + "'");
    }
    v->max_token_bytes_ = std::max(v->max_token_bytes_, tokens[i].size());
  }
  v->tokens_ = std::move(tokens);
  if (eos && !v->contains(*eos)) {
    throw Error(ErrorCode::kInvalidToken, "eos id " + std::to_string(eos->value) +
                                              " outside 1.." + std::to_string(v->size()));
  }
  v->eos_ = eos;
  return v;
}

const std::string& Vocabulary::token(TokenId t) const {
  if (!contains(t)) {
    throw Error(ErrorCode::kInvalidToken, "token id " + std::to_string(t.value) +
                                              " outside 1.." + std::to_string(size()));
  }
  return tokens_[t.index()];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  if (!separator_.empty()) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i) {
        auto id = find(text.substr(i, j - i));
        if (!id) {
          throw Error(ErrorCode::kInvalidToken,
                      "unknown token '" + std::string(text.substr(i, j - i)) + "'");
        }
        ids.push_back(*id);
      }
      i = j;
    }
    return ids;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = std::min(max_token_bytes_, text.size() - i);
    std::optional<TokenId> hit;
    for (; len > 0; --len) {
      if ((hit = find(text.substr(i, len)))) break;
    }
    if (!hit) {
      throw Error(ErrorCode::kInvalidToken,
                  "no token matches input at byte " + std::to_string(i));
    }
    ids.push_back(*hit);
    i += len;
  }
  return ids;
}

std::string Vocabulary::fingerprint() const {
  // FNV-1a over a length-prefixed serialization.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    std::uint64_t n = s.size();
    for (int b = 0; b < 8; ++b) {
      h ^= (n >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& t : tokens_) feed(t);
  feed(separator_);
  feed(eos_ ? std::to_string(eos_->value) : std::string());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Text

Text::Text(VocabularyPtr vocab) : vocab_(std::move(vocab)) {
  if (!vocab_) throw Error(ErrorCode::kInvalidToken, "text requires a vocabulary");
}

Text Text::from_ids(VocabularyPtr vocab, std::vector<TokenId> ids) {
  Text x(std::move(vocab));
  return concat(x, ids);
}

Text Text::parse(VocabularyPtr vocab, std::string_view text) {
  auto ids = vocab->encode(text);
  return from_ids(std::move(vocab), std::move(ids));
}

Text Text::prefix(std::size_t n) const {
  Text out(vocab_);
  n = std::min(n, ids_.size());
  return concat(out, std::span<const TokenId>(ids_.data(), n));
}

Text concat(const Text& x, TokenId t) {
  return concat(x, std::span<const TokenId>(&t, 1));
}

Text concat(const Text& x, std::span<const TokenId> ts) {
  Text out = x;
  out.ids_.reserve(x.ids_.size() + ts.size());
  for (TokenId t : ts) {
    const std::string& s = x.vocab_->token(t);
    if (!out.ids_.empty()) out.rendered_ += x.vocab_->separator();
    out.rendered_ += s;
    out.ids_.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TokenDistribution

TokenDistribution TokenDistribution::from_probs(std::vector<double> probs, Support support,
                                                double tolerance) {
  if (probs.empty()) {
    throw Error(ErrorCode::kInvalidDistribution, "distribution over an empty vocabulary");
  }
  double sum = 0.0;
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw Error(ErrorCode::kInvalidDistribution,
                  "probability out of [0,1] at id " + std::to_string(i + 1));
    }
    if (support == Support::kStrictlyPositive && p <= 0.0) {
      throw Error(ErrorCode::kInvalidDistribution,
                  "predictor distribution has a zero entry at id " + std::to_string(i + 1));
    }
    if (p > 0.0) ++nonzero;
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw Error(ErrorCode::kInvalidDistribution,
                "distribution sums to " + std::to_string(sum));
  }
  TokenDistribution d;
  d.probs_ = std::move(probs);
  d.support_ = nonzero;
  return d;
}

std::vector<TokenId> TokenDistribution::ranked() const {
  std::vector<TokenId> order(probs_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = TokenId::from_index(i);
  std::stable_sort(order.begin(), order.end(), [this](TokenId a, TokenId b) {
    return probs_[a.index()] > probs_[b.index()];
  });
  return order;
}

TokenDistribution softmax_with_temperature(std::span<const double> logits,
                                           const PredictorConfig& cfg) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
    throw Error(ErrorCode::kNumericInput, "temperature must be positive and finite");
  }
  if (logits.empty()) throw Error(ErrorCode::kNumericInput, "empty logits");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw Error(ErrorCode::kNumericInput, "non-finite logit at id " + std::to_string(i + 1));
    }
    max_logit = std::max(max_logit, logits[i]);
  }
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - max_logit) / cfg.temperature);
    total += probs[i];
  }
  constexpr double kFloor = std::numeric_limits<double>::denorm_min();
  for (double& p : probs) p = std::max(p / total, kFloor);
  return TokenDistribution::from_probs(std::move(probs),
                                       TokenDistribution::Support::kStrictlyPositive);
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) {
    throw Error(ErrorCode::kInvalidDistribution, "kl_divergence: size mismatch");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
    d += q[i] * std::log(q[i] / p[i]);
  }
  return std::max(d, 0.0);
}

double kl_divergence(const TokenDistribution& q, const TokenDistribution& p) {
  return kl_divergence(q.probs(), p.probs());
}

}  // namespace cbf
