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

#include <doctest.h>

#include <cmath>
#include <random>

#include "cbf/error.hpp"
#include "cbf/text.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace cbf;
using cbf::testing::word_vocab;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("vocabulary ids are 1-based and render uniquely") {
  auto v = word_vocab({"It", "is", "a", "nice", "day"});
  CHECK(v->size() == 5);
  CHECK(v->token(TokenId{1}) == "It");
  CHECK(v->token(TokenId{5}) == "day");
  CHECK(v->find("nice") == TokenId{4});
  CHECK_FALSE(v->find("bad").has_value());
  CHECK_FALSE(v->contains(TokenId{0}));
  CHECK_FALSE(v->contains(TokenId{6}));
  CHECK(code_of([] { word_vocab({"a", "a"}); }) == ErrorCode::kInvalidToken);
  CHECK(code_of([] { word_vocab({}); }) == ErrorCode::kInvalidToken);
}

TEST_CASE("single-token vocabulary is legal") {
  auto v = word_vocab({"only"});
  auto p = TokenDistribution::from_probs({1.0}, TokenDistribution::Support::kStrictlyPositive);
  CHECK(p[TokenId{1}] == 1.0);
  CHECK(Text::parse(v, "only only").size() == 2);
}

TEST_CASE("concat appends and renders with the separator") {
  auto v = word_vocab({"It", "is", "a", "nice"});
  Text x = Text::parse(v, "It is a");
  Text y = concat(x, *v->find("nice"));
  CHECK(y.rendered() == "It is a nice");
  CHECK(y.size() == 4);
  // the input is untouched
  CHECK(x.rendered() == "It is a");
  CHECK(x.size() == 3);

  Text empty(v);
  Text one = concat(empty, TokenId{2});
  CHECK(one.rendered() == "is");
  CHECK(one.ids() == std::vector<TokenId>{TokenId{2}});

  Text a = concat(concat(x, TokenId{1}), TokenId{2});
  std::vector<TokenId> expect = x.ids();
  expect.push_back(TokenId{1});
  expect.push_back(TokenId{2});
  CHECK(a.ids() == expect);
  const std::vector<TokenId> both = {TokenId{1}, TokenId{2}};
  CHECK(concat(x, both).ids() == expect);
  CHECK(concat(x, both).rendered() == a.rendered());

  CHECK(code_of([&] { concat(x, TokenId{5}); }) == ErrorCode::kInvalidToken);
  CHECK(code_of([&] { concat(x, TokenId{0}); }) == ErrorCode::kInvalidToken);
}

TEST_CASE("character vocabularies join with the empty string") {
  auto v = Vocabulary::create({"a", "b", "ab"}, "");
  Text t = Text::parse(v, "abab");
  CHECK(t.size() == 2);  // greedy longest match
  CHECK(t.rendered() == "abab");
  CHECK(code_of([&] { Text::parse(v, "abc"); }) == ErrorCode::kInvalidToken);
}

TEST_CASE("distribution validation") {
  using S = TokenDistribution::Support;
  CHECK_NOTHROW(TokenDistribution::from_probs({0.25, 0.75}, S::kStrictlyPositive));
  CHECK(code_of([] { TokenDistribution::from_probs({0.0, 1.0}, S::kStrictlyPositive); }) ==
        ErrorCode::kInvalidDistribution);
  CHECK_NOTHROW(TokenDistribution::from_probs({0.0, 1.0}, S::kAllowZeros));
  CHECK(code_of([] { TokenDistribution::from_probs({0.5, 0.6}); }) ==
        ErrorCode::kInvalidDistribution);
  CHECK(code_of([] { TokenDistribution::from_probs({-0.1, 1.1}); }) ==
        ErrorCode::kInvalidDistribution);
  auto p = TokenDistribution::from_probs({0.2, 0.4, 0.0, 0.4});
  CHECK(p.support_size() == 3);
  const auto r = p.ranked();
  CHECK(r == std::vector<TokenId>{TokenId{2}, TokenId{4}, TokenId{1}, TokenId{3}});
}

TEST_CASE("softmax with temperature examples") {
  PredictorConfig t1{1.0};
  {
    const std::vector<double> l = {0.0, 0.0};
    auto p = softmax_with_temperature(l, t1);
    CHECK(p.probs()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.probs()[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  {
    const std::vector<double> l = {std::log(2.0), 0.0};
    auto p = softmax_with_temperature(l, t1);
    CHECK(std::abs(p.probs()[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(p.probs()[1] - 1.0 / 3.0) < 1e-15);
  }
  {
    // exp(2) / (exp(2) + 1) evaluated by hand: 7.38905609893065 / 8.38905609893065
    const std::vector<double> l = {1.0, 0.0};
    auto p = softmax_with_temperature(l, PredictorConfig{0.5});
    CHECK(std::abs(p.probs()[0] - 0.8807970779778823) < 1e-12);
    CHECK(std::abs(p.probs()[1] - 0.11920292202211755) < 1e-12);
  }
  const std::vector<double> bad = {0.0, std::nan("")};
  CHECK(code_of([&] { softmax_with_temperature(bad, t1); }) == ErrorCode::kNumericInput);
  const std::vector<double> inf = {0.0, INFINITY};
  CHECK(code_of([&] { softmax_with_temperature(inf, t1); }) == ErrorCode::kNumericInput);
  const std::vector<double> ok = {0.0, 1.0};
  CHECK(code_of([&] { softmax_with_temperature(ok, PredictorConfig{0.0}); }) ==
        ErrorCode::kNumericInput);
}

TEST_CASE("softmax properties: normalized, strictly positive, shift invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logit(-50.0, 50.0), temp(0.01, 100.0),
      shift(-1e3, 1e3);
  std::uniform_int_distribution<int> size(1, 32);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> l(static_cast<std::size_t>(size(rng)));
    for (auto& v : l) v = logit(rng);
    const double t = temp(rng);
    auto p = softmax_with_temperature(l, PredictorConfig{t});
    double s = 0.0;
    for (double v : p.probs()) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    const double c = shift(rng);
    std::vector<double> l2 = l;
    for (auto& v : l2) v += c;
    auto p2 = softmax_with_temperature(l2, PredictorConfig{t});
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(std::abs(p.probs()[i] - p2.probs()[i]) <= 1e-12);
  }
  // extreme spread still yields strictly positive output
  const std::vector<double> wide = {0.0, -1e6};
  auto p = softmax_with_temperature(wide, PredictorConfig{1.0});
  CHECK(p.probs()[1] > 0.0);
}

TEST_CASE("kl divergence examples") {
  auto p = TokenDistribution::from_probs({0.5, 0.5});
  CHECK(kl_divergence(p, p) == 0.0);
  auto q = TokenDistribution::from_probs({1.0, 0.0});
  CHECK(std::abs(kl_divergence(q, p) - std::log(2.0)) < 1e-15);
  // mass where p has none
  CHECK(std::isinf(kl_divergence(p, q)));

  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto a = cbf::testing::random_distribution(rng, 4);
    auto b = cbf::testing::random_distribution(rng, 4);
    CHECK(std::abs(kl_divergence(a, b) - cbf::testing::naive_kl(a, b)) <= 1e-12);
  }
}

TEST_CASE("kl divergence is non-negative and zero only on equality") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> size(1, 16);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = size(rng);
    auto a = cbf::testing::random_distribution(rng, n);
    auto b = cbf::testing::random_distribution(rng, n);
    const double d = kl_divergence(a, b);
    CHECK(d >= 0.0);
    CHECK(kl_divergence(a, a) == 0.0);
    if (n > 1) CHECK(d > 0.0);
  }
}
