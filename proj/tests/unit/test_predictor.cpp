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
#include <filesystem>
#include <fstream>
#include <functional>

#include "cbf/error.hpp"
#include "cbf/ngram.hpp"
#include "cbf/predictor.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace cbf;
using cbf::testing::word_vocab;

namespace {

std::vector<Text> texts(const VocabularyPtr& v, std::initializer_list<const char*> lines) {
  std::vector<Text> out;
  for (const char* l : lines) out.push_back(Text::parse(v, l));
  return out;
}

void for_each_text(const VocabularyPtr& v, std::size_t max_len,
                   const std::function<void(const Text&)>& fn) {
  std::function<void(const Text&)> rec = [&](const Text& x) {
    fn(x);
    if (x.size() == max_len) return;
    for (std::size_t i = 0; i < v->size(); ++i) rec(concat(x, TokenId::from_index(i)));
  };
  rec(Text(v));
}

void check_valid(const TokenDistribution& p) {
  double s = 0.0;
  for (double v : p.probs()) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-9);
}

}  // namespace

TEST_CASE("uniform predictor") {
  auto v = word_vocab({"a", "b", "c", "d"});
  UniformPredictor g(v);
  auto p = g.predict(Text::parse(v, "a b"));
  for (double x : p.probs()) CHECK(x == 0.25);
  auto other = word_vocab({"a", "b", "c", "d"});
  CHECK_THROWS_AS(g.predict(Text::parse(other, "a")), Error);
}

TEST_CASE("unigram model counts and smoothing") {
  auto v = word_vocab({"a", "b"});
  SUBCASE("a a b with alpha 1") {
    auto m = train_ngram(texts(v, {"a a b"}), 1, 1.0);
    auto p = m->predict(Text(v));
    // (2 + 1) / (3 + 2) and (1 + 1) / (3 + 2)
    CHECK(std::abs(p[TokenId{1}] - 3.0 / 5.0) < 1e-15);
    CHECK(std::abs(p[TokenId{2}] - 2.0 / 5.0) < 1e-15);
  }
  SUBCASE("a b a counts") {
    auto m = train_ngram(texts(v, {"a b a"}), 1, 0.5);
    CHECK(m->unigram_counts()[0] == 2);
    CHECK(m->unigram_counts()[1] == 1);
  }
}

TEST_CASE("bigram model counts") {
  auto v = word_vocab({"a", "b"});
  auto m = train_ngram(texts(v, {"a b a b"}), 2, 0.1);
  const std::vector<TokenId> ctx = {TokenId{1}};
  const auto* c = m->counts_for(ctx);
  REQUIRE(c != nullptr);
  CHECK((*c)[1] == 2);  // "a" -> "b" twice
  CHECK((*c)[0] == 0);
  const std::vector<TokenId> ctx_b = {TokenId{2}};
  REQUIRE(m->counts_for(ctx_b) != nullptr);
  CHECK((*m->counts_for(ctx_b))[0] == 1);
}

TEST_CASE("n-gram smoothing floor and unseen-context backoff") {
  auto v = word_vocab({"a", "b", "c"});
  auto m = train_ngram(texts(v, {"a b c a b", "b b a"}), 2, 0.3);
  for (const auto& [ctx, counts] : m->context_counts()) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    auto p = m->predict(Text::from_ids(v, ctx));
    const double floor = 0.3 / (static_cast<double>(total) + 0.3 * 3.0);
    for (double x : p.probs()) CHECK(x >= floor * (1.0 - 1e-12));
  }
  // "c" is only seen at text ends, so it has no context entry for "c ->".
  const std::vector<TokenId> c_ctx = {TokenId{3}};
  CHECK(m->counts_for(c_ctx) != nullptr);  // "c a" occurs
  auto m3 = train_ngram(texts(v, {"a b"}), 2, 1.0);
  auto unseen = m3->predict(Text::parse(v, "c"));
  auto marginal = m3->predict(Text(v));
  CHECK(unseen == marginal);
}

TEST_CASE("every reachable text yields a valid distribution") {
  auto v = word_vocab({"x", "y", "z"});
  auto m2 = train_ngram(texts(v, {"x y z x", "z z y"}), 2, 0.5);
  auto m3 = train_ngram(texts(v, {"x y z x", "z z y x y"}), 3, 0.05);
  UniformPredictor u(v);
  std::size_t n = 0;
  for_each_text(v, 6, [&](const Text& x) {
    check_valid(m2->predict(x));
    check_valid(m3->predict(x));
    check_valid(u.predict(x));
    ++n;
  });
  CHECK(n == 1093);  // sum of 3^k for k = 0..6
}

TEST_CASE("training input errors") {
  auto v = word_vocab({"a"});
  std::vector<Text> none;
  CHECK_THROWS_AS(train_ngram(none, 2, 1.0), Error);
  CHECK_THROWS_AS(train_ngram(texts(v, {"a"}), 0, 1.0), Error);
  CHECK_THROWS_AS(train_ngram(texts(v, {"a"}), 1, 0.0), Error);
}

TEST_CASE("paged predictions") {
  auto v = word_vocab({"a", "b", "c", "d", "e"});
  auto g = cbf::testing::fixed_predictor(v, {0.1, 0.3, 0.1, 0.4, 0.1});
  Text x(v);
  SUBCASE("exhaustive page") {
    auto page = g->predict_topm(x, 0, 5);
    REQUIRE(page.entries.size() == 5);
    CHECK(page.remaining_mass == 0.0);
    std::vector<std::uint32_t> ids;
    for (auto& [t, p] : page.entries) ids.push_back(t.value);
    CHECK(ids == std::vector<std::uint32_t>{4, 2, 1, 3, 5});  // ties by ascending id
  }
  SUBCASE("adjacent pages are disjoint and non-increasing") {
    auto a = g->predict_topm(x, 0, 2);
    auto b = g->predict_topm(x, 2, 2);
    CHECK(a.offset == 0);
    CHECK(b.offset == 2);
    CHECK(a.entries.back().second >= b.entries.front().second);
    for (auto& ea : a.entries) {
      for (auto& eb : b.entries) CHECK(ea.first != eb.first);
    }
    double s = 0.0;
    for (auto& e : a.entries) s += e.second;
    CHECK(std::abs(s + a.remaining_mass - 1.0) < 1e-12);
  }
  SUBCASE("past the end") {
    auto page = g->predict_topm(x, 5, 5);
    CHECK(page.entries.empty());
    CHECK(page.remaining_mass == 0.0);
  }
  SUBCASE("pages reassemble to the sorted full distribution") {
    auto full = g->predict(x);
    auto ranked = full.ranked();
    std::vector<std::pair<TokenId, double>> joined;
    for (std::size_t off = 0; off < 5; off += 2) {
      auto p = g->predict_topm(x, off, 2);
      joined.insert(joined.end(), p.entries.begin(), p.entries.end());
    }
    REQUIRE(joined.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(joined[i].first == ranked[i]);
      CHECK(std::abs(joined[i].second - full[ranked[i]]) <= 1e-9);
    }
  }
}

TEST_CASE("caching predictor returns identical results and counts misses") {
  auto v = word_vocab({"a", "b"});
  int calls = 0;
  auto inner = std::make_shared<FunctionPredictor>(v, [&calls](const Text& x) {
    ++calls;
    return x.size() % 2 ? std::vector<double>{0.3, 0.7} : std::vector<double>{0.6, 0.4};
  });
  CachingPredictor c(inner);
  auto x = Text::parse(v, "a");
  auto p1 = c.predict(x);
  auto p2 = c.predict(Text::parse(v, "a"));
  CHECK(p1 == p2);
  CHECK(calls == 1);
  CHECK(c.misses() == 1);
  c.predict(Text(v));
  CHECK(c.misses() == 2);
}

TEST_CASE("model file round trip") {
  auto v = word_vocab({"the", "cat", "sat", "."}, ".");
  auto m = train_ngram(texts(v, {"the cat sat .", "the cat ."}), 2, 0.25);
  const auto path = std::filesystem::temp_directory_path() / "cbf_ngram_roundtrip.json";
  m->save(path);
  auto back = NGramModel::load(path);
  CHECK(back->order() == 2);
  CHECK(back->alpha() == 0.25);
  CHECK(back->vocabulary()->tokens() == v->tokens());
  CHECK(back->vocabulary()->eos() == v->eos());
  for_each_text(v, 3, [&](const Text& x) {
    auto xb = Text::from_ids(back->vocabulary(), x.ids());
    CHECK(back->predict(xb) == m->predict(x));
  });
  std::filesystem::remove(path);

  const auto junk = std::filesystem::temp_directory_path() / "cbf_ngram_junk.json";
  std::ofstream(junk) << "{\"format\": \"something-else\"}";
  CHECK_THROWS_AS(NGramModel::load(junk), Error);
  std::filesystem::remove(junk);
}

TEST_CASE("corpus loading builds a first-appearance vocabulary") {
  const auto path = std::filesystem::temp_directory_path() / "cbf_corpus.txt";
  std::ofstream(path) << "b a .\n\na c .\n";
  auto c = load_corpus(path, std::string("."));
  CHECK(c.vocab->tokens() == std::vector<std::string>{"b", "a", ".", "c"});
  CHECK(c.vocab->eos() == TokenId{3});
  CHECK(c.texts.size() == 2);
  auto again = load_texts(path, c.vocab);
  CHECK(again.size() == 2);
  CHECK(again[1].rendered() == "a c .");
  std::filesystem::remove(path);
}
