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

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cbf/engine.hpp"
#include "cbf/filter.hpp"
#include "cbf/multistep.hpp"
#include "cbf/predictor.hpp"

namespace {

using namespace cbf;

std::vector<double> random_logits(std::size_t n) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

VocabularyPtr numbered_vocab(std::size_t n) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocabulary::create(std::move(tokens), " ");
}

// h = fraction of even-numbered tokens minus 0.4
FunctionLcf parity_lcf() {
  return FunctionLcf("parity", [](const Text& x) {
    if (x.empty()) return 0.6;
    double even = 0.0;
    for (TokenId t : x.ids()) even += t.value % 2 == 0;
    return even / static_cast<double>(x.size()) - 0.4;
  });
}

void BM_Softmax(benchmark::State& state) {
  const auto logits = random_logits(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(softmax_with_temperature(logits, {0.8, 0}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(4096)->Arg(32768);

void BM_FilterFull(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto vocab = numbered_vocab(n);
  const auto p = softmax_with_temperature(random_logits(n), {1.0, 0});
  auto h = parity_lcf();
  const Text x = Text::from_ids(vocab, {TokenId{2}, TokenId{4}, TokenId{3}});
  for (auto _ : state) benchmark::DoNotOptimize(filter_full(p, x, h, 0.5));
}
BENCHMARK(BM_FilterFull)->Arg(64)->Arg(4096);

void BM_FilterTopK(benchmark::State& state) {
  const std::size_t n = 32768;
  auto vocab = numbered_vocab(n);
  const auto p = softmax_with_temperature(random_logits(n), {1.0, 0});
  auto h = parity_lcf();
  const Text x = Text::from_ids(vocab, {TokenId{2}, TokenId{4}, TokenId{3}});
  const FilterConfig cfg{0.5, 0.0, static_cast<std::size_t>(state.range(0)), 0};
  for (auto _ : state) benchmark::DoNotOptimize(filter_topk(p, x, h, cfg));
}
BENCHMARK(BM_FilterTopK)->Arg(1)->Arg(30)->Arg(300);

void BM_MultistepStep(benchmark::State& state) {
  const std::size_t n = 256;
  auto vocab = numbered_vocab(n);
  const auto p = softmax_with_temperature(random_logits(n), {1.0, 0});
  const std::vector<double> probs(p.probs().begin(), p.probs().end());
  FunctionPredictor g(vocab, [probs](const Text&) { return probs; });
  auto h = parity_lcf();
  const Text x = Text::from_ids(vocab, {TokenId{2}, TokenId{4}});
  const MultiStepConfig cfg{3, static_cast<std::size_t>(state.range(0)), 0.5, 0,
                            static_cast<std::size_t>(state.range(1))};
  std::uint64_t s = 0;
  for (auto _ : state) benchmark::DoNotOptimize(multistep_step(g, x, h, cfg, Seed{s++}));
}
BENCHMARK(BM_MultistepStep)->Args({2, 1})->Args({8, 1})->Args({8, 4});

}  // namespace

BENCHMARK_MAIN();
