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

#include "toys.hpp"

#include <cstdio>

#ifndef CBF_DATA_DIR
#error "CBF_DATA_DIR must point at the repository data directory"
#endif

namespace cbf::testing {

VocabularyPtr word_vocab(std::vector<std::string> tokens, std::optional<std::string> eos) {
  std::optional<TokenId> eos_id;
  if (eos) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == *eos) eos_id = TokenId::from_index(i);
    }
  }
  return Vocabulary::create(std::move(tokens), " ", eos_id);
}

PredictorPtr fixed_predictor(VocabularyPtr vocab, std::vector<double> probs) {
  return std::make_shared<FunctionPredictor>(std::move(vocab),
                                             [probs](const Text&) { return probs; });
}

PredictorPtr markov_predictor(VocabularyPtr vocab, std::vector<double> start,
                              std::vector<std::vector<double>> rows) {
  return std::make_shared<FunctionPredictor>(
      std::move(vocab), [start, rows](const Text& x) {
        if (x.empty()) return start;
        return rows.at(x.ids().back().index());
      });
}

AdversarialToy adversarial_toy() {
  std::vector<std::string> words = {"good", "nice", "fine", "ok",   "the",  "meh",
                                    "bad",  "awful", "ugly", "sad", "poor", "worst"};
  auto vocab = word_vocab(words);
  // 20% of the mass on positive and neutral words, 80% on negative ones.
  std::vector<double> probs = {0.04, 0.03, 0.02, 0.01, 0.06, 0.04};
  for (int i = 0; i < 6; ++i) probs.push_back(0.8 / 6.0);
  auto predictor = fixed_predictor(vocab, probs);
  std::unordered_map<std::string, double> valence = {
      {"good", 1.0}, {"nice", 1.0}, {"fine", 0.5}, {"bad", -1.0},   {"awful", -1.0},
      {"ugly", -1.0}, {"sad", -1.0}, {"poor", -1.0}, {"worst", -1.0}};
  auto lcf = std::make_shared<LexiconLcf>(valence);
  Text start = Text::parse(vocab, "the good the");
  return {vocab, predictor, lcf, start};
}

std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(CBF_DATA_DIR) / name;
}

namespace {

BundledToy load_bundle(const std::string& model, const std::string& corpus) {
  BundledToy b;
  b.model = NGramModel::load(data_path(model));
  b.lcf = std::make_shared<LexiconLcf>(LexiconLcf::read_lexicon(data_path("toy_lexicon.tsv")));
  b.corpus = load_texts(data_path(corpus), b.model->vocabulary());
  return b;
}

}  // namespace

BundledToy bundled_toy() { return load_bundle("toy_bigram.json", "toy_corpus.txt"); }
BundledToy bundled_adversarial() {
  return load_bundle("adversarial_bigram.json", "adversarial_corpus.txt");
}

}  // namespace cbf::testing
