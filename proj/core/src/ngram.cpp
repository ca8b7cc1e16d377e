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

#include "cbf/ngram.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbf/error.hpp"

namespace cbf {

namespace {

constexpr const char* kFormatTag = "cbf-ngram";
constexpr int kFormatVersion = 1;

std::uint64_t sum_of(const NGramModel::Counts& c) {
  return std::accumulate(c.begin(), c.end(), std::uint64_t{0});
}

}  // namespace

NGramModel::NGramModel(VocabularyPtr vocab, int order, double alpha, Counts unigram,
                       std::map<std::vector<TokenId>, Counts> contexts)
    : vocab_(std::move(vocab)),
      order_(order),
      alpha_(alpha),
      unigram_(std::move(unigram)),
      contexts_(std::move(contexts)) {
  if (order_ < 1) throw Error(ErrorCode::kTrainingInput, "n-gram order must be >= 1");
  if (!(alpha_ > 0.0)) throw Error(ErrorCode::kTrainingInput, "smoothing alpha must be > 0");
  if (unigram_.size() != vocab_->size()) {
    throw Error(ErrorCode::kTrainingInput, "unigram table does not match vocabulary");
  }
  for (const auto& [ctx, counts] : contexts_) {
    if (static_cast<int>(ctx.size()) != order_ - 1 || counts.size() != vocab_->size()) {
      throw Error(ErrorCode::kTrainingInput, "malformed context table");
    }
  }
  unigram_total_ = sum_of(unigram_);
}

const NGramModel::Counts* NGramModel::counts_for(std::span<const TokenId> context) const {
  auto it = contexts_.find(std::vector<TokenId>(context.begin(), context.end()));
  return it == contexts_.end() ? nullptr : &it->second;
}

TokenDistribution NGramModel::smoothed(const Counts& counts) const {
  const double n = static_cast<double>(vocab_->size());
  const double denom = static_cast<double>(sum_of(counts)) + alpha_ * n;
  std::vector<double> probs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    probs[i] = (static_cast<double>(counts[i]) + alpha_) / denom;
  }
  return TokenDistribution::from_probs(std::move(probs),
                                       TokenDistribution::Support::kStrictlyPositive);
}

TokenDistribution NGramModel::predict(const Text& x) const {
  check_text(x);
  const std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
  if (ctx_len > 0 && x.size() >= ctx_len) {
    std::span<const TokenId> ids(x.ids());
    if (const Counts* c = counts_for(ids.subspan(ids.size() - ctx_len))) return smoothed(*c);
  }
  return smoothed(unigram_);
}

std::shared_ptr<const NGramModel> train_ngram(std::span<const Text> corpus, int order,
                                              double alpha) {
  if (corpus.empty()) throw Error(ErrorCode::kTrainingInput, "empty training corpus");
  if (order < 1) throw Error(ErrorCode::kTrainingInput, "n-gram order must be >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorCode::kTrainingInput, "smoothing alpha must be > 0");
  const VocabularyPtr& vocab = corpus.front().vocab_ptr();
  const std::size_t n = vocab->size();
  NGramModel::Counts unigram(n, 0);
  std::map<std::vector<TokenId>, NGramModel::Counts> contexts;
  const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
  std::size_t tokens = 0;
  for (const Text& text : corpus) {
    if (text.vocab_ptr() != vocab) {
      throw Error(ErrorCode::kTrainingInput, "corpus mixes vocabularies");
    }
    const auto& ids = text.ids();
    tokens += ids.size();
    for (TokenId t : ids) ++unigram[t.index()];
    if (ctx_len == 0) continue;
    for (std::size_t i = ctx_len; i < ids.size(); ++i) {
      std::vector<TokenId> ctx(ids.begin() + static_cast<std::ptrdiff_t>(i - ctx_len),
                               ids.begin() + static_cast<std::ptrdiff_t>(i));
      auto [it, _] = contexts.try_emplace(std::move(ctx), NGramModel::Counts(n, 0));
      ++it->second[ids[i].index()];
    }
  }
  if (tokens == 0) throw Error(ErrorCode::kTrainingInput, "training corpus has no tokens");
  return std::make_shared<NGramModel>(vocab, order, alpha, std::move(unigram),
                                      std::move(contexts));
}

// ---------------------------------------------------------------------------
// Persistence

void NGramModel::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = kFormatTag;
  j["version"] = kFormatVersion;
  j["order"] = order_;
  j["alpha"] = alpha_;
  j["vocab"] = {{"tokens", vocab_->tokens()},
                {"separator", vocab_->separator()},
                {"eos", vocab_->eos() ? nlohmann::ordered_json(vocab_->eos()->value)
                                      : nlohmann::ordered_json(nullptr)}};
  auto sparse = [](const Counts& c) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] > 0) out.push_back({TokenId::from_index(i).value, c[i]});
    }
    return out;
  };
  j["unigram"] = sparse(unigram_);
  auto ctxs = nlohmann::ordered_json::array();
  for (const auto& [ctx, counts] : contexts_) {
    std::vector<std::uint32_t> ids;
    for (TokenId t : ctx) ids.push_back(t.value);
    ctxs.push_back({{"context", ids}, {"counts", sparse(counts)}});
  }
  j["contexts"] = std::move(ctxs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

std::shared_ptr<const NGramModel> NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != kFormatTag || j.at("version") != kFormatVersion) {
      throw Error(ErrorCode::kBadSpec, path.string() + " is not a version-1 n-gram model");
    }
    const auto& jv = j.at("vocab");
    std::optional<TokenId> eos;
    if (!jv.at("eos").is_null()) eos = TokenId{jv.at("eos").get<std::uint32_t>()};
    auto vocab = Vocabulary::create(jv.at("tokens").get<std::vector<std::string>>(),
                                    jv.at("separator").get<std::string>(), eos);
    const std::size_t n = vocab->size();
    auto dense = [n](const nlohmann::json& sparse) {
      Counts c(n, 0);
      for (const auto& e : sparse) {
        auto id = e.at(0).get<std::uint32_t>();
        if (id < 1 || id > n) throw Error(ErrorCode::kBadSpec, "count for unknown token id");
        c[id - 1] = e.at(1).get<std::uint64_t>();
      }
      return c;
    };
    std::map<std::vector<TokenId>, Counts> contexts;
    for (const auto& e : j.at("contexts")) {
      std::vector<TokenId> ctx;
      for (auto id : e.at("context").get<std::vector<std::uint32_t>>()) ctx.push_back({id});
      contexts.emplace(std::move(ctx), dense(e.at("counts")));
    }
    return std::make_shared<NGramModel>(vocab, j.at("order").get<int>(),
                                        j.at("alpha").get<double>(), dense(j.at("unigram")),
                                        std::move(contexts));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadSpec, "malformed n-gram model " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Corpus files

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<std::string>& eos_token) {
  auto lines = read_lines(path);
  std::vector<std::string> tokens;
  std::map<std::string, bool> seen;
  for (const auto& line : lines) {
    std::istringstream words(line);
    std::string w;
    while (words >> w) {
      if (seen.emplace(w, true).second) tokens.push_back(w);
    }
  }
  if (tokens.empty()) throw Error(ErrorCode::kTrainingInput, "corpus has no tokens");
  std::optional<TokenId> eos;
  if (eos_token) {
    if (!seen.count(*eos_token)) tokens.push_back(*eos_token);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == *eos_token) eos = TokenId::from_index(i);
    }
  }
  Corpus c;
  c.vocab = Vocabulary::create(std::move(tokens), " ", eos);
  c.texts = load_texts(path, c.vocab);
  return c;
}

std::vector<Text> load_texts(const std::filesystem::path& path, const VocabularyPtr& vocab) {
  std::vector<Text> texts;
  for (const auto& line : read_lines(path)) texts.push_back(Text::parse(vocab, line));
  return texts;
}

}  // namespace cbf
