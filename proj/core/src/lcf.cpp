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

#include "cbf/lcf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "cbf/error.hpp"

namespace cbf {

double from_class_scores(const ClassScores& s) {
  for (double v : {s.s_neg, s.s_neu, s.s_pos}) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw Error(ErrorCode::kInvalidScores, "class score outside [0,1]");
    }
  }
  if (std::abs(s.s_neg + s.s_neu + s.s_pos - 1.0) > kClassScoreSumTolerance) {
    throw Error(ErrorCode::kInvalidScores, "class scores do not sum to 1");
  }
  return s.s_pos - std::max(s.s_neg, s.s_neu);
}

LexiconLcf::LexiconLcf(std::unordered_map<std::string, double> valence, std::size_t window,
                       double normalizer)
    : valence_(std::move(valence)), window_(window), normalizer_(normalizer) {
  if (!(normalizer_ > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "lexicon normalizer must be positive");
  }
  for (const auto& [token, w] : valence_) {
    if (!std::isfinite(w)) throw Error(ErrorCode::kInvalidConfig, "non-finite valence for " + token);
    max_abs_ = std::max(max_abs_, std::abs(w));
  }
}

std::unordered_map<std::string, double> LexiconLcf::read_lexicon(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read lexicon " + path.string());
  std::unordered_map<std::string, double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(ErrorCode::kBadSpec,
                  path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>weight");
    }
    std::size_t used = 0;
    double w = 0.0;
    try {
      w = std::stod(line.substr(tab + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != line.size() - tab - 1) {
      throw Error(ErrorCode::kBadSpec,
                  path.string() + ":" + std::to_string(lineno) + ": bad weight");
    }
    out[line.substr(0, tab)] = w;
  }
  return out;
}

std::optional<std::pair<double, double>> LexiconLcf::range_hint() const {
  return std::pair{-max_abs_, max_abs_};
}

double LexiconLcf::valence(const std::string& token) const {
  auto it = valence_.find(token);
  return it == valence_.end() ? 0.0 : it->second;
}

double LexiconLcf::evaluate(const Text& x) const {
  const std::size_t n = x.size();
  const std::size_t begin = (window_ == kWholeText || window_ >= n) ? 0 : n - window_;
  double sum = 0.0;
  for (std::size_t i = begin; i < n; ++i) sum += valence(x.token_string(i));
  const double count = static_cast<double>(n - begin);
  return sum / std::max(normalizer_, count);
}

double CachedLcf::evaluate(const Text& x) const {
  {
    std::shared_lock lock(mu_);
    auto it = cache_.find(x.ids());
    if (it != cache_.end()) return it->second;
  }
  double h = inner_->evaluate(x);
  if (!std::isfinite(h)) {
    throw Error(ErrorCode::kNumericInput, "L-CF " + inner_->name() + " returned a non-finite value");
  }
  std::unique_lock lock(mu_);
  auto [it, inserted] = cache_.emplace(x.ids(), h);
  if (inserted) ++evaluations_;
  return it->second;
}

std::size_t CachedLcf::evaluations() const {
  std::shared_lock lock(mu_);
  return evaluations_;
}

}  // namespace cbf
