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

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cbf/text.hpp"

namespace cbf {

// Language-constraint function h: Text -> R.
//
// h(x) >= 0 marks x as desirable and h(x) < 0 as undesirable; the sign is the
// only definition of set membership in this library. Values are treated as
// ordinal within one function and never compared across functions.
//
// evaluate() must be deterministic per text. Implementations in this library
// are safe to call concurrently.
class Lcf {
 public:
  virtual ~Lcf() = default;

  virtual std::string name() const = 0;
  virtual std::optional<std::pair<double, double>> range_hint() const { return std::nullopt; }
  virtual double evaluate(const Text& x) const = 0;
};

using LcfPtr = std::shared_ptr<const Lcf>;

inline bool is_desirable(double h) { return h >= 0.0; }

// Softmax output of a negative/neutral/positive classifier.
struct ClassScores {
  double s_neg = 0.0;
  double s_neu = 0.0;
  double s_pos = 0.0;
};

inline constexpr double kClassScoreSumTolerance = 1e-6;

// h = s_pos - max(s_neg, s_neu). Raises kInvalidScores when a score is outside
// [0,1] or the three do not sum to 1.
double from_class_scores(const ClassScores& s);

class ConstantLcf final : public Lcf {
 public:
  explicit ConstantLcf(double value) : value_(value) {}
  std::string name() const override { return "constant"; }
  std::optional<std::pair<double, double>> range_hint() const override {
    return std::pair{value_, value_};
  }
  double evaluate(const Text&) const override { return value_; }

 private:
  double value_;
};

class FunctionLcf final : public Lcf {
 public:
  using Fn = std::function<double(const Text&)>;
  FunctionLcf(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  double evaluate(const Text& x) const override { return fn_(x); }

 private:
  std::string name_;
  Fn fn_;
};

// Mean token valence over a trailing window.
//
//   h(x) = sum_{i in window} valence(x_i) / max(normalizer, |window|)
//
// Tokens missing from the lexicon have valence 0. With the max in the
// denominator |h| never exceeds the largest |weight|. The empty text scores 0.
class LexiconLcf final : public Lcf {
 public:
  static constexpr std::size_t kWholeText = 0;

  LexiconLcf(std::unordered_map<std::string, double> valence, std::size_t window = kWholeText,
             double normalizer = 1.0);

  // Lexicon file: one `token<TAB>weight` per line, UTF-8. Blank lines and
  // lines starting with '#' are skipped.
  static std::unordered_map<std::string, double> read_lexicon(const std::filesystem::path& path);

  std::string name() const override { return "lexicon"; }
  std::optional<std::pair<double, double>> range_hint() const override;
  double evaluate(const Text& x) const override;

  double valence(const std::string& token) const;

 private:
  std::unordered_map<std::string, double> valence_;
  std::size_t window_;
  double normalizer_;
  double max_abs_ = 0.0;
};

// Classifier-backed h: evaluate(x) = from_class_scores(score(x)).
class ClassifierLcf final : public Lcf {
 public:
  using Scorer = std::function<ClassScores(const Text&)>;
  ClassifierLcf(std::string name, Scorer scorer)
      : name_(std::move(name)), scorer_(std::move(scorer)) {}

  std::string name() const override { return name_; }
  std::optional<std::pair<double, double>> range_hint() const override {
    return std::pair{-1.0, 1.0};
  }
  double evaluate(const Text& x) const override { return from_class_scores(scorer_(x)); }

 private:
  std::string name_;
  Scorer scorer_;
};

// Memoizes evaluate() per token sequence for the lifetime of one run.
// Concurrent reads, exclusive writes.
class CachedLcf final : public Lcf {
 public:
  explicit CachedLcf(LcfPtr inner) : inner_(std::move(inner)) {}

  std::string name() const override { return inner_->name(); }
  std::optional<std::pair<double, double>> range_hint() const override {
    return inner_->range_hint();
  }
  double evaluate(const Text& x) const override;

  // Number of calls forwarded to the wrapped function.
  std::size_t evaluations() const;

 private:
  LcfPtr inner_;
  mutable std::shared_mutex mu_;
  mutable std::map<std::vector<TokenId>, double> cache_;
  mutable std::size_t evaluations_ = 0;
};

}  // namespace cbf
