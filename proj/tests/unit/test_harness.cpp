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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbf/error.hpp"
#include "cbf/harness.hpp"
#include "cbf/trace.hpp"
#include "toys.hpp"

using namespace cbf;
using namespace cbf::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentSpec base_spec() {
  ExperimentSpec s;
  s.prefixes = {"unused"};
  s.backend = "test";
  s.lcf = "test";
  s.gammas = {0.2, 1.0};
  s.modes = {Mode::kCbfSingle};
  s.max_new_tokens = 15;
  s.seed = 5;
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cbf_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("trace round trip") {
  auto toy = adversarial_toy();
  GenerationRequest req{toy.start};
  req.mode = Mode::kCbfSingle;
  req.filter.gamma = 0.5;
  req.seed = 3;
  req.max_new_tokens = 8;
  req.measure_time = false;
  auto result = generate(req, *toy.predictor, *toy.lcf);
  std::stringstream s;
  write_trace(s, req, result, toy.lcf->name());
  std::vector<TraceLineError> errors;
  auto parsed = read_trace(s, "mem", errors);
  CHECK(errors.empty());
  CHECK(parsed.mode == "cbf_single");
  CHECK(parsed.gamma == 0.5);
  CHECK(parsed.seed == 3);
  REQUIRE(parsed.entries.size() == result.trace.size());
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    CHECK(parsed.entries[i].token_or_block == result.trace[i].token_or_block);
    CHECK(parsed.entries[i].h_value == result.trace[i].h_value);
    CHECK(parsed.entries[i].base_h == result.trace[i].base_h);
    CHECK(parsed.entries[i].elapsed_ns == 0);
  }
  // key order is fixed
  std::string first_entry;
  std::istringstream lines(s.str());
  std::getline(lines, first_entry);
  std::getline(lines, first_entry);
  CHECK(first_entry.rfind("{\"step\":0,\"token_or_block\":[", 0) == 0);
}

TEST_CASE("trajectory extraction") {
  SUBCASE("empty trace body gives an empty series and no error") {
    std::istringstream in("");
    std::vector<TraceLineError> errors;
    auto s = trajectory_of("r", read_trace(in, "empty", errors));
    CHECK(errors.empty());
    CHECK(s.points.empty());
  }
  SUBCASE("malformed lines are reported with their line number") {
    std::istringstream in(
        "{\"type\":\"header\",\"mode\":\"cbf_single\",\"gamma\":1.0,\"seed\":1}\n"
        "{\"step\":0,\"token_or_block\":[1],\"h_value\":0.5,\"base_h\":0.2,\"disallowed_count\":0,"
        "\"scans_or_attempts\":1,\"elapsed_ns\":0,\"truncated\":false}\n"
        "not json\n"
        "{\"step\":1}\n");
    std::vector<TraceLineError> errors;
    auto t = read_trace(in, "bad.jsonl", errors);
    REQUIRE(errors.size() == 2);
    CHECK(errors[0].line == 3);
    CHECK(errors[1].line == 4);
    CHECK(errors[0].source == "bad.jsonl");
    auto s = trajectory_of("bad", t);
    REQUIRE(s.points.size() == 2);
    CHECK(s.points[0] == std::pair<std::size_t, double>{0, 0.2});
    CHECK(s.points[1] == std::pair<std::size_t, double>{1, 0.5});
    CHECK(s.mode == "cbf_single");
  }
  SUBCASE("gamma 1 series are non-decreasing, uncontrolled ones cross zero") {
    auto toy = adversarial_toy();
    bool crossed = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (Mode m : {Mode::kCbfSingle, Mode::kNone}) {
        GenerationRequest req{toy.start};
        req.mode = m;
        req.filter.gamma = 1.0;
        req.seed = seed;
        req.measure_time = false;
        std::stringstream s;
        write_trace(s, req, generate(req, *toy.predictor, *toy.lcf), "lexicon");
        std::vector<TraceLineError> errors;
        auto series = trajectory_of("run", read_trace(s, "mem", errors));
        CHECK(errors.empty());
        if (m == Mode::kCbfSingle) {
          CHECK(is_non_decreasing(series));
        } else {
          for (auto& [k, h] : series.points) crossed |= h < 0.0;
        }
      }
    }
    CHECK(crossed);
  }
  SUBCASE("block traces advance k by the block length") {
    ParsedTrace t;
    t.entries.push_back({0, {TokenId{1}, TokenId{2}, TokenId{3}}, 0.4, 0.1, 0, 1, 0, false, false});
    t.entries.push_back({1, {}, 0.4, 0.4, 5, 5, 0, false, true});
    auto s = trajectory_of("b", t);
    REQUIRE(s.points.size() == 2);
    CHECK(s.points[1].first == 3);
  }
}

TEST_CASE("prefix selection") {
  auto v = word_vocab({"good", "bad", "the", "a", "b", "c", "d", "e", "f", "g", "h"});
  // every continuation is "bad": any desirable prefix can go negative
  auto g = fixed_predictor(v, {0.01, 0.9, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01});
  LexiconLcf h({{"good", 1.0}, {"bad", -1.0}});
  PrefixSelectionOptions opts;
  opts.count = 5;
  opts.probe_seeds = 2;
  opts.probe_max_new_tokens = 10;
  SUBCASE("hand-built corpus with one qualifying text") {
    std::vector<Text> corpus = {
        Text::parse(v, "good the a b c d e f g h the"),     // 11 tokens, h(prefix) > 0
        Text::parse(v, "bad bad the a b c d e f g h"),      // prefix h < 0
        Text::parse(v, "good the a b c d"),                 // too short
    };
    auto sel = select_prefixes(corpus, *g, h, opts);
    REQUIRE(sel.prefixes.size() == 1);
    CHECK(sel.prefixes[0].rendered() == "good the a b c");
    CHECK(sel.shortage_notice.has_value());
  }
  SUBCASE("no desirable prefix") {
    std::vector<Text> corpus = {Text::parse(v, "bad bad the a b c d e f g h")};
    auto sel = select_prefixes(corpus, *g, h, opts);
    CHECK(sel.prefixes.empty());
    CHECK(sel.shortage_notice.has_value());
  }
  SUBCASE("bundled corpus yields five-token prefixes") {
    auto toy = bundled_toy();
    PrefixSelectionOptions o;
    o.count = 20;
    auto sel = select_prefixes(toy.corpus, *toy.model, *toy.lcf, o);
    CHECK(sel.prefixes.size() == 20);
    CHECK_FALSE(sel.shortage_notice.has_value());
    for (const auto& p : sel.prefixes) {
      CHECK(p.size() == 5);
      CHECK(toy.lcf->evaluate(p) >= 0.0);
    }
  }
  SUBCASE("empty corpus is an error") {
    std::vector<Text> none;
    CHECK_THROWS_AS(select_prefixes(none, *g, h, opts), Error);
  }
}

TEST_CASE("experiment spec parsing") {
  std::istringstream in(
      "# comment\n"
      "backend = ngram:model.json\n"
      "lcf = lexicon:lex.tsv,window=4\n"
      "prefix = the movie was\n"
      "prefix = a b\n"
      "gammas = 0.0, 0.5,1.0\n"
      "modes = none, cbf_single\n"
      "repeats = 3\n"
      "seed = 42\n"
      "seed_policy = independent\n"
      "selector = greedy\n"
      "timing = true\n"
      "workers = 2\n");
  auto s = parse_experiment_spec(in);
  CHECK(s.prefixes == std::vector<std::string>{"the movie was", "a b"});
  CHECK(s.gammas == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(s.modes == std::vector<Mode>{Mode::kNone, Mode::kCbfSingle});
  CHECK(s.repeats_per_prefix == 3);
  CHECK(s.seed == 42);
  CHECK(s.seed_policy == SeedPolicy::kIndependent);
  CHECK(s.selector == SelectorKind::kGreedy);
  CHECK(s.timing);
  CHECK(s.workers == 2);
  CHECK(s.lcf == "lexicon:lex.tsv,window=4");

  auto bad = [](const std::string& text) {
    std::istringstream b(text);
    try {
      parse_experiment_spec(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  const std::string ok = "backend = x\nlcf = y\nprefix = p\ngammas = 0.5\nmodes = none\n";
  CHECK(bad(ok + "unknown = 1\n") == ErrorCode::kBadSpec);
  CHECK(bad(ok + "gammas = 1.5\n") == ErrorCode::kBadSpec);
  CHECK(bad(ok + "modes = sideways\n") == ErrorCode::kBadSpec);
  CHECK(bad(ok + "repeats = -1\n") == ErrorCode::kBadSpec);
  CHECK(bad(ok + "just text\n") == ErrorCode::kBadSpec);
  CHECK(bad("backend = x\nlcf = y\ngammas = 0.5\nmodes = none\n") == ErrorCode::kBadSpec);
  CHECK(bad("backend = x\nlcf = y\nprefix = p\nmodes = none\n") == ErrorCode::kBadSpec);
  CHECK(bad("backend = x\nlcf = y\nprefix = p\ngammas = 0.5\n") == ErrorCode::kBadSpec);
}

TEST_CASE("run_experiment") {
  auto toy = adversarial_toy();
  std::vector<Text> prefixes = {toy.start};

  SUBCASE("mode none gives one row with zero disallowed") {
    auto spec = base_spec();
    spec.modes = {Mode::kNone};
    auto r = run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, std::nullopt);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].mode == Mode::kNone);
    CHECK_FALSE(r.rows[0].gamma.has_value());
    CHECK(r.rows[0].disallowed_per_generation == 0.0);
    CHECK(r.rows[0].runs == 1);
  }
  SUBCASE("stricter gamma rejects more tokens") {
    auto spec = base_spec();
    spec.repeats_per_prefix = 10;
    auto r = run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, std::nullopt);
    REQUIRE(r.rows.size() == 2);
    CHECK(*r.rows[0].gamma == 0.2);
    CHECK(*r.rows[1].gamma == 1.0);
    CHECK(r.rows[1].disallowed_per_generation > r.rows[0].disallowed_per_generation);
    for (const auto& row : r.rows) CHECK(row.non_positive_rate == 0.0);
  }
  SUBCASE("row count and accounting") {
    auto spec = base_spec();
    spec.modes = {Mode::kNone, Mode::kCbfSingle, Mode::kCbfMultistep, Mode::kBestOfK};
    spec.gammas = {0.0, 0.5, 1.0};
    spec.repeats_per_prefix = 2;
    std::vector<Text> two = {toy.start, Text::parse(toy.vocab, "good nice the")};
    auto r = run_experiment(spec, two, *toy.predictor, *toy.lcf, std::nullopt);
    CHECK(r.rows.size() == 3 * 2 + 2);
    std::size_t runs = 0;
    for (const auto& row : r.rows) {
      runs += row.runs;
      CHECK(row.non_positive_rate >= 0.0);
      CHECK(row.non_positive_rate <= 1.0);
    }
    CHECK(runs == r.cells.size());
    CHECK(r.cells.size() == (3 * 2 + 2) * 2 * 2);
  }
  SUBCASE("shared seeds pair cells across gamma") {
    auto spec = base_spec();
    auto r = run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, std::nullopt);
    CHECK(r.cells[0].seed == r.cells[1].seed);
    spec.seed_policy = SeedPolicy::kIndependent;
    auto ri = run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, std::nullopt);
    CHECK(ri.cells[0].seed != ri.cells[1].seed);
  }
  SUBCASE("unsafe starts are recorded and the sweep continues") {
    auto spec = base_spec();
    spec.modes = {Mode::kNone, Mode::kCbfSingle};
    std::vector<Text> bad = {Text::parse(toy.vocab, "bad bad")};
    auto r = run_experiment(spec, bad, *toy.predictor, *toy.lcf, std::nullopt);
    for (const auto& row : r.rows) {
      if (row.mode == Mode::kCbfSingle) CHECK(row.aborted == row.runs);
      if (row.mode == Mode::kNone) CHECK(row.aborted == 0);
    }
  }
  SUBCASE("outputs are byte-identical across runs and worker counts") {
    auto spec = base_spec();
    spec.modes = {Mode::kNone, Mode::kCbfSingle, Mode::kCbfMultistep, Mode::kBestOfK};
    spec.repeats_per_prefix = 3;
    const auto d1 = scratch("a"), d2 = scratch("b"), d3 = scratch("c");
    run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, d1);
    run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, d2);
    spec.workers = 3;
    run_experiment(spec, prefixes, *toy.predictor, *toy.lcf, d3);
    CHECK(slurp(d1 / "metrics.csv") == slurp(d2 / "metrics.csv"));
    CHECK(slurp(d1 / "metrics.csv") == slurp(d3 / "metrics.csv"));
    CHECK(slurp(d1 / "trajectories.csv") == slurp(d3 / "trajectories.csv"));
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(d1 / "traces")) {
      CHECK(slurp(e.path()) == slurp(d2 / "traces" / e.path().filename()));
      CHECK(slurp(e.path()) == slurp(d3 / "traces" / e.path().filename()));
      ++n;
    }
    CHECK(n == (2 * 2 + 2) * 3);
    const auto csv = slurp(d1 / "metrics.csv");
    CHECK(csv.rfind("# cbfdecode metrics v1\n", 0) == 0);
    CHECK(csv.find("\nmode,gamma,runs,aborted,") != std::string::npos);
    for (const auto& d : {d1, d2, d3}) std::filesystem::remove_all(d);
  }
}

TEST_CASE("aggregate computes mean and sample deviation") {
  auto toy = adversarial_toy();
  std::vector<CellOutcome> cells;
  for (int i = 0; i < 3; ++i) {
    CellOutcome c{Mode::kCbfSingle, 0.5, 0, static_cast<std::size_t>(i), 0, GenerationRequest{toy.start},
                  GenerationResult{toy.start}};
    c.disallowed_total = static_cast<std::size_t>(2 * i);  // 0, 2, 4
    c.final_h = i == 2 ? -0.1 : 0.3;
    c.result.tokens_emitted = 4;
    cells.push_back(c);
  }
  auto rows = aggregate(cells);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].disallowed_per_generation == 2.0);
  CHECK(rows[0].disallowed_std == 2.0);
  CHECK(rows[0].non_positive_rate == doctest::Approx(1.0 / 3.0));
  CHECK(rows[0].tokens_per_generation == 4.0);
  std::reverse(cells.begin(), cells.end());
  auto again = aggregate(cells);
  CHECK(again[0].disallowed_per_generation == rows[0].disallowed_per_generation);
}
