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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbf/engine.hpp"
#include "cbf/trace.hpp"

namespace cbf {

// ---------------------------------------------------------------------------
// Prefix selection

struct PrefixSelectionOptions {
  std::size_t count = 50;
  std::size_t prefix_len = 5;
  std::size_t min_tokens = 10;        // texts must be strictly longer
  std::size_t probe_seeds = 4;        // uncontrolled probe generations per candidate
  std::size_t probe_max_new_tokens = 30;
  std::uint64_t seed = 0;
};

struct PrefixSelection {
  std::vector<Text> prefixes;
  std::size_t candidates_examined = 0;
  std::optional<std::string> shortage_notice;
};

// Keeps prefixes of corpus texts that (1) come from texts longer than
// min_tokens, (2) score h >= 0 themselves and (3) lead at least one
// uncontrolled multinomial probe to a final text with h < 0. Corpus order is
// preserved and duplicate prefixes are dropped.
PrefixSelection select_prefixes(std::span<const Text> corpus, const TokenPredictor& g,
                                const Lcf& h, const PrefixSelectionOptions& opts);

// ---------------------------------------------------------------------------
// Experiments

enum class SeedPolicy { kShared, kIndependent };

// Parsed from a key = value text file (see docs/formats.md).
struct ExperimentSpec {
  std::vector<std::string> prefixes;
  std::optional<std::filesystem::path> prefixes_file;
  std::vector<double> gammas;
  std::vector<Mode> modes;
  std::size_t repeats_per_prefix = 1;
  std::string backend;
  std::string lcf;
  double temperature = 1.0;
  SeedPolicy seed_policy = SeedPolicy::kShared;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 30;
  std::size_t top_k = 30;
  std::size_t scan_cap = 0;
  double delta = 0.0;
  std::size_t horizon = 3;
  std::size_t sample_size = 2;
  std::size_t max_attempts = 0;
  SelectorKind selector = SelectorKind::kMultinomial;
  bool stop_at_eos = true;
  bool timing = false;
  std::size_t workers = 1;

  // Raises kBadSpec.
  void validate() const;
};

ExperimentSpec parse_experiment_spec(std::istream& in);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct MetricsRow {
  Mode mode = Mode::kNone;
  std::optional<double> gamma;  // empty for gamma-independent modes
  std::size_t runs = 0;
  std::size_t aborted = 0;
  double disallowed_per_generation = 0.0;
  double disallowed_std = 0.0;
  double time_per_token_s = 0.0;
  double time_per_token_std = 0.0;
  double mean_final_h = 0.0;
  double final_h_std = 0.0;
  double non_positive_rate = 0.0;
  double tokens_per_generation = 0.0;
};

// Outcome of one (prefix, gamma, mode, repeat) cell.
struct CellOutcome {
  Mode mode = Mode::kNone;
  std::optional<double> gamma;
  std::size_t prefix_index = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  GenerationRequest request;
  GenerationResult result;
  std::size_t disallowed_total = 0;
  double final_h = 0.0;
  double time_per_token_s = 0.0;
  std::string trace_name;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;   // sorted by (mode, gamma)
  std::vector<CellOutcome> cells; // in deterministic cell order
};

// Aggregates cells into rows keyed by (mode, gamma). Order independent.
std::vector<MetricsRow> aggregate(std::span<const CellOutcome> cells);

// Runs every cell. When out_dir is set, writes metrics.csv, trajectories.csv
// and traces/<cell>.jsonl below it.
ExperimentResult run_experiment(const ExperimentSpec& spec, std::span<const Text> prefixes,
                                const TokenPredictor& g, const Lcf& h,
                                const std::optional<std::filesystem::path>& out_dir);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows, bool timing);

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySeries {
  std::string run;
  std::string mode;
  double gamma = 0.0;
  std::vector<std::pair<std::size_t, double>> points;  // (k, h(x(k))), k = 0 is x0
};

struct TrajectoryData {
  std::vector<TrajectorySeries> series;
  std::vector<TraceLineError> errors;
};

// One series per trace: k = 0 carries h(x0), entry k carries h(x(k+1)).
TrajectoryData emit_trajectory_data(std::span<const std::filesystem::path> trace_files);
TrajectorySeries trajectory_of(const std::string& run, const ParsedTrace& trace);
void write_trajectory_csv(std::ostream& out, const TrajectoryData& data);

bool is_non_decreasing(const TrajectorySeries& s);

}  // namespace cbf
