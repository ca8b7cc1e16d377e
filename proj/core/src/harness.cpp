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

#include "cbf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "cbf/error.hpp"

namespace cbf {

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string gamma_label(const std::optional<double>& g) {
  if (!g) return "na";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *g);
  return buf;
}

bool gamma_dependent(Mode m) { return m == Mode::kCbfSingle || m == Mode::kCbfMultistep; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prefix selection

PrefixSelection select_prefixes(std::span<const Text> corpus, const TokenPredictor& g,
                                const Lcf& h, const PrefixSelectionOptions& opts) {
  if (corpus.empty()) throw Error(ErrorCode::kTrainingInput, "prefix selection needs a corpus");
  PrefixSelection out;
  std::set<std::vector<TokenId>> seen;
  const Seed probe_root = Seed{opts.seed}.child(streams::kProbe);
  for (std::size_t i = 0; i < corpus.size() && out.prefixes.size() < opts.count; ++i) {
    const Text& text = corpus[i];
    if (text.size() <= opts.min_tokens || text.size() < opts.prefix_len) continue;
    Text prefix = text.prefix(opts.prefix_len);
    if (seen.count(prefix.ids())) continue;
    ++out.candidates_examined;
    if (!is_desirable(h.evaluate(prefix))) continue;
    bool goes_negative = false;
    for (std::size_t s = 0; s < opts.probe_seeds && !goes_negative; ++s) {
      GenerationRequest probe{prefix};
      probe.mode = Mode::kNone;
      probe.selector = SelectorKind::kMultinomial;
      probe.max_new_tokens = opts.probe_max_new_tokens;
      probe.seed = probe_root.child(i).child(s).value;
      probe.measure_time = false;
      const auto r = generate(probe, g, h);
      goes_negative = !is_desirable(h.evaluate(r.text));
    }
    if (!goes_negative) continue;
    seen.insert(prefix.ids());
    out.prefixes.push_back(std::move(prefix));
  }
  if (out.prefixes.size() < opts.count) {
    out.shortage_notice = "found " + std::to_string(out.prefixes.size()) + " of " +
                          std::to_string(opts.count) + " requested prefixes";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spec files

void ExperimentSpec::validate() const {
  if (prefixes.empty() && !prefixes_file) throw Error(ErrorCode::kBadSpec, "spec lists no prefixes");
  if (gammas.empty()) throw Error(ErrorCode::kBadSpec, "spec lists no gammas");
  if (modes.empty()) throw Error(ErrorCode::kBadSpec, "spec lists no modes");
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw Error(ErrorCode::kBadSpec, "gamma outside [0, 1]");
  }
  if (backend.empty()) throw Error(ErrorCode::kBadSpec, "spec has no backend");
  if (lcf.empty()) throw Error(ErrorCode::kBadSpec, "spec has no lcf");
  if (repeats_per_prefix < 1) throw Error(ErrorCode::kBadSpec, "repeats must be >= 1");
  if (max_new_tokens < 1) throw Error(ErrorCode::kBadSpec, "max_new_tokens must be >= 1");
  if (top_k < 1 || horizon < 1 || sample_size < 1 || workers < 1) {
    throw Error(ErrorCode::kBadSpec, "top_k, horizon, sample_size and workers must be >= 1");
  }
  if (!(delta >= 0.0 && delta < 1.0)) throw Error(ErrorCode::kBadSpec, "delta outside [0, 1)");
  if (!(temperature > 0.0)) throw Error(ErrorCode::kBadSpec, "temperature must be > 0");
}

ExperimentSpec parse_experiment_spec(std::istream& in) {
  ExperimentSpec s;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&lineno](const std::string& what) {
    return Error(ErrorCode::kBadSpec, "spec line " + std::to_string(lineno) + ": " + what);
  };
  auto to_size = [&](const std::string& v) -> std::size_t {
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size() || v[0] == '-') throw fail("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
  };
  auto to_double = [&](const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw fail("expected a number, got '" + v + "'");
    return d;
  };
  auto to_bool = [&](const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw fail("expected a boolean, got '" + v + "'");
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw fail("expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "prefix") {
      s.prefixes.push_back(val);
    } else if (key == "prefixes_file") {
      s.prefixes_file = val;
    } else if (key == "gammas") {
      for (const auto& g : split_list(val)) s.gammas.push_back(to_double(g));
    } else if (key == "modes") {
      for (const auto& m : split_list(val)) {
        auto mode = parse_mode(m);
        if (!mode) throw fail("unknown mode '" + m + "'");
        s.modes.push_back(*mode);
      }
    } else if (key == "repeats") {
      s.repeats_per_prefix = to_size(val);
    } else if (key == "backend") {
      s.backend = val;
    } else if (key == "lcf") {
      s.lcf = val;
    } else if (key == "temperature") {
      s.temperature = to_double(val);
    } else if (key == "seed_policy") {
      if (val == "shared") {
        s.seed_policy = SeedPolicy::kShared;
      } else if (val == "independent") {
        s.seed_policy = SeedPolicy::kIndependent;
      } else {
        throw fail("seed_policy must be shared or independent");
      }
    } else if (key == "seed") {
      s.seed = to_size(val);
    } else if (key == "max_new_tokens") {
      s.max_new_tokens = to_size(val);
    } else if (key == "top_k") {
      s.top_k = to_size(val);
    } else if (key == "scan_cap") {
      s.scan_cap = to_size(val);
    } else if (key == "delta") {
      s.delta = to_double(val);
    } else if (key == "horizon") {
      s.horizon = to_size(val);
    } else if (key == "sample_size") {
      s.sample_size = to_size(val);
    } else if (key == "max_attempts") {
      s.max_attempts = to_size(val);
    } else if (key == "selector") {
      auto k = parse_selector(val);
      if (!k) throw fail("selector must be greedy or multinomial");
      s.selector = *k;
    } else if (key == "stop_at_eos") {
      s.stop_at_eos = to_bool(val);
    } else if (key == "timing") {
      s.timing = to_bool(val);
    } else if (key == "workers") {
      s.workers = to_size(val);
    } else {
      throw fail("unknown key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kBadSpec, "cannot read spec " + path.string());
  auto spec = parse_experiment_spec(in);
  if (spec.prefixes_file && spec.prefixes_file->is_relative()) {
    spec.prefixes_file = path.parent_path() / *spec.prefixes_file;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Running

std::vector<MetricsRow> aggregate(std::span<const CellOutcome> cells) {
  struct Acc {
    std::vector<double> disallowed, tpt, final_h;
    std::size_t runs = 0, aborted = 0, non_positive = 0, tokens = 0;
  };
  auto key_of = [](const CellOutcome& c) {
    return std::pair{static_cast<int>(c.mode), c.gamma ? *c.gamma : -1.0};
  };
  std::map<std::pair<int, double>, Acc> groups;
  for (const auto& c : cells) {
    Acc& a = groups[key_of(c)];
    ++a.runs;
    if (c.result.aborted) ++a.aborted;
    if (!is_desirable(c.final_h)) ++a.non_positive;
    a.tokens += c.result.tokens_emitted;
    a.disallowed.push_back(static_cast<double>(c.disallowed_total));
    a.final_h.push_back(c.final_h);
    if (c.result.tokens_emitted > 0) a.tpt.push_back(c.time_per_token_s);
  }
  std::vector<MetricsRow> rows;
  for (const auto& [key, a] : groups) {
    MetricsRow r;
    r.mode = static_cast<Mode>(key.first);
    if (key.second >= 0.0) r.gamma = key.second;
    r.runs = a.runs;
    r.aborted = a.aborted;
    const auto d = mean_std(a.disallowed);
    r.disallowed_per_generation = d.mean;
    r.disallowed_std = d.std;
    const auto t = mean_std(a.tpt);
    r.time_per_token_s = t.mean;
    r.time_per_token_std = t.std;
    const auto fh = mean_std(a.final_h);
    r.mean_final_h = fh.mean;
    r.final_h_std = fh.std;
    r.non_positive_rate = static_cast<double>(a.non_positive) / static_cast<double>(a.runs);
    r.tokens_per_generation = static_cast<double>(a.tokens) / static_cast<double>(a.runs);
    rows.push_back(r);
  }
  return rows;
}

namespace {

CellOutcome run_cell(CellOutcome cell, const TokenPredictor& g, const Lcf& h) {
  try {
    cell.result = generate(cell.request, g, h);
  } catch (const BackendUnavailableError&) {
    throw;
  } catch (const Error& e) {
    // Unsafe starts and similar are recorded per cell; the sweep continues.
    cell.result = GenerationResult{cell.request.initial_text, {}, 0, true, e.what()};
  }
  for (const auto& e : cell.result.trace) cell.disallowed_total += e.disallowed_count;
  cell.final_h = h.evaluate(cell.result.text);
  std::int64_t ns = 0;
  for (const auto& e : cell.result.trace) ns += e.elapsed_ns;
  if (cell.result.tokens_emitted > 0) {
    cell.time_per_token_s =
        static_cast<double>(ns) * 1e-9 / static_cast<double>(cell.result.tokens_emitted);
  }
  return cell;
}

ParsedTrace as_parsed(const CellOutcome& c) {
  ParsedTrace t;
  t.mode = to_string(c.mode);
  t.gamma = c.request.gamma();
  t.seed = c.seed;
  t.entries = c.result.trace;
  return t;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, std::span<const Text> prefixes,
                                const TokenPredictor& g, const Lcf& h,
                                const std::optional<std::filesystem::path>& out_dir) {
  spec.validate();
  if (prefixes.empty()) throw Error(ErrorCode::kBadSpec, "experiment has no prefixes");
  std::vector<CellOutcome> cells;
  const Seed master{spec.seed};
  for (std::size_t mi = 0; mi < spec.modes.size(); ++mi) {
    const Mode mode = spec.modes[mi];
    std::vector<std::optional<double>> gammas;
    if (gamma_dependent(mode)) {
      for (double gv : spec.gammas) gammas.emplace_back(gv);
    } else {
      gammas.emplace_back(std::nullopt);
    }
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
      for (std::size_t pi = 0; pi < prefixes.size(); ++pi) {
        for (std::size_t r = 0; r < spec.repeats_per_prefix; ++r) {
          Seed s = master.child(pi).child(r);
          if (spec.seed_policy == SeedPolicy::kIndependent) s = s.child(mi + 1).child(gi + 1);
          GenerationRequest req{prefixes[pi]};
          req.mode = mode;
          req.max_new_tokens = spec.max_new_tokens;
          req.selector = spec.selector;
          req.seed = s.value;
          req.stop_at_eos = spec.stop_at_eos;
          req.measure_time = spec.timing;
          const double gv = gammas[gi].value_or(0.0);
          req.filter = FilterConfig{gv, spec.delta, spec.top_k, spec.scan_cap};
          req.multistep = MultiStepConfig{spec.horizon, spec.sample_size, gv, spec.max_attempts, 1};
          CellOutcome c{mode, gammas[gi], pi, r, s.value, req, GenerationResult{prefixes[pi]}};
          c.trace_name = std::string(to_string(mode)) + "_g" + gamma_label(gammas[gi]) + "_p" +
                         std::to_string(pi) + "_r" + std::to_string(r) + ".jsonl";
          cells.push_back(std::move(c));
        }
      }
    }
  }

  ExperimentResult out;
  out.cells.reserve(cells.size());
  for (std::size_t begin = 0; begin < cells.size(); begin += spec.workers) {
    const std::size_t end = std::min(cells.size(), begin + spec.workers);
    if (spec.workers == 1) {
      out.cells.push_back(run_cell(std::move(cells[begin]), g, h));
      continue;
    }
    std::vector<std::future<CellOutcome>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, run_cell, std::move(cells[i]),
                                   std::cref(g), std::cref(h)));
    }
    for (auto& f : pending) out.cells.push_back(f.get());
  }
  out.rows = aggregate(out.cells);

  if (out_dir) {
    std::filesystem::create_directories(*out_dir / "traces");
    for (const auto& c : out.cells) {
      std::ofstream t(*out_dir / "traces" / c.trace_name, std::ios::binary);
      if (!t) throw Error(ErrorCode::kIo, "cannot write trace " + c.trace_name);
      write_trace(t, c.request, c.result, h.name());
    }
    std::ofstream m(*out_dir / "metrics.csv", std::ios::binary);
    if (!m) throw Error(ErrorCode::kIo, "cannot write metrics.csv");
    write_metrics_csv(m, out.rows, spec.timing);
    TrajectoryData traj;
    for (const auto& c : out.cells) traj.series.push_back(trajectory_of(c.trace_name, as_parsed(c)));
    std::ofstream tj(*out_dir / "trajectories.csv", std::ios::binary);
    write_trajectory_csv(tj, traj);
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows, bool timing) {
  out << "# cbfdecode metrics v1\n"
         "# disallowed_per_generation: rejected scan events (cbf_single) or rejected blocks "
         "(cbf_multistep) summed over a generation, mean/std over runs\n"
         "# time_per_token_s: wall-clock per emitted token including filtering, mean/std over "
         "runs; "
      << (timing ? "measured" : "timing disabled, reported as 0")
      << "\n"
         "# non_positive_rate: fraction of runs whose final text has h < 0\n";
  out << "mode,gamma,runs,aborted,disallowed_per_generation_mean,disallowed_per_generation_std,"
         "time_per_token_s_mean,time_per_token_s_std,mean_final_h,final_h_std,"
         "non_positive_rate,tokens_per_generation_mean\n";
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << (r.gamma ? fmt_num(*r.gamma) : std::string()) << ','
        << r.runs << ',' << r.aborted << ',' << fmt_num(r.disallowed_per_generation) << ','
        << fmt_num(r.disallowed_std) << ',' << fmt_num(r.time_per_token_s) << ','
        << fmt_num(r.time_per_token_std) << ',' << fmt_num(r.mean_final_h) << ','
        << fmt_num(r.final_h_std) << ',' << fmt_num(r.non_positive_rate) << ','
        << fmt_num(r.tokens_per_generation) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Trajectories

TrajectorySeries trajectory_of(const std::string& run, const ParsedTrace& trace) {
  TrajectorySeries s;
  s.run = run;
  s.mode = trace.mode;
  s.gamma = trace.gamma;
  if (trace.entries.empty()) return s;
  std::size_t k = 0;
  s.points.emplace_back(k, trace.entries.front().base_h);
  for (const auto& e : trace.entries) {
    if (e.aborted) continue;
    k += e.token_or_block.size();
    s.points.emplace_back(k, e.h_value);
  }
  return s;
}

TrajectoryData emit_trajectory_data(std::span<const std::filesystem::path> trace_files) {
  TrajectoryData data;
  for (const auto& path : trace_files) {
    std::ifstream in(path);
    if (!in) {
      data.errors.push_back({path.string(), 0, "cannot open"});
      continue;
    }
    const auto parsed = read_trace(in, path.string(), data.errors);
    data.series.push_back(trajectory_of(path.filename().string(), parsed));
  }
  return data;
}

void write_trajectory_csv(std::ostream& out, const TrajectoryData& data) {
  out << "run,mode,gamma,k,h\n";
  for (const auto& s : data.series) {
    for (const auto& [k, hv] : s.points) {
      out << s.run << ',' << s.mode << ',' << fmt_num(s.gamma) << ',' << k << ',' << fmt_num(hv)
          << '\n';
    }
  }
}

bool is_non_decreasing(const TrajectorySeries& s) {
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    if (s.points[i].second < s.points[i - 1].second) return false;
  }
  return true;
}

}  // namespace cbf
