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

// cbfdecode: command line front end for constrained generation and sweeps.
//
// Exit codes: 0 success, 1 other failure, 2 infeasible-constraint abort,
// 3 backend unavailable, 4 bad spec or bad arguments.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cbf/bindings.hpp"
#include "cbf/error.hpp"
#include "cbf/harness.hpp"
#include "cbf/ngram.hpp"
#include "cbf/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitBackend = 3;
constexpr int kExitBadSpec = 4;

int exit_code_for(cbf::ErrorCode code) {
  switch (code) {
    case cbf::ErrorCode::kInfeasibleConstraint:
    case cbf::ErrorCode::kInfeasibleHorizon:
      return kExitInfeasible;
    case cbf::ErrorCode::kBackendUnavailable:
      return kExitBackend;
    case cbf::ErrorCode::kBadSpec:
    case cbf::ErrorCode::kInvalidConfig:
    case cbf::ErrorCode::kInvalidToken:
    case cbf::ErrorCode::kUnsafeStart:
      return kExitBadSpec;
    default:
      return kExitFailure;
  }
}

struct DecodeOptions {
  std::string backend;
  std::string lcf;
  std::string mode = "cbf_single";
  double gamma = 0.4;
  double delta = 0.0;
  std::size_t top_k = 30;
  std::size_t scan_cap = 0;
  std::size_t horizon = 3;
  std::size_t sample_size = 2;
  std::size_t max_attempts = 0;
  std::size_t max_new_tokens = 30;
  std::size_t workers = 1;
  std::string selector = "multinomial";
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool timing = false;
  bool no_stop_at_eos = false;
};

void add_binding_flags(CLI::App* app, DecodeOptions& o) {
  app->add_option("--backend", o.backend, "ngram:<model.json> | uniform:<model.json> | stdio:<cmd> | tcp:<host>:<port>")
      ->required();
  app->add_option("--lcf", o.lcf, "lexicon:<file>[,window=n][,normalizer=x] | constant:<v> | remote | stdio:<cmd> | tcp:<host>:<port>")
      ->required();
  app->add_option("--temperature", o.temperature, "predictor temperature")->capture_default_str();
}

void add_decode_flags(CLI::App* app, DecodeOptions& o) {
  app->add_option("--mode", o.mode, "none | cbf_single | cbf_multistep | best_of_k")->capture_default_str();
  app->add_option("--gamma", o.gamma, "barrier rate in [0, 1]")->capture_default_str();
  app->add_option("--delta", o.delta, "relaxation mass in [0, 1)")->capture_default_str();
  app->add_option("--top-k", o.top_k, "allowed tokens gathered per step")->capture_default_str();
  app->add_option("--scan-cap", o.scan_cap, "max tokens scanned per step (0 = 200 * top-k)");
  app->add_option("--horizon", o.horizon, "block length H")->capture_default_str();
  app->add_option("--sample-size", o.sample_size, "candidate blocks K")->capture_default_str();
  app->add_option("--max-attempts", o.max_attempts, "block draws per step (0 = 1000 * K)");
  app->add_option("--max-new-tokens", o.max_new_tokens, "token budget")->capture_default_str();
  app->add_option("--selector", o.selector, "greedy | multinomial")->capture_default_str();
  app->add_option("--seed", o.seed, "master seed")->capture_default_str();
  app->add_option("--workers", o.workers, "parallel workers")->capture_default_str();
  app->add_flag("--timing", o.timing, "record wall-clock time (outputs are then not byte-stable)");
  app->add_flag("--no-stop-at-eos", o.no_stop_at_eos, "keep generating after eos");
}

cbf::Mode mode_or_throw(const std::string& s) {
  auto m = cbf::parse_mode(s);
  if (!m) throw cbf::Error(cbf::ErrorCode::kBadSpec, "unknown mode '" + s + "'");
  return *m;
}

cbf::SelectorKind selector_or_throw(const std::string& s) {
  auto k = cbf::parse_selector(s);
  if (!k) throw cbf::Error(cbf::ErrorCode::kBadSpec, "unknown selector '" + s + "'");
  return *k;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cbf::Error(cbf::ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

int run_generate(const DecodeOptions& o, const std::string& prompt, const std::string& trace_path,
                 const std::string& out_dir) {
  auto b = cbf::resolve_bindings(o.backend, o.lcf, o.temperature);
  cbf::GenerationRequest req{cbf::Text::parse(b.predictor->vocabulary(), prompt)};
  req.mode = mode_or_throw(o.mode);
  req.max_new_tokens = o.max_new_tokens;
  req.selector = selector_or_throw(o.selector);
  req.seed = o.seed;
  req.stop_at_eos = !o.no_stop_at_eos;
  req.measure_time = o.timing;
  req.filter = cbf::FilterConfig{o.gamma, o.delta, o.top_k, o.scan_cap};
  req.multistep = cbf::MultiStepConfig{o.horizon, o.sample_size, o.gamma, o.max_attempts, o.workers};
  const auto result = cbf::generate(req, *b.predictor, *b.lcf);

  std::filesystem::path tp = trace_path;
  if (tp.empty() && !out_dir.empty()) tp = std::filesystem::path(out_dir) / "trace.jsonl";
  if (!tp.empty()) {
    auto out = open_out(tp);
    cbf::write_trace(out, req, result, b.lcf->name());
  }
  std::cout << result.text.rendered() << '\n';
  if (result.aborted) {
    std::cerr << "aborted: " << result.abort_reason << '\n';
    return kExitInfeasible;
  }
  return kExitOk;
}

int run_sweep(const std::string& spec_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed, const std::string& backend,
              const std::string& lcf, const std::optional<std::size_t>& workers) {
  auto spec = cbf::load_experiment_spec(spec_path);
  if (seed) spec.seed = *seed;
  if (!backend.empty()) spec.backend = backend;
  if (!lcf.empty()) spec.lcf = lcf;
  if (workers) spec.workers = *workers;
  spec.validate();
  auto b = cbf::resolve_bindings(spec.backend, spec.lcf, spec.temperature);
  std::vector<cbf::Text> prefixes;
  for (const auto& p : spec.prefixes) prefixes.push_back(cbf::Text::parse(b.predictor->vocabulary(), p));
  if (spec.prefixes_file) {
    for (auto& t : cbf::load_texts(*spec.prefixes_file, b.predictor->vocabulary())) {
      prefixes.push_back(std::move(t));
    }
  }
  const auto result = cbf::run_experiment(spec, prefixes, *b.predictor, *b.lcf, out_dir);
  std::size_t aborted = 0;
  for (const auto& r : result.rows) aborted += r.aborted;
  std::cout << "cells: " << result.cells.size() << ", rows: " << result.rows.size()
            << ", aborted: " << aborted << ", out: " << out_dir << '\n';
  return kExitOk;
}

int run_train(const std::string& corpus, const std::string& out, int order, double alpha,
              const std::string& eos) {
  auto c = cbf::load_corpus(corpus, eos.empty() ? std::nullopt : std::optional<std::string>(eos));
  auto model = cbf::train_ngram(c.texts, order, alpha);
  model->save(out);
  std::cout << "vocab " << c.vocab->size() << ", texts " << c.texts.size() << ", order " << order
            << " -> " << out << '\n';
  return kExitOk;
}

int run_select(const DecodeOptions& o, const std::string& corpus,
               const cbf::PrefixSelectionOptions& opts, const std::string& out) {
  auto b = cbf::resolve_bindings(o.backend, o.lcf, o.temperature);
  const auto texts = cbf::load_texts(corpus, b.predictor->vocabulary());
  const auto sel = cbf::select_prefixes(texts, *b.predictor, *b.lcf, opts);
  std::ostringstream lines;
  for (const auto& p : sel.prefixes) lines << p.rendered() << '\n';
  if (out.empty()) {
    std::cout << lines.str();
  } else {
    auto f = open_out(out);
    f << lines.str();
  }
  if (sel.shortage_notice) std::cerr << "notice: " << *sel.shortage_notice << '\n';
  return kExitOk;
}

int run_probe(const std::string& backend, double temperature) {
  auto client = cbf::connect_remote(backend, temperature);
  const auto& hs = client->handshake();
  nlohmann::ordered_json j;
  j["endpoint"] = client->endpoint();
  j["model_id"] = hs.model_id;
  j["vocab_size"] = hs.vocab_size;
  j["temperature"] = hs.temperature;
  j["supports"] = {{"predict_topm", hs.supports_predict_topm}, {"score", hs.supports_score}};
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int run_trajectories(const std::vector<std::string>& traces, const std::string& out) {
  std::vector<std::filesystem::path> paths(traces.begin(), traces.end());
  const auto data = cbf::emit_trajectory_data(paths);
  if (out.empty()) {
    cbf::write_trajectory_csv(std::cout, data);
  } else {
    auto f = open_out(out);
    cbf::write_trajectory_csv(f, data);
  }
  for (const auto& e : data.errors) {
    std::cerr << e.source << ':' << e.line << ": " << e.message << '\n';
  }
  return data.errors.empty() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-barrier constrained decoding"};
  app.require_subcommand(1);

  DecodeOptions gen;
  std::string prompt, trace_path, gen_out_dir;
  auto* g = app.add_subcommand("generate", "generate one continuation");
  add_binding_flags(g, gen);
  add_decode_flags(g, gen);
  g->add_option("--prompt", prompt, "initial text")->required();
  g->add_option("--trace", trace_path, "trace output (JSON lines)");
  g->add_option("--out-dir", gen_out_dir, "writes trace.jsonl here when --trace is absent");

  std::string spec_path, sweep_out, sweep_backend, sweep_lcf;
  std::optional<std::uint64_t> sweep_seed;
  std::optional<std::size_t> sweep_workers;
  auto* s = app.add_subcommand("sweep", "run an experiment spec");
  s->add_option("spec", spec_path, "experiment spec file")->required();
  s->add_option("--out-dir", sweep_out, "output directory")->required();
  s->add_option("--seed", sweep_seed, "override the experiment seed");
  s->add_option("--backend", sweep_backend, "override the experiment backend");
  s->add_option("--lcf", sweep_lcf, "override the experiment lcf");
  s->add_option("--workers", sweep_workers, "override the experiment worker count");

  std::string corpus, model_out, eos;
  int order = 2;
  double alpha = 0.1;
  auto* t = app.add_subcommand("train-ngram", "train an n-gram model from a corpus");
  t->add_option("--corpus", corpus, "one text per line")->required();
  t->add_option("--out", model_out, "model json")->required();
  t->add_option("--order", order, "n")->capture_default_str();
  t->add_option("--alpha", alpha, "add-alpha smoothing")->capture_default_str();
  t->add_option("--eos", eos, "end-of-sequence token string");

  DecodeOptions sel;
  cbf::PrefixSelectionOptions popts;
  std::string sel_corpus, sel_out;
  auto* p = app.add_subcommand("select-prefixes", "pick prefixes that risk undesirable continuations");
  add_binding_flags(p, sel);
  p->add_option("--corpus", sel_corpus, "one text per line")->required();
  p->add_option("--count", popts.count)->capture_default_str();
  p->add_option("--prefix-len", popts.prefix_len)->capture_default_str();
  p->add_option("--min-tokens", popts.min_tokens, "source texts must be longer")->capture_default_str();
  p->add_option("--probe-seeds", popts.probe_seeds)->capture_default_str();
  p->add_option("--probe-max-new-tokens", popts.probe_max_new_tokens)->capture_default_str();
  p->add_option("--seed", popts.seed)->capture_default_str();
  p->add_option("--out", sel_out, "output file (default stdout)");

  std::string probe_backend;
  double probe_temp = 1.0;
  auto* pr = app.add_subcommand("probe-server", "handshake with a remote backend");
  pr->add_option("--backend", probe_backend, "stdio:<cmd> | tcp:<host>:<port>")->required();
  pr->add_option("--temperature", probe_temp)->capture_default_str();

  std::vector<std::string> traces;
  std::string traj_out;
  auto* tr = app.add_subcommand("trajectories", "extract (k, h) series from traces");
  tr->add_option("traces", traces, "trace files")->required();
  tr->add_option("--out", traj_out, "output csv (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadSpec;
  }

  try {
    if (*g) return run_generate(gen, prompt, trace_path, gen_out_dir);
    if (*s) return run_sweep(spec_path, sweep_out, sweep_seed, sweep_backend, sweep_lcf, sweep_workers);
    if (*t) return run_train(corpus, model_out, order, alpha, eos);
    if (*p) return run_select(sel, sel_corpus, popts, sel_out);
    if (*pr) return run_probe(probe_backend, probe_temp);
    if (*tr) return run_trajectories(traces, traj_out);
  } catch (const cbf::Error& e) {
    std::cerr << "error [" << cbf::to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
