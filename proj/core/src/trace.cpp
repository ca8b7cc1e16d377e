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

#include "cbf/trace.hpp"

#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace cbf {

namespace {

using ojson = nlohmann::ordered_json;

ojson ids_json(const std::vector<TokenId>& ids) {
  ojson a = ojson::array();
  for (TokenId t : ids) a.push_back(t.value);
  return a;
}

}  // namespace

void write_trace(std::ostream& out, const GenerationRequest& req, const GenerationResult& result,
                 const std::string& lcf_name) {
  const Vocabulary& vocab = req.initial_text.vocab();
  ojson header;
  header["type"] = "header";
  header["format"] = "cbf-trace";
  header["version"] = 1;
  header["vocab_id"] = vocab.fingerprint();
  header["mode"] = to_string(req.mode);
  header["gamma"] = req.gamma();
  header["seed"] = req.seed;
  ojson echo;
  echo["initial_text"] = req.initial_text.rendered();
  echo["initial_ids"] = ids_json(req.initial_text.ids());
  echo["max_new_tokens"] = req.max_new_tokens;
  echo["stop_at_eos"] = req.stop_at_eos;
  echo["eos_id"] = vocab.eos() ? ojson(vocab.eos()->value) : ojson(nullptr);
  echo["selector"] = to_string(req.selector);
  echo["lcf"] = lcf_name;
  echo["top_k"] = req.filter.top_k;
  echo["scan_cap"] = req.filter.effective_scan_cap();
  echo["delta"] = req.filter.delta;
  echo["horizon"] = req.multistep.horizon;
  echo["sample_size"] = req.multistep.sample_size;
  echo["max_attempts"] = req.multistep.effective_max_attempts();
  echo["timing"] = req.measure_time ? "wall" : "off";
  header["request"] = std::move(echo);
  out << header.dump() << '\n';

  for (const TraceEntry& e : result.trace) {
    ojson j;
    j["step"] = e.step;
    j["token_or_block"] = ids_json(e.token_or_block);
    j["h_value"] = e.h_value;
    j["base_h"] = e.base_h;
    j["disallowed_count"] = e.disallowed_count;
    j["scans_or_attempts"] = e.scans_or_attempts;
    j["elapsed_ns"] = e.elapsed_ns;
    j["truncated"] = e.truncated;
    j["aborted"] = e.aborted;
    out << j.dump() << '\n';
  }

  ojson footer;
  footer["type"] = "footer";
  footer["tokens_emitted"] = result.tokens_emitted;
  footer["aborted"] = result.aborted;
  footer["abort_reason"] = result.abort_reason;
  footer["final_text"] = result.text.rendered();
  out << footer.dump() << '\n';
}

ParsedTrace read_trace(std::istream& in, const std::string& source,
                       std::vector<TraceLineError>& errors) {
  ParsedTrace t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::runtime_error("not a JSON object");
      if (j.contains("type")) {
        if (j["type"] == "header") {
          t.mode = j.at("mode").get<std::string>();
          t.gamma = j.at("gamma").get<double>();
          t.seed = j.at("seed").get<std::uint64_t>();
        }
        continue;
      }
      TraceEntry e;
      e.step = j.at("step").get<std::size_t>();
      for (auto id : j.at("token_or_block")) e.token_or_block.push_back({id.get<std::uint32_t>()});
      e.h_value = j.at("h_value").get<double>();
      e.base_h = j.at("base_h").get<double>();
      e.disallowed_count = j.at("disallowed_count").get<std::size_t>();
      e.scans_or_attempts = j.at("scans_or_attempts").get<std::size_t>();
      e.elapsed_ns = j.at("elapsed_ns").get<std::int64_t>();
      e.truncated = j.at("truncated").get<bool>();
      e.aborted = j.value("aborted", false);
      t.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      errors.push_back({source, lineno, ex.what()});
    }
  }
  return t;
}

}  // namespace cbf
