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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cbf/engine.hpp"

namespace cbf {

// JSON-lines trace: one header object, one object per TraceEntry, one footer.
// Keys are emitted in a fixed order and token ids are 1-based, so equal runs
// produce byte-identical files. Field reference: docs/formats.md.
void write_trace(std::ostream& out, const GenerationRequest& req, const GenerationResult& result,
                 const std::string& lcf_name);

// The fields of a trace that trajectory extraction needs.
struct ParsedTrace {
  std::string mode;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::vector<TraceEntry> entries;
};

struct TraceLineError {
  std::string source;
  std::size_t line = 0;
  std::string message;
};

// Lenient reader: malformed lines are reported and skipped. An empty stream
// yields an empty trace with no errors.
ParsedTrace read_trace(std::istream& in, const std::string& source,
                       std::vector<TraceLineError>& errors);

}  // namespace cbf
