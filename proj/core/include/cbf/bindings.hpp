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

#include <memory>
#include <string>

#include "cbf/lcf.hpp"
#include "cbf/predictor.hpp"
#include "cbf/protocol.hpp"

namespace cbf {

// Predictor and L-CF resolved from their textual bindings.
//
// Backend forms:
//   ngram:<model.json>
//   uniform:<model.json>       uniform over that model's vocabulary
//   stdio:<shell command>      remote server spoken to over a child's stdio
//   tcp:<host>:<port>          remote server over TCP
// L-CF forms:
//   lexicon:<file.tsv>[,window=<n>][,normalizer=<x>]
//   constant:<value>
//   remote                     score messages on the backend's connection
//   stdio:<cmd> | tcp:<host>:<port>   a separate classifier server
//
// Remote backends are wrapped in a CachingPredictor.
struct Bindings {
  PredictorPtr predictor;
  LcfPtr lcf;
  std::shared_ptr<protocol::Client> client;  // set for remote backends
  std::string backend_spec;
  std::string lcf_spec;
};

Bindings resolve_bindings(const std::string& backend, const std::string& lcf,
                          double temperature = 1.0);

// Connects and exchanges hello.
std::shared_ptr<protocol::Client> connect_remote(const std::string& spec, double temperature);

}  // namespace cbf
