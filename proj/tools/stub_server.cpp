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

// Reference protocol server backed by an n-gram model and a lexicon scorer.
// Speaks framed JSON on stdio, or on TCP when --port is given.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <unistd.h>

#include "cbf/error.hpp"
#include "cbf/lcf.hpp"
#include "cbf/ngram.hpp"
#include "cbf/protocol.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cbfdecode stub model server"};
  std::string model, classifier, model_id = "stub-ngram";
  double temperature = 1.0;
  std::optional<int> port;
  std::size_t max_connections = 0;
  app.add_option("--model", model, "n-gram model json")->required();
  app.add_option("--classifier", classifier, "lexicon tsv backing the score message");
  app.add_option("--temperature", temperature, "served temperature")->capture_default_str();
  app.add_option("--model-id", model_id)->capture_default_str();
  app.add_option("--port", port, "listen on 127.0.0.1:<port> (0 = ephemeral) instead of stdio");
  app.add_option("--max-connections", max_connections, "exit after this many (0 = unlimited)");
  CLI11_PARSE(app, argc, argv);

  try {
    std::signal(SIGPIPE, SIG_IGN);
    auto predictor = cbf::NGramModel::load(model);
    cbf::protocol::Server::Scorer scorer;
    if (!classifier.empty()) {
      scorer = cbf::protocol::lexicon_scorer(
          std::make_shared<cbf::LexiconLcf>(cbf::LexiconLcf::read_lexicon(classifier)));
    }
    cbf::protocol::Server server(predictor, scorer, temperature, model_id);
    if (port) {
      cbf::protocol::TcpListener listener(static_cast<std::uint16_t>(*port));
      std::cout << "listening " << listener.port() << std::endl;
      listener.serve(server, max_connections);
    } else {
      cbf::protocol::serve_stream(server, STDIN_FILENO, STDOUT_FILENO);
    }
  } catch (const std::exception& e) {
    std::cerr << "stub server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
