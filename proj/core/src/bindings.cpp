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

#include "cbf/bindings.hpp"

#include <charconv>
#include <sstream>

#include "cbf/error.hpp"
#include "cbf/ngram.hpp"

namespace cbf {

namespace {

std::pair<std::string, std::string> split_kind(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, ""};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(ErrorCode::kBadSpec, "bad number for " + what + ": '" + s + "'");
  return v;
}

}  // namespace

std::shared_ptr<protocol::Client> connect_remote(const std::string& spec, double temperature) {
  auto [kind, rest] = split_kind(spec);
  std::unique_ptr<protocol::Transport> transport;
  if (kind == "stdio") {
    if (rest.empty()) throw Error(ErrorCode::kBadSpec, "stdio binding needs a command");
    transport = std::make_unique<protocol::ProcessTransport>(rest);
  } else if (kind == "tcp") {
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kBadSpec, "tcp binding needs host:port");
    unsigned port = 0;
    const std::string port_s = rest.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(port_s.data(), port_s.data() + port_s.size(), port);
    if (ec != std::errc() || ptr != port_s.data() + port_s.size() || port == 0 || port > 65535) {
      throw Error(ErrorCode::kBadSpec, "bad tcp port '" + port_s + "'");
    }
    transport = std::make_unique<protocol::TcpTransport>(rest.substr(0, colon),
                                                        static_cast<std::uint16_t>(port));
  } else {
    throw Error(ErrorCode::kBadSpec, "not a remote binding: '" + spec + "'");
  }
  auto client = std::make_shared<protocol::Client>(std::move(transport));
  client->hello(temperature);
  return client;
}

Bindings resolve_bindings(const std::string& backend, const std::string& lcf, double temperature) {
  Bindings b;
  b.backend_spec = backend;
  b.lcf_spec = lcf;
  auto [bkind, brest] = split_kind(backend);
  if (bkind == "ngram") {
    b.predictor = NGramModel::load(brest);
  } else if (bkind == "uniform") {
    b.predictor = std::make_shared<UniformPredictor>(NGramModel::load(brest)->vocabulary());
  } else if (bkind == "stdio" || bkind == "tcp") {
    b.client = connect_remote(backend, temperature);
    b.predictor = std::make_shared<CachingPredictor>(
        std::make_shared<protocol::RemotePredictor>(b.client));
  } else {
    throw Error(ErrorCode::kBadSpec, "unknown backend '" + backend + "'");
  }

  auto [lkind, lrest] = split_kind(lcf);
  if (lkind == "lexicon") {
    std::istringstream parts(lrest);
    std::string path;
    std::getline(parts, path, ',');
    std::size_t window = LexiconLcf::kWholeText;
    double normalizer = 1.0;
    std::string opt;
    while (std::getline(parts, opt, ',')) {
      auto eq = opt.find('=');
      const std::string key = opt.substr(0, eq);
      const std::string val = eq == std::string::npos ? "" : opt.substr(eq + 1);
      if (key == "window") {
        window = static_cast<std::size_t>(parse_double(val, "window"));
      } else if (key == "normalizer") {
        normalizer = parse_double(val, "normalizer");
      } else {
        throw Error(ErrorCode::kBadSpec, "unknown lexicon option '" + key + "'");
      }
    }
    b.lcf = std::make_shared<LexiconLcf>(LexiconLcf::read_lexicon(path), window, normalizer);
  } else if (lkind == "constant") {
    b.lcf = std::make_shared<ConstantLcf>(parse_double(lrest, "constant"));
  } else if (lkind == "remote") {
    if (!b.client) throw Error(ErrorCode::kBadSpec, "lcf 'remote' needs a remote backend");
    b.lcf = protocol::make_remote_classifier(b.client);
  } else if (lkind == "stdio" || lkind == "tcp") {
    b.lcf = protocol::make_remote_classifier(connect_remote(lcf, temperature));
  } else {
    throw Error(ErrorCode::kBadSpec, "unknown lcf '" + lcf + "'");
  }
  return b;
}

}  // namespace cbf
