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

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbf/lcf.hpp"
#include "cbf/predictor.hpp"

// Model-server wire protocol, version 1.
//
// Each message is a UTF-8 JSON object preceded by its byte length as a 4-byte
// big-endian unsigned integer. The same framing is used over stdio and TCP.
// Message schemas are listed field by field in docs/protocol.md.
namespace cbf::protocol {

inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

std::string encode_frame(const std::string& payload);
// Reads one frame from a file descriptor. nullopt on clean EOF before the
// length prefix; throws kProtocol on truncation or oversize frames.
std::optional<std::string> read_frame(int fd);
void write_frame(int fd, const std::string& payload);

// A request/response channel carrying unframed JSON payloads.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string roundtrip(const std::string& request) = 0;
  virtual std::string endpoint() const = 0;
};

// In-process channel; the handler sees exactly the payload bytes.
class LoopbackTransport final : public Transport {
 public:
  using Handler = std::function<std::string(const std::string&)>;
  explicit LoopbackTransport(Handler handler) : handler_(std::move(handler)) {}
  std::string roundtrip(const std::string& request) override { return handler_(request); }
  std::string endpoint() const override { return "loopback"; }

 private:
  Handler handler_;
};

// TCP client. Connects lazily and retries the connect `attempts` times.
class TcpTransport final : public Transport {
 public:
  TcpTransport(std::string host, std::uint16_t port, int attempts = 3,
               int retry_delay_ms = 100);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  std::string roundtrip(const std::string& request) override;
  std::string endpoint() const override;

 private:
  void connect();

  std::string host_;
  std::uint16_t port_;
  int attempts_;
  int retry_delay_ms_;
  int fd_ = -1;
};

// Spawns `/bin/sh -c command` and talks over its stdin/stdout.
class ProcessTransport final : public Transport {
 public:
  explicit ProcessTransport(std::string command);
  ~ProcessTransport() override;
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  std::string roundtrip(const std::string& request) override;
  std::string endpoint() const override { return "stdio:" + command_; }

 private:
  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

struct Handshake {
  std::size_t vocab_size = 0;
  std::string model_id;
  double temperature = 1.0;
  bool supports_predict_topm = false;
  bool supports_score = false;
  std::vector<std::string> tokens;
  std::string separator;
  std::optional<TokenId> eos;
};

// Serializes requests on one transport and checks every response.
class Client {
 public:
  explicit Client(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {}

  // Sends hello; the server must echo the requested temperature.
  const Handshake& hello(double temperature);
  const Handshake& handshake() const;

  PagedPrediction predict_topm(const std::string& text, std::size_t offset, std::size_t m);
  ClassScores score(const std::string& text);

  std::string endpoint() const { return transport_->endpoint(); }

 private:
  nlohmann::json call(nlohmann::json request, const char* expected_type);

  std::unique_ptr<Transport> transport_;
  std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::optional<Handshake> handshake_;
};

// Token predictor served remotely. The vocabulary comes from the handshake.
// predict() reassembles the full distribution from top_m pages and
// renormalizes it; filter_topk prefers predict_topm and only pulls the ranks
// it scans.
class RemotePredictor final : public TokenPredictor {
 public:
  RemotePredictor(std::shared_ptr<Client> client, std::size_t page_size = 256);

  const VocabularyPtr& vocabulary() const override { return vocab_; }
  PredictorCapabilities capabilities() const override { return {false, true}; }
  TokenDistribution predict(const Text& x) const override;
  PagedPrediction predict_topm(const Text& x, std::size_t offset, std::size_t m) const override;

 private:
  std::shared_ptr<Client> client_;
  VocabularyPtr vocab_;
  std::size_t page_size_;
};

std::shared_ptr<ClassifierLcf> make_remote_classifier(std::shared_ptr<Client> client);

// Reference request handler for the protocol: serves any local predictor and
// any class scorer. Backs the stub server binary and loopback tests.
class Server {
 public:
  using Scorer = std::function<ClassScores(const Text&)>;

  Server(PredictorPtr predictor, Scorer scorer, double temperature, std::string model_id);

  // Never throws: malformed input produces an error message object.
  std::string handle(const std::string& request);

 private:
  nlohmann::json dispatch(const nlohmann::json& req);
  TokenDistribution tempered(const Text& x) const;

  PredictorPtr predictor_;
  Scorer scorer_;
  double temperature_;
  std::string model_id_;
};

// Lexicon-driven 3-class scorer: logits (-4v, 0, 4v) for the mean valence v.
Server::Scorer lexicon_scorer(std::shared_ptr<const LexiconLcf> lexicon);

// Serves framed requests from `in_fd` to `out_fd` until EOF.
void serve_stream(Server& server, int in_fd, int out_fd);

// Listening TCP socket on 127.0.0.1. Port 0 picks an ephemeral port.
class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port = 0);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  // Accepts connections one after another until stop() or `max_connections`.
  void serve(Server& server, std::size_t max_connections = 0);
  void stop();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
};

}  // namespace cbf::protocol
