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

#include "cbf/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "cbf/error.hpp"

extern char** environ;

namespace cbf::protocol {

using nlohmann::json;

namespace {

Error protocol_error(const std::string& what) { return Error(ErrorCode::kProtocol, what); }

bool write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0 && errno == ENOTSOCK) w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

// Returns bytes read; fewer than n only at EOF.
std::size_t read_all(int fd, char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::read(fd, data + got, n - got);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw protocol_error(std::string("read failed: ") + std::strerror(errno));
    }
    if (r == 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

}  // namespace

std::string encode_frame(const std::string& payload) {
  if (payload.size() > kMaxFrameBytes) throw protocol_error("frame too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

std::optional<std::string> read_frame(int fd) {
  unsigned char prefix[4];
  const std::size_t got = read_all(fd, reinterpret_cast<char*>(prefix), 4);
  if (got == 0) return std::nullopt;
  if (got < 4) throw protocol_error("truncated length prefix");
  const std::uint32_t n = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                          (std::uint32_t{prefix[2]} << 8) | std::uint32_t{prefix[3]};
  if (n > kMaxFrameBytes) throw protocol_error("frame of " + std::to_string(n) + " bytes");
  std::string payload(n, '\0');
  if (read_all(fd, payload.data(), n) < n) throw protocol_error("truncated frame body");
  return payload;
}

void write_frame(int fd, const std::string& payload) {
  const std::string frame = encode_frame(payload);
  if (!write_all(fd, frame.data(), frame.size())) {
    throw protocol_error(std::string("write failed: ") + std::strerror(errno));
  }
}

// ---------------------------------------------------------------------------
// TCP

TcpTransport::TcpTransport(std::string host, std::uint16_t port, int attempts,
                           int retry_delay_ms)
    : host_(std::move(host)), port_(port), attempts_(attempts), retry_delay_ms_(retry_delay_ms) {}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::string TcpTransport::endpoint() const {
  return "tcp:" + host_ + ":" + std::to_string(port_);
}

void TcpTransport::connect() {
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= attempts_; ++attempt) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const int rc = ::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res);
    if (rc != 0) {
      last_error = ::gai_strerror(rc);
    } else {
      for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
          fd_ = fd;
          break;
        }
        last_error = std::strerror(errno);
        ::close(fd);
      }
      ::freeaddrinfo(res);
      if (fd_ >= 0) return;
    }
    if (attempt < attempts_) std::this_thread::sleep_for(std::chrono::milliseconds(retry_delay_ms_));
  }
  throw BackendUnavailableError(endpoint(), last_error, attempts_, retry_delay_ms_);
}

std::string TcpTransport::roundtrip(const std::string& request) {
  if (fd_ < 0) connect();
  try {
    write_frame(fd_, request);
    auto reply = read_frame(fd_);
    if (!reply) throw protocol_error("connection closed by server");
    return *reply;
  } catch (const Error& e) {
    ::close(fd_);
    fd_ = -1;
    throw BackendUnavailableError(endpoint(), e.what(), 1, retry_delay_ms_);
  }
}

// ---------------------------------------------------------------------------
// Child process over stdio

ProcessTransport::ProcessTransport(std::string command) : command_(std::move(command)) {
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw BackendUnavailableError(endpoint(), "pipe failed", 1, 0);
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw BackendUnavailableError(endpoint(), "pipe failed", 1, 0);
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, in_pipe[1]);
  posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
  const char* argv[] = {"/bin/sh", "-c", command_.c_str(), nullptr};
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv),
                             environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw BackendUnavailableError(endpoint(), std::strerror(rc), 1, 0);
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessTransport::~ProcessTransport() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string ProcessTransport::roundtrip(const std::string& request) {
  try {
    write_frame(to_child_, request);
    auto reply = read_frame(from_child_);
    if (!reply) throw protocol_error("server process closed its output");
    return *reply;
  } catch (const Error& e) {
    throw BackendUnavailableError(endpoint(), e.what(), 1, 0);
  }
}

// ---------------------------------------------------------------------------
// Client

json Client::call(json request, const char* expected_type) {
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_id_++;
  request["v"] = kVersion;
  request["id"] = id;
  const std::string raw = transport_->roundtrip(request.dump());
  json reply;
  try {
    reply = json::parse(raw);
  } catch (const json::exception& e) {
    throw protocol_error(std::string("unparseable response: ") + e.what());
  }
  if (!reply.is_object() || reply.value("v", 0) != kVersion) {
    throw protocol_error("response is not a version-1 message");
  }
  const std::string type = reply.value("type", "");
  if (type == "error") {
    throw protocol_error("server error " + reply.value("code", std::string("?")) + ": " +
                         reply.value("message", std::string()));
  }
  if (type != expected_type) {
    throw protocol_error("expected '" + std::string(expected_type) + "' response, got '" + type + "'");
  }
  if (reply.value("id", std::uint64_t{0}) != id) throw protocol_error("response id mismatch");
  return reply;
}

const Handshake& Client::hello(double temperature) {
  json reply = call({{"type", "hello"}, {"temperature", temperature}}, "handshake");
  try {
    Handshake h;
    h.vocab_size = reply.at("vocab_size").get<std::size_t>();
    h.model_id = reply.at("model_id").get<std::string>();
    h.temperature = reply.at("temperature").get<double>();
    h.supports_predict_topm = reply.at("supports").at("predict_topm").get<bool>();
    h.supports_score = reply.at("supports").at("score").get<bool>();
    h.tokens = reply.at("tokens").get<std::vector<std::string>>();
    h.separator = reply.value("separator", std::string());
    if (reply.contains("eos") && !reply["eos"].is_null()) {
      h.eos = TokenId{reply["eos"].get<std::uint32_t>()};
      if (h.eos->value < 1 || h.eos->value > h.vocab_size) throw protocol_error("handshake eos out of range");
    }
    if (h.tokens.size() != h.vocab_size) throw protocol_error("handshake token list size mismatch");
    if (h.temperature != temperature) {
      throw protocol_error("server temperature " + std::to_string(h.temperature) +
                           " does not match requested " + std::to_string(temperature));
    }
    handshake_ = std::move(h);
  } catch (const json::exception& e) {
    throw protocol_error(std::string("malformed handshake: ") + e.what());
  }
  return *handshake_;
}

const Handshake& Client::handshake() const {
  if (!handshake_) throw protocol_error("hello has not been exchanged");
  return *handshake_;
}

PagedPrediction Client::predict_topm(const std::string& text, std::size_t offset, std::size_t m) {
  json reply = call({{"type", "predict_topm"}, {"text", text}, {"offset", offset}, {"m", m}},
                    "predict_topm");
  try {
    PagedPrediction page;
    page.offset = reply.at("offset").get<std::size_t>();
    page.remaining_mass = reply.at("remaining_mass").get<double>();
    double prev = 2.0;
    TokenId prev_id{0};
    for (const auto& e : reply.at("entries")) {
      const TokenId t{e.at("id").get<std::uint32_t>()};
      const double p = e.at("p").get<double>();
      if (p > prev || (p == prev && t < prev_id)) throw protocol_error("page is not sorted");
      page.entries.emplace_back(t, p);
      prev = p;
      prev_id = t;
    }
    return page;
  } catch (const json::exception& e) {
    throw protocol_error(std::string("malformed predict_topm response: ") + e.what());
  }
}

ClassScores Client::score(const std::string& text) {
  json reply = call({{"type", "score"}, {"text", text}}, "score");
  try {
    return {reply.at("s_neg").get<double>(), reply.at("s_neu").get<double>(),
            reply.at("s_pos").get<double>()};
  } catch (const json::exception& e) {
    throw protocol_error(std::string("malformed score response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Remote predictor / classifier

RemotePredictor::RemotePredictor(std::shared_ptr<Client> client, std::size_t page_size)
    : client_(std::move(client)), page_size_(page_size) {
  const Handshake& h = client_->handshake();
  if (!h.supports_predict_topm) throw protocol_error("server does not offer predict_topm");
  vocab_ = Vocabulary::create(h.tokens, h.separator, h.eos);
}

PagedPrediction RemotePredictor::predict_topm(const Text& x, std::size_t offset,
                                              std::size_t m) const {
  check_text(x);
  auto page = client_->predict_topm(x.rendered(), offset, m);
  for (const auto& [t, p] : page.entries) {
    if (!vocab_->contains(t)) throw protocol_error("page names an unknown token id");
  }
  return page;
}

TokenDistribution RemotePredictor::predict(const Text& x) const {
  check_text(x);
  std::vector<double> probs(vocab_->size(), 0.0);
  std::size_t offset = 0;
  while (offset < vocab_->size()) {
    auto page = predict_topm(x, offset, page_size_);
    if (page.entries.empty()) break;
    for (const auto& [t, p] : page.entries) probs[t.index()] = p;
    offset += page.entries.size();
    if (page.remaining_mass <= 0.0) break;
  }
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-6) {
    throw protocol_error("reassembled distribution sums to " + std::to_string(total));
  }
  for (double& p : probs) p /= total;
  return TokenDistribution::from_probs(std::move(probs));
}

std::shared_ptr<ClassifierLcf> make_remote_classifier(std::shared_ptr<Client> client) {
  if (!client->handshake().supports_score) throw protocol_error("server does not offer score");
  const std::string name = "classifier:" + client->handshake().model_id;
  return std::make_shared<ClassifierLcf>(
      name, [client](const Text& x) { return client->score(x.rendered()); });
}

// ---------------------------------------------------------------------------
// Server

Server::Server(PredictorPtr predictor, Scorer scorer, double temperature, std::string model_id)
    : predictor_(std::move(predictor)),
      scorer_(std::move(scorer)),
      temperature_(temperature),
      model_id_(std::move(model_id)) {}

TokenDistribution Server::tempered(const Text& x) const {
  const auto p = predictor_->predict(x);
  if (temperature_ == 1.0) return p;
  std::vector<double> logits(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) logits[i] = std::log(p.probs()[i]);
  return softmax_with_temperature(logits, {temperature_, 0});
}

namespace {

json error_message(const json& id, const std::string& code, const std::string& message) {
  json e;
  e["v"] = kVersion;
  e["type"] = "error";
  e["id"] = id;
  e["code"] = code;
  e["message"] = message;
  return e;
}

}  // namespace

json Server::dispatch(const json& req) {
  const json id = req.contains("id") ? req["id"] : json(nullptr);
  if (req.value("v", 0) != kVersion) return error_message(id, "unsupported_version", "expected v=1");
  const std::string type = req.value("type", "");
  const VocabularyPtr& vocab = predictor_->vocabulary();
  json out;
  out["v"] = kVersion;
  out["type"] = type;
  out["id"] = id;
  if (type == "hello") {
    const double t = req.at("temperature").get<double>();
    if (t != temperature_) {
      return error_message(id, "temperature_mismatch",
                           "server runs at temperature " + std::to_string(temperature_));
    }
    out["type"] = "handshake";
    out["vocab_size"] = vocab->size();
    out["model_id"] = model_id_;
    out["temperature"] = temperature_;
    out["supports"] = {{"predict_topm", true}, {"score", static_cast<bool>(scorer_)}};
    out["tokens"] = vocab->tokens();
    out["separator"] = vocab->separator();
    out["eos"] = vocab->eos() ? json(vocab->eos()->value) : json(nullptr);
    return out;
  }
  if (type == "predict_topm") {
    const auto offset = req.at("offset").get<std::size_t>();
    const auto m = req.at("m").get<std::size_t>();
    if (m < 1) return error_message(id, "bad_request", "m must be >= 1");
    std::optional<Text> x;
    try {
      x = Text::parse(vocab, req.at("text").get<std::string>());
    } catch (const Error& e) {
      return error_message(id, "tokenization_failed", e.what());
    }
    const PagedPrediction page = page_of(tempered(*x), offset, m);
    json entries = json::array();
    for (const auto& [t, p] : page.entries) {
      entries.push_back({{"id", t.value}, {"token", vocab->token(t)}, {"p", p}});
    }
    out["offset"] = page.offset;
    out["entries"] = std::move(entries);
    out["remaining_mass"] = page.remaining_mass;
    return out;
  }
  if (type == "score") {
    if (!scorer_) return error_message(id, "unsupported", "no classifier loaded");
    const auto text = req.at("text").get<std::string>();
    if (text.empty()) return error_message(id, "bad_request", "score needs non-empty text");
    std::optional<Text> x;
    try {
      x = Text::parse(vocab, text);
    } catch (const Error& e) {
      return error_message(id, "tokenization_failed", e.what());
    }
    const ClassScores s = scorer_(*x);
    out["s_neg"] = s.s_neg;
    out["s_neu"] = s.s_neu;
    out["s_pos"] = s.s_pos;
    return out;
  }
  return error_message(id, "unknown_type", "unknown message type '" + type + "'");
}

std::string Server::handle(const std::string& request) {
  json req;
  try {
    req = json::parse(request);
  } catch (const json::exception& e) {
    return error_message(nullptr, "bad_request", e.what()).dump();
  }
  if (!req.is_object()) return error_message(nullptr, "bad_request", "not an object").dump();
  try {
    return dispatch(req).dump();
  } catch (const std::exception& e) {
    const json id = req.contains("id") ? req["id"] : json(nullptr);
    return error_message(id, "bad_request", e.what()).dump();
  }
}

Server::Scorer lexicon_scorer(std::shared_ptr<const LexiconLcf> lexicon) {
  return [lexicon](const Text& x) {
    const double v = lexicon->evaluate(x);
    const double logits[3] = {-4.0 * v, 0.0, 4.0 * v};
    const auto p = softmax_with_temperature(logits, {1.0, 0});
    return ClassScores{p.probs()[0], p.probs()[1], p.probs()[2]};
  };
}

void serve_stream(Server& server, int in_fd, int out_fd) {
  while (auto request = read_frame(in_fd)) write_frame(out_fd, server.handle(*request));
}

// ---------------------------------------------------------------------------
// Listener

TcpListener::TcpListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::kIo, "socket failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 8) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw Error(ErrorCode::kIo, "cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpListener::stop() { stopping_ = true; }

void TcpListener::serve(Server& server, std::size_t max_connections) {
  std::size_t served = 0;
  while (!stopping_ && (max_connections == 0 || served < max_connections)) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 50);
    if (ready <= 0) continue;
    const int conn = ::accept(fd_, nullptr, nullptr);
    if (conn < 0) continue;
    try {
      serve_stream(server, conn, conn);
    } catch (const Error&) {
      // Broken connection; keep listening.
    }
    ::close(conn);
    ++served;
  }
}

}  // namespace cbf::protocol
