// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Newline-delimited JSON protocol that lets an external consecutive model
// answer decode-step requests. Requests are stateless: each one carries the
// full source and target prefixes and the server rebuilds all states.
//
//   hello            server -> client, first message on every connection
//   decode_request   {"type","id","src":[str],"tgt_prefix":[str]}
//   decode_response  {"type","id","next_token","eos","eos_prob","hidden_state":[float]}
//   error            {"type","id","message"}
//
// The source-side EOS is the server's business; clients send raw prefixes.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "simulseq/core.hpp"
#include "simulseq/model.hpp"
#include "simulseq/toy_model.hpp"

extern char** environ;

namespace simulseq {

inline constexpr int kProtocolVersion = 1;

namespace detail {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

inline bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

/// Buffered line reader over a file descriptor.
class LineReader {
 public:
  enum class Status { kLine, kTimeout, kClosed };

  explicit LineReader(int fd = -1) : fd_(fd) {}

  /// timeout_ms < 0 blocks indefinitely.
  Status read_line(std::string& line, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(std::max(timeout_ms, 0));
    for (;;) {
      if (auto pos = buf_.find('\n'); pos != std::string::npos) {
        line.assign(buf_, 0, pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        buf_.erase(0, pos + 1);
        return Status::kLine;
      }
      if (closed_) {
        if (buf_.empty()) return Status::kClosed;
        line = std::move(buf_);
        buf_.clear();
        return Status::kLine;
      }
      int wait = -1;
      if (timeout_ms >= 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return Status::kTimeout;
        wait = static_cast<int>(left.count());
      }
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, wait);
      if (r < 0) {
        if (errno == EINTR) continue;
        closed_ = true;
        continue;
      }
      if (r == 0) return Status::kTimeout;
      char chunk[4096];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        closed_ = true;
        continue;
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
  bool closed_ = false;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Transports

struct ChildProcessTransport {
  std::vector<std::string> argv;  // argv[0] is looked up on PATH
};

struct TcpTransport {
  std::string host = "127.0.0.1";
  int port = 0;
};

struct BridgeConfig {
  std::variant<ChildProcessTransport, TcpTransport> transport;
  int timeout_ms = 10000;
  int protocol_version = kProtocolVersion;

  void validate() const {
    if (timeout_ms <= 0) throw ConfigError("bridge timeout must be positive");
  }
};

/// Bidirectional line channel to a server.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send_line(const std::string& line) = 0;
  virtual detail::LineReader::Status read_line(std::string& line, int timeout_ms) = 0;
};

class ChildProcessChannel final : public Channel {
 public:
  explicit ChildProcessChannel(const ChildProcessTransport& t) {
    if (t.argv.empty()) throw ConfigError("child-process transport needs a command");
    detail::ignore_sigpipe();
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw ConnectionError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ConnectionError("pipe failed");
    }
    detail::UniqueFd child_in(to_child[0]), child_out(from_child[1]);
    write_fd_ = detail::UniqueFd(to_child[1]);
    read_fd_ = detail::UniqueFd(from_child[0]);
    ::fcntl(write_fd_.get(), F_SETFD, FD_CLOEXEC);
    ::fcntl(read_fd_.get(), F_SETFD, FD_CLOEXEC);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, child_in.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, child_out.get(), STDOUT_FILENO);
    std::vector<char*> args;
    for (const auto& a : t.argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw ConnectionError("cannot start '" + t.argv[0] + "': " + std::strerror(rc));
    reader_ = detail::LineReader(read_fd_.get());
  }

  ~ChildProcessChannel() override {
    write_fd_.reset();
    read_fd_.reset();
    if (pid_ <= 0) return;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }

  void send_line(const std::string& line) override {
    if (!detail::write_all(write_fd_.get(), line + "\n")) throw ConnectionError("server closed its input");
  }
  detail::LineReader::Status read_line(std::string& line, int timeout_ms) override {
    return reader_.read_line(line, timeout_ms);
  }

 private:
  pid_t pid_ = -1;
  detail::UniqueFd write_fd_, read_fd_;
  detail::LineReader reader_;
};

class TcpChannel final : public Channel {
 public:
  TcpChannel(const TcpTransport& t, int timeout_ms) {
    detail::ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(t.port);
    if (::getaddrinfo(t.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr)
      throw ConnectionError("cannot resolve " + t.host);
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    std::string last_error = "no address";
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
      detail::UniqueFd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
      if (!fd) continue;
      const int flags = ::fcntl(fd.get(), F_GETFL);
      ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
      int rc = ::connect(fd.get(), ai->ai_addr, ai->ai_addrlen);
      if (rc != 0 && errno == EINPROGRESS) {
        pollfd p{fd.get(), POLLOUT, 0};
        rc = ::poll(&p, 1, timeout_ms);
        if (rc == 0) {
          last_error = "connect timed out";
          continue;
        }
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      }
      if (rc != 0) {
        last_error = std::strerror(errno);
        continue;
      }
      ::fcntl(fd.get(), F_SETFL, flags);
      fd_ = std::move(fd);
      break;
    }
    if (!fd_) throw ConnectionError("cannot connect to " + t.host + ":" + port + ": " + last_error);
    reader_ = detail::LineReader(fd_.get());
  }

  void send_line(const std::string& line) override {
    const std::string owned = line + "\n";
    std::string_view rest(owned);
    while (!rest.empty()) {
      const ssize_t n = ::send(fd_.get(), rest.data(), rest.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionError("connection closed by server");
      }
      rest.remove_prefix(static_cast<std::size_t>(n));
    }
  }
  detail::LineReader::Status read_line(std::string& line, int timeout_ms) override {
    return reader_.read_line(line, timeout_ms);
  }

 private:
  detail::UniqueFd fd_;
  detail::LineReader reader_;
};

// ---------------------------------------------------------------------------
// Session

struct ModelDescriptor {
  std::string name;
  std::size_t hidden_dim = 0;
  int protocol_version = 0;
};

struct RemoteStep {
  std::string next_token;
  bool eos = false;
  double eos_prob = 0.0;
  std::vector<double> hidden_state;
};

/// One ordered request/response stream. Requests are never retried; after a
/// timeout or protocol violation the session refuses further requests.
class Session {
 public:
  /// Connects and performs the hello exchange.
  static std::unique_ptr<Session> open(const BridgeConfig& config) {
    config.validate();
    std::unique_ptr<Channel> ch;
    if (const auto* cp = std::get_if<ChildProcessTransport>(&config.transport))
      ch = std::make_unique<ChildProcessChannel>(*cp);
    else
      ch = std::make_unique<TcpChannel>(std::get<TcpTransport>(config.transport), config.timeout_ms);
    auto s = std::unique_ptr<Session>(new Session(std::move(ch), config));
    s->handshake();
    return s;
  }

  const ModelDescriptor& descriptor() const noexcept { return descriptor_; }

  RemoteStep decode(const std::vector<std::string>& src, const std::vector<std::string>& tgt_prefix) {
    json req;
    req["type"] = "decode_request";
    const auto id = next_id_++;
    req["id"] = id;
    req["src"] = src;
    req["tgt_prefix"] = tgt_prefix;
    send_raw(req.dump());
    const std::string raw = read_raw();
    return parse_response(raw, id);
  }

  /// Low-level access for conformance checks.
  void send_raw(const std::string& line) {
    if (broken_) throw ConnectionError("session is closed after an earlier failure");
    try {
      channel_->send_line(line);
    } catch (...) {
      broken_ = true;
      throw;
    }
  }

  std::string read_raw() {
    if (broken_) throw ConnectionError("session is closed after an earlier failure");
    std::string line;
    switch (channel_->read_line(line, config_.timeout_ms)) {
      case detail::LineReader::Status::kLine: return line;
      case detail::LineReader::Status::kTimeout:
        broken_ = true;
        throw ConnectionError("timed out after " + std::to_string(config_.timeout_ms) + " ms");
      case detail::LineReader::Status::kClosed: break;
    }
    broken_ = true;
    throw ConnectionError("server closed the connection");
  }

  std::int64_t next_id() const noexcept { return next_id_; }

 private:
  Session(std::unique_ptr<Channel> ch, BridgeConfig config) : channel_(std::move(ch)), config_(std::move(config)) {}

  [[noreturn]] void fail(const std::string& what, const std::string& raw) {
    broken_ = true;
    throw ProtocolError(what, raw);
  }

  void handshake() {
    const std::string raw = read_raw();
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error&) {
      fail("hello is not valid JSON", raw);
    }
    try {
      if (j.at("type").get<std::string>() != "hello") fail("first message is not hello", raw);
      descriptor_.protocol_version = j.at("protocol_version").get<int>();
      descriptor_.name = j.at("model_name").get<std::string>();
      const auto dim = j.at("hidden_dim").get<std::int64_t>();
      if (dim <= 0) fail("hello declares non-positive hidden_dim", raw);
      descriptor_.hidden_dim = static_cast<std::size_t>(dim);
    } catch (const json::exception& e) {
      fail(std::string("malformed hello: ") + e.what(), raw);
    }
    if (descriptor_.protocol_version != config_.protocol_version)
      fail("server speaks protocol " + std::to_string(descriptor_.protocol_version) + ", expected " +
               std::to_string(config_.protocol_version),
           raw);
  }

  RemoteStep parse_response(const std::string& raw, std::int64_t id) {
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error&) {
      fail("response is not valid JSON", raw);
    }
    RemoteStep step;
    std::string type;
    try {
      type = j.at("type").get<std::string>();
      if (j.at("id").get<std::int64_t>() != id) fail("response id does not match request " + std::to_string(id), raw);
      if (type == "error") throw PreconditionError("server rejected request: " + j.at("message").get<std::string>());
      if (type != "decode_response") fail("unexpected message type '" + type + "'", raw);
      step.next_token = j.at("next_token").get<std::string>();
      step.eos = j.at("eos").get<bool>();
      step.eos_prob = j.at("eos_prob").get<double>();
      step.hidden_state = j.at("hidden_state").get<std::vector<double>>();
    } catch (const json::exception& e) {
      fail(std::string("malformed response: ") + e.what(), raw);
    }
    if (step.hidden_state.size() != descriptor_.hidden_dim)
      fail("hidden_state has " + std::to_string(step.hidden_state.size()) + " entries, hello declared " +
               std::to_string(descriptor_.hidden_dim),
           raw);
    if (!(step.eos_prob >= 0.0 && step.eos_prob <= 1.0)) fail("eos_prob outside [0, 1]", raw);
    return step;
  }

  std::unique_ptr<Channel> channel_;
  BridgeConfig config_;
  ModelDescriptor descriptor_;
  std::int64_t next_id_ = 1;
  bool broken_ = false;
};

/// A remote consecutive model behind the TranslationModel interface. Only the
/// rebuild-all strategy is available because the protocol is stateless.
class RemoteModel {
 public:
  RemoteModel(std::shared_ptr<Session> session, Vocab vocab, std::size_t cap = kDefaultLengthCap)
      : session_(std::move(session)), vocab_(std::move(vocab)), cap_(cap) {}

  const Vocab& vocab() const noexcept { return vocab_; }
  std::size_t hidden_dim() const noexcept { return session_->descriptor().hidden_dim; }
  Session& session() const noexcept { return *session_; }

  void prepare_states(ModelState& state, std::span<const TokenId> source_prefix,
                      std::span<const TokenId> target_prefix) const {
    if (state.strategy != StateStrategy::kRebuildAll)
      throw ConfigError("remote models only support the rebuild-all strategy");
    state.source_prefix.assign(source_prefix.begin(), source_prefix.end());
    // The server recomputes every state per request, so none are cached here.
    state.encoder_states.clear();
    state.decoder_states.clear();
    (void)target_prefix;
  }

  DecodeStepResult decode_step(const ModelState& state, std::span<const TokenId> target_prefix) const {
    if (target_prefix.size() >= cap_) throw CapError("target prefix already at the length cap");
    return request(state.source_prefix, target_prefix);
  }

  void append_committed(ModelState&, const DecodeStepResult&) const {}

  /// Stateless single step: the server rebuilds everything from both prefixes.
  DecodeStepResult request(std::span<const TokenId> source_prefix, std::span<const TokenId> target_prefix) const {
    auto remote = session_->decode(vocab_.decode(source_prefix), vocab_.decode(target_prefix));
    DecodeStepResult r;
    r.is_eos = remote.eos;
    if (remote.eos) {
      r.next_token = vocab_.eos_id();
    } else {
      if (!vocab_.contains(remote.next_token) || remote.next_token == kEosToken)
        throw ProtocolError("server returned token '" + remote.next_token + "' unknown to the client vocabulary",
                            remote.next_token);
      r.next_token = vocab_.id_of(remote.next_token);
    }
    r.eos_prob = remote.eos_prob;
    r.hidden_state = std::move(remote.hidden_state);
    return r;
  }

 private:
  std::shared_ptr<Session> session_;
  Vocab vocab_;
  std::size_t cap_;
};

// ---------------------------------------------------------------------------
// Reference stub server wrapping the toy model

inline json hello_message(const std::string& name, std::size_t hidden_dim) {
  json j;
  j["type"] = "hello";
  j["protocol_version"] = kProtocolVersion;
  j["model_name"] = name;
  j["hidden_dim"] = hidden_dim;
  return j;
}

inline json error_message(std::int64_t id, const std::string& message) {
  json j;
  j["type"] = "error";
  j["id"] = id;
  j["message"] = message;
  return j;
}

/// Answers one request line. Malformed input yields an error message (id -1
/// when the id itself cannot be read); the session always continues.
inline json handle_request(const ToyModel& model, const std::string& line) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_message(-1, std::string("malformed JSON: ") + e.what());
  }
  std::int64_t id = -1;
  try {
    if (!req.is_object() || !req.contains("id") || !req.at("id").is_number_integer())
      return error_message(-1, "request without integer id");
    id = req.at("id").get<std::int64_t>();
    if (req.value("type", std::string()) != "decode_request") return error_message(id, "unsupported message type");
    const auto src_words = req.at("src").get<std::vector<std::string>>();
    const auto tgt_words = req.at("tgt_prefix").get<std::vector<std::string>>();
    if (src_words.empty()) return error_message(id, "empty source prefix");
    const auto& vocab = model.vocab();
    const Sentence src = vocab.encode(src_words);
    const Sentence tgt = vocab.encode(tgt_words);
    ModelState state;
    model.prepare_states(state, src, tgt);
    const auto step = model.decode_step(state, tgt);
    json resp;
    resp["type"] = "decode_response";
    resp["id"] = id;
    resp["next_token"] = vocab.token_of(step.next_token);
    resp["eos"] = step.is_eos;
    resp["eos_prob"] = step.eos_prob;
    resp["hidden_state"] = step.hidden_state;
    return resp;
  } catch (const json::exception& e) {
    return error_message(id, std::string("malformed request: ") + e.what());
  } catch (const Error& e) {
    return error_message(id, e.what());
  }
}

inline std::string model_name(const ToyModel& model) {
  return std::string("toy-") + to_string(model.spec().kind);
}

/// Serves one connection until end of stream.
inline void serve_stream(const ToyModel& model, int in_fd, int out_fd) {
  detail::ignore_sigpipe();
  if (!detail::write_all(out_fd, hello_message(model_name(model), model.hidden_dim()).dump() + "\n")) return;
  detail::LineReader reader(in_fd);
  std::string line;
  while (reader.read_line(line, -1) == detail::LineReader::Status::kLine) {
    if (line.empty()) continue;
    if (!detail::write_all(out_fd, handle_request(model, line).dump() + "\n")) return;
  }
}

/// Listens on 127.0.0.1:port (0 picks a free port) and serves connections one
/// at a time. `on_ready` receives the bound port. Returns after
/// `max_connections` connections (0 = forever) or when `stop` becomes true.
inline void serve_tcp(const ToyModel& model, int port, const std::function<void(int)>& on_ready,
                      std::size_t max_connections = 0, const std::atomic<bool>* stop = nullptr) {
  detail::ignore_sigpipe();
  detail::UniqueFd listener(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!listener) throw ConnectionError("socket failed");
  int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw ConnectionError(std::string("bind failed: ") + std::strerror(errno));
  if (::listen(listener.get(), 4) != 0) throw ConnectionError("listen failed");
  socklen_t len = sizeof addr;
  ::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_ready) on_ready(ntohs(addr.sin_port));
  for (std::size_t served = 0; max_connections == 0 || served < max_connections;) {
    pollfd p{listener.get(), POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (stop && stop->load()) return;
    if (r <= 0) continue;
    detail::UniqueFd conn(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!conn) continue;
    serve_stream(model, conn.get(), conn.get());
    ++served;
  }
}

}  // namespace simulseq
