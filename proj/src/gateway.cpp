#include "thrifty/gateway.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <optional>
#include <stdexcept>

namespace thrifty {

namespace {

constexpr std::size_t kMaxMessageBytes = 1 << 20;
constexpr const char* kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::pair<std::string, std::string> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw std::runtime_error("gateway address must be host:port, got '" + address + "'");
  }
  return {address.substr(0, colon), address.substr(colon + 1)};
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Appends whatever the socket has; false on EOF or error.
bool read_some(int fd, std::string& buffer) {
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
    return true;
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Frame {
  bool fin = true;
  unsigned char opcode = 0;
  std::string payload;
};

// Pops one complete client frame off the front of `buffer`.
std::optional<Frame> pop_frame(std::string& buffer) {
  if (buffer.size() < 2) return std::nullopt;
  const auto b0 = static_cast<unsigned char>(buffer[0]);
  const auto b1 = static_cast<unsigned char>(buffer[1]);
  const bool masked = (b1 & 0x80) != 0;
  std::uint64_t length = b1 & 0x7f;
  std::size_t offset = 2;
  if (length == 126) {
    if (buffer.size() < 4) return std::nullopt;
    length = (static_cast<unsigned char>(buffer[2]) << 8) | static_cast<unsigned char>(buffer[3]);
    offset = 4;
  } else if (length == 127) {
    if (buffer.size() < 10) return std::nullopt;
    length = 0;
    for (int i = 0; i < 8; ++i) length = (length << 8) | static_cast<unsigned char>(buffer[2 + i]);
    offset = 10;
  }
  if (length > kMaxMessageBytes) throw wire::ProtocolError("websocket frame too large");
  if (!masked) throw wire::ProtocolError("client websocket frames must be masked");
  if (buffer.size() < offset + 4 + length) return std::nullopt;
  const std::string mask = buffer.substr(offset, 4);
  offset += 4;
  Frame f;
  f.fin = (b0 & 0x80) != 0;
  f.opcode = b0 & 0x0f;
  f.payload = buffer.substr(offset, length);
  for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] ^= mask[i % 4];
  buffer.erase(0, offset + length);
  return f;
}

}  // namespace

namespace websocket {

std::string accept_key(const std::string& client_key) {
  const std::string input = client_key + kWebSocketGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::string out(4 * ((len + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), digest,
                                static_cast<int>(len));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string encode_frame(const std::string& payload, unsigned char opcode) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | opcode));
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(126));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  }
  return out + payload;
}

}  // namespace websocket

struct Gateway::Session {
  int fd = -1;
  bool websocket = false;
  bool greeted = false;
  std::string role;
  std::atomic<bool> open{true};
  std::mutex write_mutex;

  // False once the socket is gone.
  bool write(const std::string& text) {
    std::lock_guard lock(write_mutex);
    if (fd < 0 || !open) return false;
    const std::string data = websocket ? websocket::encode_frame(text) : text + "\n";
    return send_all(fd, data);
  }

  void write_raw(const std::string& data) {
    std::lock_guard lock(write_mutex);
    if (fd >= 0) send_all(fd, data);
  }
};

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {
  if (config_.robot_count < 1) throw std::invalid_argument("gateway robot_count must be >= 1");
  if (config_.heartbeat_interval.count() <= 0) {
    throw std::invalid_argument("gateway heartbeat_interval must be positive");
  }
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  if (running_) return;
  const auto [host, port] = split_address(config_.address);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw std::runtime_error("cannot resolve gateway address '" + config_.address +
                             "': " + ::gai_strerror(rc));
  }
  const int fd = ::socket(found->ai_family, found->ai_socktype, found->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(found);
    throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  }
  const int yes = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  if (::bind(fd, found->ai_addr, found->ai_addrlen) != 0 || ::listen(fd, 8) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(found);
    ::close(fd);
    throw std::runtime_error("cannot listen on " + config_.address + ": " + why);
  }
  ::freeaddrinfo(found);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
}

void Gateway::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  cv_.notify_all();
  {
    std::lock_guard lock(mutex_);
    for (const auto& s : sessions_) {
      s->open = false;
      std::lock_guard wlock(s->write_mutex);
      if (s->fd >= 0) ::shutdown(s->fd, SHUT_RDWR);
    }
  }
  mailbox_.close();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(session_threads_);
  }
  for (auto& t : threads) t.join();
}

void Gateway::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    auto session = std::make_shared<Session>();
    session->fd = fd;
    std::lock_guard lock(mutex_);
    if (!running_) {
      ::close(fd);
      return;
    }
    sessions_.push_back(session);
    session_threads_.emplace_back([this, session] { serve_session(session); });
  }
}

void Gateway::heartbeat_loop() {
  std::unique_lock lock(mutex_);
  while (running_) {
    if (cv_.wait_for(lock, config_.heartbeat_interval, [this] { return !running_; })) return;
    const std::string line = wire::encode(wire::make_heartbeat(tick_));
    const auto sessions = sessions_;
    lock.unlock();
    for (const auto& s : sessions) {
      if (s->greeted) s->write(line);
    }
    lock.lock();
  }
}

void Gateway::serve_session(const std::shared_ptr<Session>& session) {
  std::string buffer;
  std::string fragments;
  bool alive = true;

  // Protocol sniffing: a WebSocket client opens with an HTTP GET.
  while (alive && buffer.size() < 4 && (buffer.empty() || buffer[0] == 'G')) {
    alive = read_some(session->fd, buffer);
  }
  if (alive && buffer.rfind("GET ", 0) == 0) {
    while (alive && buffer.find("\r\n\r\n") == std::string::npos && buffer.size() < 16384) {
      alive = read_some(session->fd, buffer);
    }
    const auto end = buffer.find("\r\n\r\n");
    std::string key;
    if (alive && end != std::string::npos) {
      std::size_t pos = buffer.find("\r\n") + 2;
      while (pos < end) {
        const auto eol = buffer.find("\r\n", pos);
        const std::string header = buffer.substr(pos, eol - pos);
        const auto colon = header.find(':');
        if (colon != std::string::npos &&
            lower(trim(header.substr(0, colon))) == "sec-websocket-key") {
          key = trim(header.substr(colon + 1));
        }
        pos = eol + 2;
      }
    }
    if (key.empty()) {
      session->write_raw("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      alive = false;
    } else {
      session->write_raw(
          "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
          "Sec-WebSocket-Accept: " + websocket::accept_key(key) + "\r\n\r\n");
      session->websocket = true;
      buffer.erase(0, end + 4);
    }
  }

  auto dispatch = [&](const std::string& text) {
    try {
      handle(session, wire::decode(text));
    } catch (const wire::ProtocolError& e) {
      send(session, wire::make_error(tick_, e.what()));
      close_session(session);
    }
  };

  while (alive && session->open) {
    try {
      if (session->websocket) {
        while (session->open) {
          auto frame = pop_frame(buffer);
          if (!frame) break;
          if (frame->opcode == 0x8) {
            session->write_raw(websocket::encode_frame("", 0x8));
            close_session(session);
          } else if (frame->opcode == 0x9) {
            session->write_raw(websocket::encode_frame(frame->payload, 0xA));
          } else if (frame->opcode == 0x1 || frame->opcode == 0x0) {
            fragments += frame->payload;
            if (fragments.size() > kMaxMessageBytes) throw wire::ProtocolError("message too large");
            if (frame->fin) {
              dispatch(fragments);
              fragments.clear();
            }
          } else if (frame->opcode != 0xA) {
            throw wire::ProtocolError("only text frames are accepted");
          }
        }
      } else {
        for (auto nl = buffer.find('\n'); nl != std::string::npos && session->open;
             nl = buffer.find('\n')) {
          std::string line = buffer.substr(0, nl);
          buffer.erase(0, nl + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (trim(line).empty()) continue;
          dispatch(line);
        }
        if (buffer.size() > kMaxMessageBytes) throw wire::ProtocolError("message too large");
      }
    } catch (const wire::ProtocolError& e) {
      send(session, wire::make_error(tick_, e.what()));
      close_session(session);
    }
    if (!session->open) break;
    alive = read_some(session->fd, buffer);
  }

  close_session(session);
  {
    std::lock_guard lock(mutex_);
    std::erase(sessions_, session);
  }
  std::lock_guard wlock(session->write_mutex);
  ::close(session->fd);
  session->fd = -1;
}

void Gateway::handle(const std::shared_ptr<Session>& session, const wire::Message& m) {
  using wire::MessageType;
  if (!session->greeted) {
    if (m.type != MessageType::hello) throw wire::ProtocolError("first message must be hello");
    if (m.protocol_version != wire::kProtocolVersion) {
      throw wire::ProtocolError("unsupported protocol_version " + std::to_string(m.protocol_version) +
                                " (server speaks " + std::to_string(wire::kProtocolVersion) + ")");
    }
    const std::string role = m.role.empty() ? "observer" : m.role;
    if (role != "supervisor" && role != "observer") {
      throw wire::ProtocolError("unknown role '" + m.role + "'");
    }
    if (role == "supervisor") {
      std::lock_guard lock(mutex_);
      if (supervisor_) throw wire::ProtocolError("the supervisor role is already taken");
      supervisor_ = session;
      mailbox_.reopen();
    }
    session->role = role;
    session->greeted = true;
    send(session, wire::make_server_hello(config_.env, config_.robot_count));
    cv_.notify_all();
    return;
  }

  const bool is_supervisor = session->role == "supervisor";
  const auto reject = [&](const std::string& text) {
    send(session, wire::make_error(tick_, text, m.robot_id));
  };
  switch (m.type) {
    case MessageType::hello:
      throw wire::ProtocolError("duplicate hello");
    case MessageType::state_update:
    case MessageType::episode_end:
      throw wire::ProtocolError("clients may not send " + std::string(wire::to_string(m.type)));
    case MessageType::heartbeat:
    case MessageType::error:
      return;
    case MessageType::human_action:
    case MessageType::intervention_request:
    case MessageType::cede_notice:
      break;
  }
  const int robot = *m.robot_id;
  if (!is_supervisor) return reject("only the supervisor may send " + std::string(wire::to_string(m.type)));
  if (robot >= config_.robot_count) return reject("unknown robot " + std::to_string(robot));

  bool accepted = true;
  {
    std::lock_guard lock(mutex_);
    if (m.type == MessageType::human_action) {
      accepted = awaiting_.count(robot) > 0;
      if (accepted) mailbox_.post(robot, m.action);
    } else if (m.type == MessageType::intervention_request) {
      takeovers_.insert(robot);
    } else {
      handbacks_.insert(robot);
    }
  }
  if (!accepted) reject("robot " + std::to_string(robot) + " is not awaiting a supervisor action");
}

void Gateway::send(const std::shared_ptr<Session>& session, const wire::Message& message) {
  if (!session->write(wire::encode(message))) close_session(session);
}

void Gateway::broadcast(const wire::Message& message) {
  const std::string line = wire::encode(message);
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions = sessions_;
  }
  for (const auto& s : sessions) {
    if (s->greeted && !s->write(line)) close_session(s);
  }
}

void Gateway::close_session(const std::shared_ptr<Session>& session) {
  session->open = false;
  {
    std::lock_guard wlock(session->write_mutex);
    if (session->fd >= 0) ::shutdown(session->fd, SHUT_RDWR);
  }
  drop_supervisor(session);
}

void Gateway::drop_supervisor(const std::shared_ptr<Session>& session) {
  std::lock_guard lock(mutex_);
  if (supervisor_ != session) return;
  supervisor_.reset();
  awaiting_.clear();
  takeovers_.clear();
  handbacks_.clear();
  mailbox_.close();
}

bool Gateway::wait_for_supervisor(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [this] { return supervisor_ && supervisor_->greeted; });
}

bool Gateway::supervisor_connected() const {
  std::lock_guard lock(mutex_);
  return supervisor_ != nullptr;
}

void Gateway::publish(const FleetState& fleet) {
  tick_ = fleet.tick;
  broadcast(wire::state_update(fleet));
  for (const auto& m : wire::event_messages(fleet)) broadcast(m);
}

void Gateway::request_action(int robot_id, long tick, const env::Position& state) {
  {
    std::lock_guard lock(mutex_);
    if (!supervisor_) throw SupervisorUnavailable("no supervisor connected");
    awaiting_.insert(robot_id);
  }
  broadcast(wire::make_intervention_request(robot_id, tick, state));
}

env::Action Gateway::await_action(int robot_id) {
  const env::Action a = mailbox_.take(robot_id);
  std::lock_guard lock(mutex_);
  awaiting_.erase(robot_id);
  return a;
}

bool Gateway::take_takeover(int robot_id) {
  std::lock_guard lock(mutex_);
  return takeovers_.erase(robot_id) > 0;
}

bool Gateway::take_handback(int robot_id) {
  std::lock_guard lock(mutex_);
  return handbacks_.erase(robot_id) > 0;
}

std::size_t Gateway::pending_client_requests() const {
  std::lock_guard lock(mutex_);
  return takeovers_.size() + handbacks_.size();
}

std::optional<SwitchCause> RemoteGate::intervene(const GateQuery& query) {
  if (gateway_->take_takeover(query.robot_id)) return SwitchCause::external;
  return std::nullopt;
}

bool RemoteGate::cede(const CedeQuery& query) { return gateway_->take_handback(query.robot_id); }

}  // namespace thrifty
