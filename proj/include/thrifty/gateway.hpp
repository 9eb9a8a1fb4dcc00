#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "thrifty/supervisor.hpp"
#include "thrifty/wire.hpp"

namespace thrifty {

struct GatewayConfig {
  /// host:port; port 0 picks a free port.
  std::string address = wire::kDefaultAddress;
  env::EnvConfig env;
  int robot_count = 1;
  std::chrono::milliseconds heartbeat_interval{2000};
};

/// Socket service between the simulation tick thread and remote clients.
/// Clients speak newline-delimited JSON over TCP, or the same messages as
/// WebSocket text frames when the connection opens with an HTTP upgrade.
/// At most one client holds the supervisor role.
class Gateway : public SupervisorChannel {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway() override;
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and starts serving. Throws std::runtime_error when the address is
  /// invalid or in use.
  void start();
  void stop();
  int port() const { return port_; }

  bool wait_for_supervisor(std::chrono::milliseconds timeout);
  bool supervisor_connected() const;

  /// Broadcasts the state_update and event notices for the latest tick.
  void publish(const FleetState& fleet);
  void broadcast(const wire::Message& message);

  void request_action(int robot_id, long tick, const env::Position& state) override;
  env::Action await_action(int robot_id) override;

  /// Consumes a pending client takeover (intervention_request) or hand-back
  /// (cede_notice) for the robot.
  bool take_takeover(int robot_id);
  bool take_handback(int robot_id);
  /// Takeovers and hand-backs received but not yet consumed.
  std::size_t pending_client_requests() const;

 private:
  struct Session;

  void accept_loop();
  void heartbeat_loop();
  void serve_session(const std::shared_ptr<Session>& session);
  void handle(const std::shared_ptr<Session>& session, const wire::Message& message);
  void send(const std::shared_ptr<Session>& session, const wire::Message& message);
  void close_session(const std::shared_ptr<Session>& session);
  void drop_supervisor(const std::shared_ptr<Session>& session);

  GatewayConfig config_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<long> tick_{0};

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::shared_ptr<Session> supervisor_;
  std::set<int> awaiting_;
  std::set<int> takeovers_;
  std::set<int> handbacks_;
  ActionMailbox mailbox_;

  std::thread accept_thread_;
  std::thread heartbeat_thread_;
  std::vector<std::thread> session_threads_;
};

/// Human-gated switching where the remote client decides: a client
/// intervention_request takes over a robot, a cede_notice hands it back.
class RemoteGate : public Gate {
 public:
  explicit RemoteGate(Gateway& gateway) : gateway_(&gateway) {}
  std::optional<SwitchCause> intervene(const GateQuery& query) override;
  bool cede(const CedeQuery& query) override;
  std::unique_ptr<Gate> clone() const override { return std::make_unique<RemoteGate>(*this); }

 private:
  Gateway* gateway_;
};

namespace websocket {

/// Sec-WebSocket-Accept value for a client key.
std::string accept_key(const std::string& client_key);
/// Unmasked server frame.
std::string encode_frame(const std::string& payload, unsigned char opcode = 0x1);

}  // namespace websocket

}  // namespace thrifty
