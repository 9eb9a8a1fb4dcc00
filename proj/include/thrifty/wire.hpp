#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "thrifty/fleet.hpp"

namespace thrifty::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kDefaultAddress = "127.0.0.1:8765";
inline constexpr const char* kAddressEnvVar = "THRIFTY_GATEWAY_ADDR";

/// Violation of the message schema. The session that sent it is closed.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MessageType {
  hello,
  state_update,
  intervention_request,
  human_action,
  cede_notice,
  episode_end,
  heartbeat,
  error,
};

std::string_view to_string(MessageType t);
MessageType message_type_from_string(std::string_view name);

struct RobotSnapshot {
  int robot_id = 0;
  env::Position state;
  Mode mode = Mode::autonomous;
  int episode_step = 0;
  long idle_ticks = 0;
  std::optional<double> novelty;
  std::optional<double> risk;

  bool operator==(const RobotSnapshot&) const = default;
};

/// One protocol message. Only the fields of its type are meaningful.
struct Message {
  MessageType type = MessageType::heartbeat;
  long tick = 0;
  std::optional<int> robot_id;

  // hello
  int protocol_version = kProtocolVersion;
  std::string role;                    // "supervisor" or "observer"
  std::optional<nlohmann::json> arena;  // server hello only
  int robot_count = 0;                 // server hello only

  // state_update
  std::vector<RobotSnapshot> robots;
  std::vector<int> queue;
  std::optional<int> serving;

  // intervention_request
  env::Position state;
  std::optional<SwitchCause> cause;

  // human_action
  env::Action action;

  // episode_end
  bool success = false;

  // error
  std::string message;
};

/// Single-line JSON, without the trailing newline.
std::string encode(const Message& m);
/// Throws ProtocolError on malformed JSON or a schema violation. Unknown
/// fields are ignored.
Message decode(std::string_view line);

Message make_hello(std::string role);
Message make_server_hello(const env::EnvConfig& env, int robot_count);
Message make_heartbeat(long tick);
Message make_error(long tick, std::string text, std::optional<int> robot_id = std::nullopt);
Message make_human_action(int robot_id, long tick, const env::Action& action);
Message make_intervention_request(int robot_id, long tick, const env::Position& state,
                                  std::optional<SwitchCause> cause = std::nullopt);
Message make_cede_notice(int robot_id, long tick);
Message make_episode_end(int robot_id, long tick, bool success);

/// Snapshot of a fleet after a tick.
Message state_update(const FleetState& fleet);
/// cede_notice and episode_end messages for the most recent tick, in
/// occurrence order.
std::vector<Message> event_messages(const FleetState& fleet);

/// Resolves the bind address: explicit value, else the environment
/// variable, else the default.
std::string resolve_address(const std::optional<std::string>& explicit_addr);

}  // namespace thrifty::wire
