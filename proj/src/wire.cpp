#include "thrifty/wire.hpp"

#include <cmath>
#include <cstdlib>

#include "thrifty/config.hpp"

namespace thrifty::wire {

using nlohmann::json;

namespace {

constexpr MessageType kAllTypes[] = {
    MessageType::hello,       MessageType::state_update, MessageType::intervention_request,
    MessageType::human_action, MessageType::cede_notice, MessageType::episode_end,
    MessageType::heartbeat,   MessageType::error,
};

json pair_json(double a, double b) { return json::array({a, b}); }

std::pair<double, double> read_pair(const json& j, const char* key) {
  if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ProtocolError(std::string("field '") + key + "' must be [number, number]");
  }
  const double a = v[0].get<double>();
  const double b = v[1].get<double>();
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw ProtocolError(std::string("field '") + key + "' must be finite");
  }
  return {a, b};
}

template <typename T>
T read_required(const json& j, const char* key) {
  if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + key + "' has the wrong type");
  }
}

int read_robot_id(const json& j) {
  const json& v = j.contains("robot_id") ? j.at("robot_id") : json();
  if (!v.is_number_integer() || v.get<long>() < 0) {
    throw ProtocolError("field 'robot_id' must be a non-negative integer");
  }
  return v.get<int>();
}

std::optional<double> optional_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

}  // namespace

std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::hello: return "hello";
    case MessageType::state_update: return "state_update";
    case MessageType::intervention_request: return "intervention_request";
    case MessageType::human_action: return "human_action";
    case MessageType::cede_notice: return "cede_notice";
    case MessageType::episode_end: return "episode_end";
    case MessageType::heartbeat: return "heartbeat";
    case MessageType::error: return "error";
  }
  return "error";
}

MessageType message_type_from_string(std::string_view name) {
  for (MessageType t : kAllTypes) {
    if (to_string(t) == name) return t;
  }
  throw ProtocolError("unknown message type '" + std::string(name) + "'");
}

std::string encode(const Message& m) {
  json j;
  j["type"] = to_string(m.type);
  j["tick"] = m.tick;
  if (m.robot_id) j["robot_id"] = *m.robot_id;
  switch (m.type) {
    case MessageType::hello:
      j["protocol_version"] = m.protocol_version;
      j["role"] = m.role;
      if (m.arena) j["arena"] = *m.arena;
      if (m.robot_count > 0) j["robot_count"] = m.robot_count;
      break;
    case MessageType::state_update: {
      json robots = json::array();
      for (const auto& r : m.robots) {
        robots.push_back({{"robot_id", r.robot_id},
                          {"state", pair_json(r.state.x, r.state.y)},
                          {"mode", to_string(r.mode)},
                          {"episode_step", r.episode_step},
                          {"idle_ticks", r.idle_ticks},
                          {"novelty", optional_json(r.novelty)},
                          {"risk", optional_json(r.risk)}});
      }
      j["robots"] = std::move(robots);
      j["queue"] = m.queue;
      j["serving"] = m.serving ? json(*m.serving) : json();
      break;
    }
    case MessageType::intervention_request:
      j["state"] = pair_json(m.state.x, m.state.y);
      if (m.cause) j["cause"] = to_string(*m.cause);
      break;
    case MessageType::human_action:
      j["action"] = pair_json(m.action.dx, m.action.dy);
      break;
    case MessageType::episode_end:
      j["success"] = m.success;
      break;
    case MessageType::error:
      j["message"] = m.message;
      break;
    case MessageType::cede_notice:
    case MessageType::heartbeat:
      break;
  }
  return j.dump();
}

Message decode(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  Message m;
  m.type = message_type_from_string(read_required<std::string>(j, "type"));
  if (!j.contains("tick") || !j.at("tick").is_number_integer()) {
    throw ProtocolError("field 'tick' must be an integer");
  }
  m.tick = j.at("tick").get<long>();
  switch (m.type) {
    case MessageType::hello:
      if (!j.contains("protocol_version") || !j.at("protocol_version").is_number_integer()) {
        throw ProtocolError("hello requires an integer protocol_version");
      }
      m.protocol_version = j.at("protocol_version").get<int>();
      m.role = j.value("role", std::string{});
      if (j.contains("arena")) m.arena = j.at("arena");
      m.robot_count = j.value("robot_count", 0);
      break;
    case MessageType::state_update:
      for (const auto& r : read_required<json>(j, "robots")) {
        RobotSnapshot s;
        s.robot_id = read_robot_id(r);
        const auto [x, y] = read_pair(r, "state");
        s.state = {x, y};
        try {
          s.mode = mode_from_string(read_required<std::string>(r, "mode"));
        } catch (const std::invalid_argument& e) {
          throw ProtocolError(e.what());
        }
        s.episode_step = r.value("episode_step", 0);
        s.idle_ticks = r.value("idle_ticks", 0L);
        s.novelty = optional_number(r, "novelty");
        s.risk = optional_number(r, "risk");
        m.robots.push_back(s);
      }
      m.queue = read_required<std::vector<int>>(j, "queue");
      if (j.contains("serving") && !j.at("serving").is_null()) m.serving = read_robot_id({{"robot_id", j.at("serving")}});
      break;
    case MessageType::intervention_request: {
      m.robot_id = read_robot_id(j);
      if (j.contains("state")) {
        const auto [x, y] = read_pair(j, "state");
        m.state = {x, y};
      }
      if (j.contains("cause")) {
        try {
          m.cause = switch_cause_from_string(read_required<std::string>(j, "cause"));
        } catch (const std::invalid_argument& e) {
          throw ProtocolError(e.what());
        }
      }
      break;
    }
    case MessageType::human_action: {
      m.robot_id = read_robot_id(j);
      const auto [dx, dy] = read_pair(j, "action");
      m.action = {dx, dy};
      break;
    }
    case MessageType::cede_notice:
      m.robot_id = read_robot_id(j);
      break;
    case MessageType::episode_end:
      m.robot_id = read_robot_id(j);
      m.success = read_required<bool>(j, "success");
      break;
    case MessageType::error:
      m.message = read_required<std::string>(j, "message");
      if (j.contains("robot_id")) m.robot_id = read_robot_id(j);
      break;
    case MessageType::heartbeat:
      break;
  }
  return m;
}

Message make_hello(std::string role) {
  Message m;
  m.type = MessageType::hello;
  m.role = std::move(role);
  return m;
}

Message make_server_hello(const env::EnvConfig& env, int robot_count) {
  Message m = make_hello("server");
  m.arena = json(env_to_json(env));
  m.robot_count = robot_count;
  return m;
}

Message make_heartbeat(long tick) {
  Message m;
  m.type = MessageType::heartbeat;
  m.tick = tick;
  return m;
}

Message make_error(long tick, std::string text, std::optional<int> robot_id) {
  Message m;
  m.type = MessageType::error;
  m.tick = tick;
  m.message = std::move(text);
  m.robot_id = robot_id;
  return m;
}

Message make_human_action(int robot_id, long tick, const env::Action& action) {
  Message m;
  m.type = MessageType::human_action;
  m.robot_id = robot_id;
  m.tick = tick;
  m.action = action;
  return m;
}

Message make_intervention_request(int robot_id, long tick, const env::Position& state,
                                  std::optional<SwitchCause> cause) {
  Message m;
  m.type = MessageType::intervention_request;
  m.robot_id = robot_id;
  m.tick = tick;
  m.state = state;
  m.cause = cause;
  return m;
}

Message make_cede_notice(int robot_id, long tick) {
  Message m;
  m.type = MessageType::cede_notice;
  m.robot_id = robot_id;
  m.tick = tick;
  return m;
}

Message make_episode_end(int robot_id, long tick, bool success) {
  Message m;
  m.type = MessageType::episode_end;
  m.robot_id = robot_id;
  m.tick = tick;
  m.success = success;
  return m;
}

Message state_update(const FleetState& fleet) {
  Message m;
  m.type = MessageType::state_update;
  m.tick = fleet.tick;
  for (const auto& r : fleet.robots) {
    m.robots.push_back({r.id, r.state, r.mode, r.episode_step, r.idle_ticks, r.scores.novelty,
                        r.scores.risk});
  }
  m.queue.assign(fleet.queue.begin(), fleet.queue.end());
  m.serving = fleet.serving;
  return m;
}

std::vector<Message> event_messages(const FleetState& fleet) {
  std::vector<Message> out;
  for (const auto& e : fleet.events) {
    switch (e.kind) {
      case FleetEventKind::cede:
        out.push_back(make_cede_notice(e.robot_id, fleet.tick));
        break;
      case FleetEventKind::episode_end:
        out.push_back(make_episode_end(e.robot_id, fleet.tick, e.success));
        break;
      // Requests reach the client when service starts (see the gateway);
      // the queue itself travels in every state_update.
      case FleetEventKind::intervention_request:
      case FleetEventKind::service_start:
      case FleetEventKind::supervisor_lost:
        break;
    }
  }
  return out;
}

std::string resolve_address(const std::optional<std::string>& explicit_addr) {
  if (explicit_addr && !explicit_addr->empty()) return *explicit_addr;
  if (const char* v = std::getenv(kAddressEnvVar); v && *v) return v;
  return kDefaultAddress;
}

}  // namespace thrifty::wire
