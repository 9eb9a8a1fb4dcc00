#include "thrifty/dataset.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace thrifty {

std::string_view to_string(SourceMode m) {
  return m == SourceMode::supervisor ? "supervisor" : "autonomous";
}

SourceMode source_mode_from_string(std::string_view name) {
  if (name == "supervisor") return SourceMode::supervisor;
  if (name == "autonomous") return SourceMode::autonomous;
  throw std::invalid_argument("unknown source mode '" + std::string(name) + "'");
}

Transition make_transition(const env::EnvConfig& config, const env::Position& state,
                           const env::Action& action, const env::Position& next_state,
                           SourceMode source) {
  return Transition{state, action, next_state, env::goal_indicator(config, state), source};
}

Transition goal_transition(const env::EnvConfig& config, const env::Position& goal_state,
                           const env::Action& action, SourceMode source) {
  return make_transition(config, goal_state, action, goal_state, source);
}

void Dataset::append(const Dataset& other) {
  transitions.insert(transitions.end(), other.transitions.begin(), other.transitions.end());
}

std::size_t Dataset::goal_count() const {
  return static_cast<std::size_t>(std::count_if(
      transitions.begin(), transitions.end(), [](const Transition& t) { return t.goal_flag; }));
}

}  // namespace thrifty
