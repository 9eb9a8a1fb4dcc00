#pragma once

#include <string_view>
#include <vector>

#include "thrifty/env.hpp"

namespace thrifty {

enum class SourceMode { supervisor, autonomous };

std::string_view to_string(SourceMode m);
SourceMode source_mode_from_string(std::string_view name);

struct Transition {
  env::Position state;
  env::Action action;
  env::Position next_state;
  bool goal_flag = false;  // 1_G(state)
  SourceMode source = SourceMode::supervisor;

  bool operator==(const Transition&) const = default;
};

/// Builds a transition with the goal flag computed from `state`.
Transition make_transition(const env::EnvConfig& config, const env::Position& state,
                           const env::Action& action, const env::Position& next_state,
                           SourceMode source);

/// Absorbing record for a reached goal state: the state is its own successor
/// and the goal flag is set.
Transition goal_transition(const env::EnvConfig& config, const env::Position& goal_state,
                           const env::Action& action, SourceMode source);

struct Dataset {
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  void add(Transition t) { transitions.push_back(std::move(t)); }
  void append(const Dataset& other);
  std::size_t goal_count() const;

  bool operator==(const Dataset&) const = default;
};

}  // namespace thrifty
