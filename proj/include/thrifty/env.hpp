#pragma once

#include <functional>

#include "thrifty/rng.hpp"

namespace thrifty::env {

struct Position {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Position&) const = default;
};

struct Action {
  double dx = 0.0;
  double dy = 0.0;
  bool operator==(const Action&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Unit-square arena split by a vertical wall with a single gap. The goal
/// disc sits on the far side of the wall from the start region.
struct EnvConfig {
  Interval wall_x{0.49, 0.51};
  Interval gap_y{0.45, 0.55};
  Position goal_center{0.9, 0.5};
  double goal_radius = 0.05;
  double action_max = 0.05;
  double process_noise_std = 0.005;
  int horizon = 100;
  Interval start_x{0.05, 0.2};
  Interval start_y{0.1, 0.9};

  /// Throws std::invalid_argument when the geometry is inconsistent.
  void validate() const;
};

struct StepResult {
  Position next_state;
  bool reached_goal = false;
};

Position reset(const EnvConfig& config, Rng& rng);

/// Clips the action, adds process noise, keeps the result inside the arena
/// and resolves wall contact by clamping x to the face the robot came from.
/// Throws std::invalid_argument on non-finite action components.
StepResult step(const EnvConfig& config, const Position& state, const Action& action,
                Rng& rng);

/// Boundary inclusive.
bool goal_indicator(const EnvConfig& config, const Position& state);

Action clip_action(const EnvConfig& config, const Action& action);

bool in_arena(const Position& p);

/// Any state-feedback controller: the ensemble, the oracle, test doubles.
using PolicyFn = std::function<Action(const Position&)>;

}  // namespace thrifty::env
