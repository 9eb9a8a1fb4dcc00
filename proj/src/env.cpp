#include "thrifty/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace thrifty::env {

namespace {

double uniform_in(const Interval& iv, Rng& rng) {
  if (iv.hi <= iv.lo) return iv.lo;
  std::uniform_real_distribution<double> dist(iv.lo, iv.hi);
  return dist(rng);
}

}  // namespace

void EnvConfig::validate() const {
  auto inside_unit = [](const Interval& iv) {
    return iv.lo >= 0.0 && iv.hi <= 1.0 && iv.lo <= iv.hi;
  };
  if (!inside_unit(wall_x) || !inside_unit(start_x) || !inside_unit(start_y)) {
    throw std::invalid_argument("env: intervals must lie inside the unit square");
  }
  if (!(gap_y.lo > 0.0 && gap_y.hi < 1.0 && gap_y.lo < gap_y.hi)) {
    throw std::invalid_argument("env: gap must lie strictly inside the arena");
  }
  if (goal_radius <= 0.0 || action_max <= 0.0 || process_noise_std < 0.0) {
    throw std::invalid_argument("env: radius and action bound must be positive");
  }
  if (horizon < 1) throw std::invalid_argument("env: horizon must be at least 1");
  const double left = goal_center.x - goal_radius;
  const double right = goal_center.x + goal_radius;
  if (!(right < wall_x.lo || left > wall_x.hi)) {
    throw std::invalid_argument("env: goal disc overlaps the wall band");
  }
}

bool in_arena(const Position& p) {
  return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
}

Position reset(const EnvConfig& config, Rng& rng) {
  Position p;
  p.x = uniform_in(config.start_x, rng);
  p.y = uniform_in(config.start_y, rng);
  return p;
}

Action clip_action(const EnvConfig& config, const Action& action) {
  const double m = config.action_max;
  return Action{std::clamp(action.dx, -m, m), std::clamp(action.dy, -m, m)};
}

bool goal_indicator(const EnvConfig& config, const Position& state) {
  const double dx = state.x - config.goal_center.x;
  const double dy = state.y - config.goal_center.y;
  // Boundary inclusive; the slack absorbs rounding in the coordinates.
  return std::hypot(dx, dy) <= config.goal_radius + 1e-12;
}

StepResult step(const EnvConfig& config, const Position& state, const Action& action,
                Rng& rng) {
  if (!std::isfinite(action.dx) || !std::isfinite(action.dy)) {
    throw std::invalid_argument("env: action components must be finite");
  }
  const Action a = clip_action(config, action);
  Position next{state.x + a.dx, state.y + a.dy};
  if (config.process_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, config.process_noise_std);
    next.x += noise(rng);
    next.y += noise(rng);
  }
  next.x = std::clamp(next.x, 0.0, 1.0);
  next.y = std::clamp(next.y, 0.0, 1.0);

  const double lo = config.wall_x.lo;
  const double hi = config.wall_x.hi;
  if (!config.gap_y.contains(next.y)) {
    const bool lands_inside = next.x > lo && next.x < hi;
    const bool crosses_from_left = state.x <= lo && next.x > lo;
    const bool crosses_from_right = state.x >= hi && next.x < hi;
    if (lands_inside || crosses_from_left || crosses_from_right) {
      if (state.x <= lo) {
        next.x = lo;
      } else if (state.x >= hi) {
        next.x = hi;
      } else {
        // Leaving the gap vertically while inside the band.
        next.x = (state.x - lo) < (hi - state.x) ? lo : hi;
      }
    }
  }
  return StepResult{next, goal_indicator(config, next)};
}

}  // namespace thrifty::env
