#include "thrifty/supervisor.hpp"

#include <random>

namespace thrifty {

env::Action oracle_action(const OracleConfig& config, const env::EnvConfig& env,
                          const env::Position& state) {
  // With unit gain the robot lands exactly on each target, so a stage ends
  // on arrival (up to rounding) rather than after passing it.
  constexpr double kArrived = 1e-9;
  env::Position target = env.goal_center;
  if (state.x < config.waypoint.x - kArrived) {
    target = config.waypoint;
  } else if (state.x < config.gap_exit.x - kArrived) {
    target = config.gap_exit;
  }
  const env::Action raw{config.gain * (target.x - state.x), config.gain * (target.y - state.y)};
  return env::clip_action(env, raw);
}

env::Action noisy_oracle_action(const OracleConfig& config, const env::EnvConfig& env,
                                const env::Position& state, Rng& rng) {
  env::Action a = oracle_action(config, env, state);
  if (config.noise_std <= 0.0) return a;
  std::normal_distribution<double> noise(0.0, config.noise_std);
  a.dx += noise(rng);
  a.dy += noise(rng);
  return env::clip_action(env, a);
}

void SyntheticGaterConfig::validate() const {
  if (patience < 1) throw std::invalid_argument("gater: patience must be >= 1");
  if (disengage_factor < 0.0 || disengage_factor >= 1.0) {
    throw std::invalid_argument("gater: disengage threshold must be below engage threshold");
  }
  if (action_scale <= 0.0) throw std::invalid_argument("gater: action_scale must be positive");
}

double normalized_discrepancy(const env::Action& a, const env::Action& b, double scale) {
  const double dx = (a.dx - b.dx) / scale;
  const double dy = (a.dy - b.dy) / scale;
  return dx * dx + dy * dy;
}

GaterDecision synthetic_gater_decide(const SyntheticGaterConfig& config, GaterState& state,
                                     double discrepancy) {
  if (!state.engaged) {
    if (discrepancy > config.engage_discrepancy) {
      state.engaged = true;
      state.calm_steps = 0;
      return GaterDecision::engage;
    }
    return GaterDecision::stay;
  }
  if (discrepancy < config.disengage_factor * config.engage_discrepancy) {
    if (++state.calm_steps >= config.patience) {
      state.engaged = false;
      state.calm_steps = 0;
      return GaterDecision::disengage;
    }
  } else {
    state.calm_steps = 0;
  }
  return GaterDecision::stay;
}

GaterDecision synthetic_gater_decide(const SyntheticGaterConfig& config, GaterState& state,
                                     const env::Action& robot_action,
                                     const env::Action& oracle_action) {
  return synthetic_gater_decide(
      config, state, normalized_discrepancy(robot_action, oracle_action, config.action_scale));
}

OracleSupervisor::OracleSupervisor(OracleConfig config, env::EnvConfig env,
                                   std::uint64_t noise_seed)
    : config_(config), env_(env), rng_(noise_seed) {}

SupervisorAction OracleSupervisor::act(const SupervisorQuery& query) {
  const env::Action clean = oracle_action(config_, env_, query.state);
  if (config_.noise_std <= 0.0) return {clean, clean};
  return {noisy_oracle_action(config_, env_, query.state, rng_), clean};
}

void ActionMailbox::post(int robot_id, const env::Action& action) {
  {
    std::lock_guard lock(mutex_);
    pending_[robot_id] = action;
  }
  cv_.notify_all();
}

env::Action ActionMailbox::take(int robot_id) {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return closed_ || pending_.count(robot_id) > 0; });
  if (closed_) throw SupervisorUnavailable("supervisor channel closed");
  const env::Action a = pending_[robot_id];
  pending_.erase(robot_id);
  return a;
}

std::optional<env::Action> ActionMailbox::try_take(int robot_id) {
  std::lock_guard lock(mutex_);
  auto it = pending_.find(robot_id);
  if (it == pending_.end()) return std::nullopt;
  const env::Action a = it->second;
  pending_.erase(it);
  return a;
}

void ActionMailbox::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
    pending_.clear();
  }
  cv_.notify_all();
}

void ActionMailbox::reopen() {
  std::lock_guard lock(mutex_);
  closed_ = false;
}

bool ActionMailbox::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

env::Action remote_action(SupervisorChannel& channel, const env::EnvConfig& env,
                          int robot_id, long tick, const env::Position& state) {
  channel.request_action(robot_id, tick, state);
  return env::clip_action(env, channel.await_action(robot_id));
}

RemoteSupervisor::RemoteSupervisor(SupervisorChannel& channel, env::EnvConfig env)
    : channel_(channel), env_(env) {}

SupervisorAction RemoteSupervisor::act(const SupervisorQuery& query) {
  const env::Action a = remote_action(channel_, env_, query.robot_id, query.tick, query.state);
  return {a, a};
}

}  // namespace thrifty
