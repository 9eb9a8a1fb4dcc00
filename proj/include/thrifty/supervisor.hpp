#pragma once

#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>

#include "thrifty/env.hpp"
#include "thrifty/rng.hpp"

namespace thrifty {

/// Scripted stand-in for the human supervisor: heads for a waypoint in front
/// of the gap, then through it, then to the goal centre.
struct OracleConfig {
  env::Position waypoint{0.45, 0.5};
  env::Position gap_exit{0.55, 0.5};
  double gain = 1.0;
  double noise_std = 0.0;
};

env::Action oracle_action(const OracleConfig& config, const env::EnvConfig& env,
                          const env::Position& state);

/// Oracle action plus zero-mean Gaussian noise per component, re-clipped.
/// With noise_std == 0 no random numbers are drawn.
env::Action noisy_oracle_action(const OracleConfig& config, const env::EnvConfig& env,
                                const env::Position& state, Rng& rng);

// Synthetic human gate for HG-DAgger. Discrepancies are squared L2 distances
// between actions divided by `action_scale`, i.e. measured in the normalized
// [-1, 1] action space.
struct SyntheticGaterConfig {
  double engage_discrepancy = 0.01;
  double disengage_factor = 0.25;
  int patience = 3;
  double action_scale = 0.05;

  void validate() const;
};

struct GaterState {
  bool engaged = false;
  int calm_steps = 0;
};

enum class GaterDecision { engage, stay, disengage };

double normalized_discrepancy(const env::Action& a, const env::Action& b, double scale);

/// Decision from a precomputed (normalized) discrepancy.
GaterDecision synthetic_gater_decide(const SyntheticGaterConfig& config, GaterState& state,
                                     double discrepancy);
GaterDecision synthetic_gater_decide(const SyntheticGaterConfig& config, GaterState& state,
                                     const env::Action& robot_action,
                                     const env::Action& oracle_action);

/// The human (or remote client) can no longer provide actions.
class SupervisorUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SupervisorQuery {
  int robot_id = 0;
  long tick = 0;
  env::Position state;
};

/// `executed` drives the environment; `label` is what enters the dataset.
/// They differ only when noise is injected into supervisor actions.
struct SupervisorAction {
  env::Action executed;
  env::Action label;
};

class Supervisor {
 public:
  virtual ~Supervisor() = default;
  virtual SupervisorAction act(const SupervisorQuery& query) = 0;
};

class OracleSupervisor : public Supervisor {
 public:
  OracleSupervisor(OracleConfig config, env::EnvConfig env, std::uint64_t noise_seed = 0);
  SupervisorAction act(const SupervisorQuery& query) override;

 private:
  OracleConfig config_;
  env::EnvConfig env_;
  Rng rng_;
};

/// Transport between a blocking consumer (the simulation tick) and a human
/// client.
class SupervisorChannel {
 public:
  virtual ~SupervisorChannel() = default;
  /// Tells the client that `robot_id` waits for an action at `state`.
  virtual void request_action(int robot_id, long tick, const env::Position& state) = 0;
  /// Blocks until an action for `robot_id` arrives. Throws
  /// SupervisorUnavailable once the channel is closed.
  virtual env::Action await_action(int robot_id) = 0;
};

/// At-most-one pending action per robot; a newer post replaces an unread one.
class ActionMailbox {
 public:
  void post(int robot_id, const env::Action& action);
  /// Blocks until an action is pending or the mailbox closes.
  env::Action take(int robot_id);
  std::optional<env::Action> try_take(int robot_id);
  void close();
  void reopen();
  bool closed() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<int, env::Action> pending_;
  bool closed_ = false;
};

/// Requests an action over the channel, waits for it and clips it.
env::Action remote_action(SupervisorChannel& channel, const env::EnvConfig& env,
                          int robot_id, long tick, const env::Position& state);

class RemoteSupervisor : public Supervisor {
 public:
  RemoteSupervisor(SupervisorChannel& channel, env::EnvConfig env);
  SupervisorAction act(const SupervisorQuery& query) override;

 private:
  SupervisorChannel& channel_;
  env::EnvConfig env_;
};

}  // namespace thrifty
