#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "thrifty/ensemble.hpp"
#include "thrifty/gate.hpp"
#include "thrifty/metrics.hpp"
#include "thrifty/supervisor.hpp"

namespace thrifty {

struct FleetConfig {
  int robots = 3;
  long steps = 350;
  std::uint64_t seed = 0;
  /// Queued robots keep executing their own policy while they wait.
  bool queued_robots_keep_acting = false;
  env::EnvConfig env;

  void validate() const;
};

struct FleetRobot {
  int id = 0;
  env::Position state;
  Mode mode = Mode::autonomous;
  int episode_step = 0;
  long idle_ticks = 0;
  int episodes_completed = 0;
  int successes = 0;
  /// Executed modes and switch causes of the running episode.
  std::vector<Mode> trace;
  std::vector<SwitchCause> causes;
  Mode last_executed = Mode::autonomous;
  /// Cause of the outstanding request, charged at the first served step.
  std::optional<SwitchCause> pending_cause;
  GateScores scores;
};

enum class FleetEventKind { intervention_request, service_start, cede, episode_end, supervisor_lost };

struct FleetEvent {
  FleetEventKind kind = FleetEventKind::intervention_request;
  int robot_id = 0;
  std::optional<SwitchCause> cause;  // intervention_request
  bool success = false;              // episode_end
};

struct FleetState {
  std::vector<FleetRobot> robots;
  /// Robots waiting for the supervisor, oldest first. Never holds `serving`.
  std::deque<int> queue;
  std::optional<int> serving;
  /// Number of completed ticks; the tick being executed is tick + 1.
  long tick = 0;
  bool supervisor_available = true;
  std::vector<EpisodeStats> finished;
  /// Events of the most recent tick.
  std::vector<FleetEvent> events;

  bool waiting(int robot_id) const;
};

/// Everything a tick needs besides the state. `gates` holds one gate per
/// robot; `rngs` one random stream per robot.
struct FleetContext {
  const FleetConfig* config = nullptr;
  const EnsemblePolicy* policy = nullptr;
  Supervisor* supervisor = nullptr;
  std::vector<std::unique_ptr<Gate>> gates;
  std::vector<Rng> rngs;
};

FleetContext make_fleet_context(const FleetConfig& config, const EnsemblePolicy& policy,
                                Supervisor& supervisor, const Gate& prototype);
FleetState make_fleet(const FleetConfig& config, FleetContext& context);

/// One lockstep tick:
///  1. robots that are neither queued nor served evaluate their gate in id
///     order; a request enqueues and freezes the robot, the others act;
///  2. an idle supervisor takes the queue head;
///  3. the served robot executes one supervisor action, then may cede;
///     an episode that ends releases the supervisor;
///  4. queued robots that were not served accrue one idle tick;
///  5. an idle supervisor takes the next queue head.
void fleet_step(FleetState& fleet, FleetContext& context);

struct FleetMetrics {
  int successes = 0;  // throughput
  int episodes = 0;
  long ints = 0;
  long acts_h = 0;
  long acts_r = 0;
  double mean_idle = 0.0;
  std::vector<long> idle_ticks;
};

FleetMetrics fleet_metrics(const FleetState& fleet);

using TickObserver = std::function<void(const FleetState&)>;

FleetMetrics run_fleet(const FleetConfig& config, const EnsemblePolicy& policy,
                       Supervisor& supervisor, const Gate& prototype,
                       const TickObserver& observer = {});

}  // namespace thrifty
