#include "thrifty/fleet.hpp"

#include <algorithm>
#include <stdexcept>

namespace thrifty {

namespace {

constexpr std::uint64_t kRobotStreamBase = 100;

struct Tick {
  FleetState& fleet;
  FleetContext& ctx;
  long tick;

  FleetRobot& robot(int id) { return fleet.robots[static_cast<std::size_t>(id)]; }
  Gate& gate(int id) { return *ctx.gates[static_cast<std::size_t>(id)]; }
  Rng& rng(int id) { return ctx.rngs[static_cast<std::size_t>(id)]; }

  void start_episode(FleetRobot& r) {
    r.state = env::reset(ctx.config->env, rng(r.id));
    r.mode = Mode::autonomous;
    r.last_executed = Mode::autonomous;
    r.episode_step = 0;
    r.trace.clear();
    r.causes.clear();
    r.pending_cause.reset();
    gate(r.id).begin_episode(r.id);
  }

  void end_episode(FleetRobot& r, bool success) {
    EpisodeStats s = episode_stats(r.trace, success);
    s.switch_causes = r.causes;
    fleet.finished.push_back(std::move(s));
    ++r.episodes_completed;
    if (success) ++r.successes;
    fleet.events.push_back({FleetEventKind::episode_end, r.id, std::nullopt, success});
    auto it = std::find(fleet.queue.begin(), fleet.queue.end(), r.id);
    if (it != fleet.queue.end()) fleet.queue.erase(it);
    if (fleet.serving == r.id) fleet.serving.reset();
    start_episode(r);
  }

  // Returns true when the episode ended.
  bool execute(FleetRobot& r, const env::Action& action, Mode executed) {
    const auto res = env::step(ctx.config->env, r.state, action, rng(r.id));
    r.state = res.next_state;
    if (executed == Mode::supervisor && r.last_executed == Mode::autonomous) {
      r.causes.push_back(r.pending_cause.value_or(SwitchCause::external));
    }
    r.trace.push_back(executed);
    r.last_executed = executed;
    ++r.episode_step;
    if (res.reached_goal || r.episode_step >= ctx.config->env.horizon) {
      end_episode(r, res.reached_goal);
      return true;
    }
    return false;
  }

  void gate_phase() {
    for (auto& r : fleet.robots) {
      if (fleet.waiting(r.id)) {
        if (ctx.config->queued_robots_keep_acting && fleet.serving != r.id) {
          execute(r, ctx.policy->act(r.state), Mode::autonomous);
        }
        continue;
      }
      const env::Action a = ctx.policy->act(r.state);
      if (fleet.supervisor_available) {
        const auto cause = gate(r.id).intervene({r.id, tick, r.state, a});
        r.scores = gate(r.id).last_scores();
        if (cause) {
          r.mode = Mode::supervisor;
          r.pending_cause = cause;
          fleet.queue.push_back(r.id);
          fleet.events.push_back({FleetEventKind::intervention_request, r.id, cause, false});
          continue;
        }
      }
      execute(r, a, Mode::autonomous);
    }
  }

  void promote() {
    if (fleet.serving || fleet.queue.empty()) return;
    fleet.serving = fleet.queue.front();
    fleet.queue.pop_front();
    fleet.events.push_back({FleetEventKind::service_start, *fleet.serving, std::nullopt, false});
  }

  void lose_supervisor() {
    fleet.supervisor_available = false;
    fleet.events.push_back({FleetEventKind::supervisor_lost, fleet.serving.value_or(-1),
                            std::nullopt, false});
    for (int id : fleet.queue) robot(id).mode = Mode::autonomous;
    if (fleet.serving) robot(*fleet.serving).mode = Mode::autonomous;
    fleet.queue.clear();
    fleet.serving.reset();
  }

  void serve() {
    if (!fleet.serving) return;
    FleetRobot& r = robot(*fleet.serving);
    SupervisorAction sa;
    try {
      sa = ctx.supervisor->act({r.id, tick, r.state});
    } catch (const SupervisorUnavailable&) {
      lose_supervisor();
      return;
    }
    const env::Position before = r.state;
    const env::Action robot_action = ctx.policy->act(before);
    if (execute(r, sa.executed, Mode::supervisor)) return;
    if (gate(r.id).cede({r.id, tick, before, robot_action, sa.label, r.state})) {
      r.mode = Mode::autonomous;
      fleet.serving.reset();
      fleet.events.push_back({FleetEventKind::cede, r.id, std::nullopt, false});
    }
    r.scores = gate(r.id).last_scores();
  }
};

}  // namespace

void FleetConfig::validate() const {
  env.validate();
  if (robots < 1) throw std::invalid_argument("fleet: robots must be >= 1");
  if (steps < 0) throw std::invalid_argument("fleet: steps must be >= 0");
}

bool FleetState::waiting(int robot_id) const {
  return serving == robot_id ||
         std::find(queue.begin(), queue.end(), robot_id) != queue.end();
}

FleetContext make_fleet_context(const FleetConfig& config, const EnsemblePolicy& policy,
                                Supervisor& supervisor, const Gate& prototype) {
  config.validate();
  FleetContext ctx;
  ctx.config = &config;
  ctx.policy = &policy;
  ctx.supervisor = &supervisor;
  for (int i = 0; i < config.robots; ++i) {
    ctx.gates.push_back(prototype.clone());
    ctx.rngs.push_back(make_rng(config.seed, kRobotStreamBase + static_cast<std::uint64_t>(i)));
  }
  return ctx;
}

FleetState make_fleet(const FleetConfig& config, FleetContext& context) {
  FleetState fleet;
  Tick init{fleet, context, 0};
  for (int i = 0; i < config.robots; ++i) {
    fleet.robots.push_back(FleetRobot{});
    fleet.robots.back().id = i;
    init.start_episode(fleet.robots.back());
  }
  return fleet;
}

void fleet_step(FleetState& fleet, FleetContext& context) {
  fleet.events.clear();
  Tick t{fleet, context, fleet.tick + 1};
  t.gate_phase();
  t.promote();
  t.serve();
  for (int id : fleet.queue) ++t.robot(id).idle_ticks;
  t.promote();
  fleet.tick = t.tick;
}

FleetMetrics fleet_metrics(const FleetState& fleet) {
  FleetMetrics m;
  auto add = [&m](const EpisodeStats& s) {
    m.ints += s.ints;
    m.acts_h += s.acts_h;
    m.acts_r += s.acts_r;
  };
  for (const auto& s : fleet.finished) {
    add(s);
    ++m.episodes;
    if (s.success) ++m.successes;
  }
  for (const auto& r : fleet.robots) {
    if (!r.trace.empty()) add(episode_stats(r.trace, false));
    m.idle_ticks.push_back(r.idle_ticks);
  }
  if (!m.idle_ticks.empty()) {
    long total = 0;
    for (long v : m.idle_ticks) total += v;
    m.mean_idle = static_cast<double>(total) / static_cast<double>(m.idle_ticks.size());
  }
  return m;
}

FleetMetrics run_fleet(const FleetConfig& config, const EnsemblePolicy& policy,
                       Supervisor& supervisor, const Gate& prototype,
                       const TickObserver& observer) {
  auto ctx = make_fleet_context(config, policy, supervisor, prototype);
  FleetState fleet = make_fleet(config, ctx);
  if (observer) observer(fleet);
  for (long i = 0; i < config.steps; ++i) {
    fleet_step(fleet, ctx);
    if (observer) observer(fleet);
  }
  return fleet_metrics(fleet);
}

}  // namespace thrifty
