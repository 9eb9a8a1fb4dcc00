#include "thrifty/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace thrifty {

namespace {

// Independent random streams per concern, so that e.g. a change in the
// number of critic steps never shifts the start states of later episodes.
enum Stream : std::uint64_t {
  kDemos = 1,
  kPolicy = 2,
  kRollouts = 3,
  kCritic = 4,
  kEpisodes = 5,
  kClassifier = 6,
  kSupervisorNoise = 7,
};

class NoSupervisor : public Supervisor {
 public:
  SupervisorAction act(const SupervisorQuery&) override {
    throw SupervisorUnavailable("no supervisor attached");
  }
};

Dataset merged(const Dataset& a, const Dataset& b) {
  Dataset out;
  out.transitions.reserve(a.size() + b.size());
  out.append(a);
  out.append(b);
  return out;
}

env::PolicyFn as_fn(const EnsemblePolicy& policy) {
  return [&policy](const env::Position& s) { return policy.act(s); };
}

long rollout_steps(const std::vector<Rollout>& rollouts) {
  long n = 0;
  for (const auto& r : rollouts) n += r.steps;
  return n;
}

void route(RunResult& r, const GatedEpisode& ep) {
  r.d_h.transitions.insert(r.d_h.transitions.end(), ep.supervisor_transitions.begin(),
                           ep.supervisor_transitions.end());
  r.d_r.transitions.insert(r.d_r.transitions.end(), ep.autonomous_transitions.begin(),
                           ep.autonomous_transitions.end());
  if (ep.absorbing) {
    (ep.absorbing->source == SourceMode::supervisor ? r.d_h : r.d_r).add(*ep.absorbing);
  }
}

// Shared interactive phase of every gated algorithm: episodes until the
// step budget or the episode cap runs out, routing data and calling
// `after_episode` for the algorithm-specific updates.
void interactive_loop(const RunConfig& config, RunResult& r, Supervisor& supervisor, Gate& gate,
                      const std::function<void(const GatedEpisode&)>& after_episode,
                      const std::function<std::optional<GateThresholds>()>& thresholds,
                      const EpisodeCallback& on_episode) {
  Rng rng = make_rng(config.seed, kEpisodes);
  for (int e = 0; e < config.max_episodes && r.interactive_steps < config.interactive_steps; ++e) {
    const long remaining = config.interactive_steps - r.interactive_steps;
    const int max_steps = static_cast<int>(std::min<long>(remaining, config.env.horizon));
    EpisodeRecord rec;
    rec.episode = e;
    rec.thresholds = thresholds();
    GatedEpisode ep;
    try {
      ep = run_gated_episode(config.env, r.policy, supervisor, gate, max_steps, rng);
    } catch (const SupervisorUnavailable&) {
      rec.aborted = true;
      rec.dh_size = r.d_h.size();
      rec.dr_size = r.d_r.size();
      r.episodes.push_back(rec);
      if (on_episode) on_episode(rec);
      return;
    }
    route(r, ep);
    r.interactive_steps += static_cast<long>(ep.modes.size());
    rec.stats = ep.stats();
    rec.truncated = ep.truncated;
    rec.steps_consumed = r.interactive_steps;
    after_episode(ep);
    rec.dh_size = r.d_h.size();
    rec.dr_size = r.d_r.size();
    r.episodes.push_back(rec);
    if (on_episode) on_episode(rec);
  }
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::thrifty: return "thrifty";
    case Algorithm::bc: return "bc";
    case Algorithm::safedagger: return "safedagger";
    case Algorithm::lazydagger: return "lazydagger";
    case Algorithm::hgdagger: return "hgdagger";
  }
  return "thrifty";
}

Algorithm algorithm_from_string(std::string_view name) {
  for (auto a : {Algorithm::thrifty, Algorithm::bc, Algorithm::safedagger, Algorithm::lazydagger,
                 Algorithm::hgdagger}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

void RunConfig::validate() const {
  env.validate();
  policy.validate();
  critic.validate();
  classifier.validate();
  gater.validate();
  if (max_episodes < 0) throw std::invalid_argument("max_episodes must be >= 0");
  if (interactive_steps < 0) throw std::invalid_argument("interactive_steps must be >= 0");
  if (!(alpha_h >= 0.0 && alpha_h <= 1.0)) throw std::invalid_argument("alpha_h must lie in [0, 1]");
  if (num_demos < 1) throw std::invalid_argument("num_demos must be >= 1");
  if (!(bc_demo_multiplier >= 1.0)) throw std::invalid_argument("bc_demo_multiplier must be >= 1");
  if (offline_rollouts < 1) throw std::invalid_argument("offline_rollouts must be >= 1");
  if (rollout_interval_steps < 1 || rollouts_per_refresh < 0) {
    throw std::invalid_argument("rollout cadence must be positive");
  }
  if (!(safedagger_tau >= 0.0) || !(lazydagger_tau_h >= 0.0)) {
    throw std::invalid_argument("discrepancy thresholds must be non-negative");
  }
  if (!(lazydagger_tau_a_factor > 0.0 && lazydagger_tau_a_factor <= 1.0)) {
    throw std::invalid_argument("lazydagger_tau_a_factor must lie in (0, 1]");
  }
  if (!(lazydagger_noise_std >= 0.0) || !(oracle.noise_std >= 0.0)) {
    throw std::invalid_argument("noise std must be non-negative");
  }
  if (algorithm != Algorithm::thrifty && (!clauses.novelty || !clauses.risk)) {
    throw std::invalid_argument("ablations apply only to the thrifty algorithm");
  }
  if (!clauses.novelty && !clauses.risk) {
    throw std::invalid_argument("at most one gate clause may be ablated");
  }
}

Dataset collect_demos(const env::EnvConfig& env, const OracleConfig& oracle, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("collect_demos: n must be >= 1");
  Dataset d;
  for (int e = 0; e < n; ++e) {
    env::Position s = env::reset(env, rng);
    for (int t = 0; t < env.horizon; ++t) {
      const env::Action a = noisy_oracle_action(oracle, env, s, rng);
      const auto res = env::step(env, s, a, rng);
      d.add(make_transition(env, s, a, res.next_state, SourceMode::supervisor));
      s = res.next_state;
      if (res.reached_goal) {
        d.add(goal_transition(env, s, oracle_action(oracle, env, s), SourceMode::supervisor));
        break;
      }
    }
  }
  return d;
}

EpisodeStats GatedEpisode::stats() const {
  if (modes.empty()) return EpisodeStats{};
  EpisodeStats s = episode_stats(modes, success);
  s.switch_causes = causes;
  return s;
}

GatedEpisode run_gated_episode(const env::EnvConfig& env, const EnsemblePolicy& policy,
                               Supervisor& supervisor, Gate& gate, int max_steps, Rng& rng,
                               int robot_id) {
  GatedEpisode ep;
  gate.begin_episode(robot_id);
  env::Position s = env::reset(env, rng);
  Mode mode = Mode::autonomous;
  // An episode opens as if the previous step had been autonomous.
  Mode last_executed = Mode::autonomous;
  const int limit = std::min(max_steps, env.horizon);
  for (int t = 0; t < limit; ++t) {
    const env::Action robot_action = policy.act(s);
    if (mode == Mode::autonomous) {
      if (auto cause = gate.intervene({robot_id, t, s, robot_action})) {
        mode = Mode::supervisor;
        if (last_executed == Mode::autonomous) ep.causes.push_back(*cause);
      }
    }
    env::StepResult res;
    if (mode == Mode::supervisor) {
      const SupervisorAction sa = supervisor.act({robot_id, t, s});
      res = env::step(env, s, sa.executed, rng);
      ep.supervisor_transitions.push_back(
          make_transition(env, s, sa.label, res.next_state, SourceMode::supervisor));
      if (gate.cede({robot_id, t, s, robot_action, sa.label, res.next_state})) {
        mode = Mode::autonomous;
      }
      last_executed = Mode::supervisor;
    } else {
      res = env::step(env, s, robot_action, rng);
      ep.autonomous_transitions.push_back(
          make_transition(env, s, robot_action, res.next_state, SourceMode::autonomous));
      last_executed = Mode::autonomous;
    }
    ep.modes.push_back(last_executed);
    s = res.next_state;
    if (res.reached_goal) {
      ep.success = true;
      ep.absorbing = goal_transition(env, s, policy.act(s),
                                     last_executed == Mode::supervisor ? SourceMode::supervisor
                                                                       : SourceMode::autonomous);
      break;
    }
  }
  ep.truncated = !ep.success && limit < env.horizon;
  return ep;
}

StateScores score_states(const EnsemblePolicy& policy, const RiskCritic& critic,
                         const Dataset& dataset) {
  std::vector<env::Position> states;
  states.reserve(dataset.size());
  for (const auto& t : dataset.transitions) {
    if (!t.goal_flag) states.push_back(t.state);
  }
  auto out = policy.evaluate_batch(states);
  return {critic.risk_batch(states, out.mean_actions), std::move(out.novelty)};
}

std::vector<double> supervisor_discrepancies(const EnsemblePolicy& policy, const Dataset& d_h) {
  std::vector<env::Position> states;
  std::vector<env::Action> labels;
  for (const auto& t : d_h.transitions) {
    if (t.source != SourceMode::supervisor || t.goal_flag) continue;
    states.push_back(t.state);
    labels.push_back(t.action);
  }
  const auto robot = policy.act_batch(states);
  std::vector<double> out(robot.size());
  for (std::size_t i = 0; i < robot.size(); ++i) out[i] = discrepancy(robot[i], labels[i]);
  return out;
}

RunResult run_thrifty(const RunConfig& config, Supervisor* supervisor,
                      const EpisodeCallback& on_episode) {
  config.validate();
  RunResult r;
  r.algorithm = Algorithm::thrifty;
  Rng demo_rng = make_rng(config.seed, kDemos);
  Rng policy_rng = make_rng(config.seed, kPolicy);
  Rng rollout_rng = make_rng(config.seed, kRollouts);
  Rng critic_rng = make_rng(config.seed, kCritic);

  r.d_h = collect_demos(config.env, config.oracle, config.num_demos, demo_rng);
  r.policy = fit_bc(r.d_h, config.policy, config.env.action_max, policy_rng);
  const auto offline =
      collect_eval_rollouts(as_fn(r.policy), config.env, config.offline_rollouts, rollout_rng);
  append_rollouts(r.d_r, offline);
  r.offline_steps += rollout_steps(offline);

  r.critic.emplace(config.critic, config.env.action_max, critic_rng());
  train_critic(*r.critic, merged(r.d_r, r.d_h), r.policy, config.critic.init_steps, critic_rng);

  auto scores = score_states(r.policy, *r.critic, r.d_r);
  GateThresholds thresholds = tune_thresholds(scores.risk, scores.novelty,
                                              supervisor_discrepancies(r.policy, r.d_h),
                                              config.alpha_h);
  r.threshold_history.push_back(thresholds);

  OracleSupervisor oracle(config.oracle, config.env, derive_seed(config.seed, kSupervisorNoise));
  Supervisor& sup = supervisor ? *supervisor : oracle;
  ThriftyGate gate(r.policy, *r.critic, thresholds, config.clauses);

  long since_rollouts = 0;
  auto after_episode = [&](const GatedEpisode& ep) {
    since_rollouts += static_cast<long>(ep.modes.size());
    retrain(r.policy, r.d_h, config.policy, policy_rng);
    if (config.rollouts_every_episode || since_rollouts >= config.rollout_interval_steps) {
      const auto fresh = collect_eval_rollouts(as_fn(r.policy), config.env,
                                               config.rollouts_per_refresh, rollout_rng);
      append_rollouts(r.d_r, fresh);
      r.offline_steps += rollout_steps(fresh);
      since_rollouts = 0;
    }
    train_critic(*r.critic, merged(r.d_r, r.d_h), r.policy, config.critic.update_steps,
                 critic_rng);
    scores = score_states(r.policy, *r.critic, r.d_r);
    thresholds = retune_thresholds(thresholds, scores.risk, scores.novelty);
    r.threshold_history.push_back(thresholds);
  };
  interactive_loop(config, r, sup, gate, after_episode,
                   [&]() -> std::optional<GateThresholds> { return thresholds; }, on_episode);
  r.thresholds = thresholds;
  return r;
}

RunResult run_bc(const RunConfig& config) {
  config.validate();
  RunResult r;
  r.algorithm = Algorithm::bc;
  Rng demo_rng = make_rng(config.seed, kDemos);
  Rng policy_rng = make_rng(config.seed, kPolicy);
  const int n = static_cast<int>(
      std::ceil(config.bc_demo_multiplier * static_cast<double>(config.num_demos) - 1e-9));
  r.d_h = collect_demos(config.env, config.oracle, n, demo_rng);
  r.policy = fit_bc(r.d_h, config.policy, config.env.action_max, policy_rng);
  return r;
}

namespace {

RunResult run_classifier_gated(const RunConfig& config, Algorithm algorithm,
                               Supervisor* supervisor, const EpisodeCallback& on_episode) {
  config.validate();
  RunResult r;
  r.algorithm = algorithm;
  const bool lazy = algorithm == Algorithm::lazydagger;
  const double label_threshold = lazy ? config.lazydagger_tau_h : config.safedagger_tau;
  Rng demo_rng = make_rng(config.seed, kDemos);
  Rng policy_rng = make_rng(config.seed, kPolicy);
  Rng classifier_rng = make_rng(config.seed, kClassifier);

  r.d_h = collect_demos(config.env, config.oracle, config.num_demos, demo_rng);
  r.policy = fit_bc(r.d_h, config.policy, config.env.action_max, policy_rng);
  r.classifier.emplace(config.classifier, classifier_rng());
  auto relabel_and_train = [&](int steps) {
    const auto labelled = discrepancy_labels(r.policy, r.d_h, label_threshold);
    train_classifier(*r.classifier, labelled.states, labelled.labels, steps, classifier_rng);
  };
  relabel_and_train(config.classifier.init_steps);

  OracleConfig oracle_cfg = config.oracle;
  if (lazy) oracle_cfg.noise_std = config.lazydagger_noise_std;
  OracleSupervisor oracle(oracle_cfg, config.env, derive_seed(config.seed, kSupervisorNoise));
  Supervisor& sup = supervisor ? *supervisor : oracle;

  std::unique_ptr<Gate> gate;
  if (lazy) {
    gate = std::make_unique<LazyDaggerGate>(*r.classifier, config.lazydagger_tau_a(),
                                            config.env.action_max);
  } else {
    gate = std::make_unique<SafeDaggerGate>(*r.classifier);
  }
  auto after_episode = [&](const GatedEpisode&) {
    retrain(r.policy, r.d_h, config.policy, policy_rng);
    relabel_and_train(config.classifier.update_steps);
  };
  interactive_loop(config, r, sup, *gate, after_episode,
                   [] { return std::optional<GateThresholds>{}; }, on_episode);
  return r;
}

}  // namespace

RunResult run_safedagger(const RunConfig& config, Supervisor* supervisor,
                         const EpisodeCallback& on_episode) {
  return run_classifier_gated(config, Algorithm::safedagger, supervisor, on_episode);
}

RunResult run_lazydagger(const RunConfig& config, Supervisor* supervisor,
                         const EpisodeCallback& on_episode) {
  return run_classifier_gated(config, Algorithm::lazydagger, supervisor, on_episode);
}

RunResult run_hgdagger(const RunConfig& config, Supervisor* supervisor, Gate* gate,
                       const EpisodeCallback& on_episode) {
  config.validate();
  RunResult r;
  r.algorithm = Algorithm::hgdagger;
  Rng demo_rng = make_rng(config.seed, kDemos);
  Rng policy_rng = make_rng(config.seed, kPolicy);
  r.d_h = collect_demos(config.env, config.oracle, config.num_demos, demo_rng);
  r.policy = fit_bc(r.d_h, config.policy, config.env.action_max, policy_rng);

  OracleSupervisor oracle(config.oracle, config.env, derive_seed(config.seed, kSupervisorNoise));
  Supervisor& sup = supervisor ? *supervisor : oracle;
  HgGate synthetic(config.gater, config.oracle, config.env);
  Gate& g = gate ? *gate : synthetic;
  auto after_episode = [&](const GatedEpisode&) {
    retrain(r.policy, r.d_h, config.policy, policy_rng);
  };
  interactive_loop(config, r, sup, g, after_episode,
                   [] { return std::optional<GateThresholds>{}; }, on_episode);
  return r;
}

RunResult run(const RunConfig& config, Supervisor* supervisor, const EpisodeCallback& on_episode) {
  switch (config.algorithm) {
    case Algorithm::thrifty: return run_thrifty(config, supervisor, on_episode);
    case Algorithm::bc: return run_bc(config);
    case Algorithm::safedagger: return run_safedagger(config, supervisor, on_episode);
    case Algorithm::lazydagger: return run_lazydagger(config, supervisor, on_episode);
    case Algorithm::hgdagger: return run_hgdagger(config, supervisor, nullptr, on_episode);
  }
  throw std::logic_error("unreachable algorithm");
}

EvalStats evaluate(const EnsemblePolicy& policy, const env::EnvConfig& env, int n, Rng& rng,
                   Supervisor* supervisor, Gate* gate) {
  if (n < 1) throw std::invalid_argument("evaluate: n must be >= 1");
  NoSupervisor none;
  NeverGate never;
  Supervisor& sup = supervisor ? *supervisor : none;
  Gate& g = (supervisor && gate) ? *gate : never;
  EvalStats out;
  for (int e = 0; e < n; ++e) {
    const auto ep = run_gated_episode(env, policy, sup, g, env.horizon, rng);
    ++out.episodes;
    if (ep.success) ++out.successes;
    out.stats.push_back(ep.stats());
  }
  return out;
}

std::unique_ptr<Gate> make_gate(const RunResult& result, const RunConfig& config) {
  switch (result.algorithm) {
    case Algorithm::thrifty:
      if (!result.critic || !result.thresholds) {
        throw std::invalid_argument("make_gate: thrifty result lacks critic or thresholds");
      }
      return std::make_unique<ThriftyGate>(result.policy, *result.critic, *result.thresholds,
                                           config.clauses);
    case Algorithm::bc: return std::make_unique<NeverGate>();
    case Algorithm::safedagger:
    case Algorithm::lazydagger:
      if (!result.classifier) throw std::invalid_argument("make_gate: result lacks classifier");
      if (result.algorithm == Algorithm::safedagger) {
        return std::make_unique<SafeDaggerGate>(*result.classifier);
      }
      return std::make_unique<LazyDaggerGate>(*result.classifier, config.lazydagger_tau_a(),
                                              config.env.action_max);
    case Algorithm::hgdagger:
      return std::make_unique<HgGate>(config.gater, config.oracle, config.env);
  }
  throw std::logic_error("unreachable algorithm");
}

}  // namespace thrifty
