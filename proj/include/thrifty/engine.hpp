#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "thrifty/baselines.hpp"
#include "thrifty/critic.hpp"
#include "thrifty/ensemble.hpp"
#include "thrifty/gate.hpp"
#include "thrifty/metrics.hpp"
#include "thrifty/supervisor.hpp"

namespace thrifty {

enum class Algorithm { thrifty, bc, safedagger, lazydagger, hgdagger };

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);

struct RunConfig {
  Algorithm algorithm = Algorithm::thrifty;
  /// Clause ablations; only meaningful for the thrifty algorithm.
  GateClauses clauses;
  std::uint64_t seed = 0;

  int max_episodes = 1000000;
  /// Environment steps taken under the gate. Offline rollouts are free.
  long interactive_steps = 3000;
  double alpha_h = 0.01;
  int num_demos = 30;
  /// Offline demo multiplier for the behavior-cloning baseline.
  double bc_demo_multiplier = 1.5;

  /// Robot rollouts collected before the first interactive episode.
  int offline_rollouts = 10;
  /// Robot rollouts collected whenever this many interactive steps passed
  /// since the last collection.
  int rollout_interval_steps = 600;
  int rollouts_per_refresh = 10;
  /// Collect rollouts after every episode instead of on the interval.
  bool rollouts_every_episode = false;

  env::EnvConfig env;
  OracleConfig oracle;
  PolicyTrainingConfig policy;
  CriticConfig critic;
  ClassifierConfig classifier;
  double safedagger_tau = 0.008;
  double lazydagger_tau_h = 0.015;
  double lazydagger_tau_a_factor = 0.25;
  double lazydagger_noise_std = 0.02;
  SyntheticGaterConfig gater;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  double lazydagger_tau_a() const { return lazydagger_tau_a_factor * lazydagger_tau_h; }
};

struct EpisodeRecord {
  int episode = 0;
  EpisodeStats stats;
  /// Thresholds in force during the episode (thrifty only).
  std::optional<GateThresholds> thresholds;
  long steps_consumed = 0;
  std::size_t dh_size = 0;
  std::size_t dr_size = 0;
  /// Budget ran out mid-episode.
  bool truncated = false;
  /// Supervisor became unavailable; transitions were discarded.
  bool aborted = false;
};

struct RunResult {
  Algorithm algorithm = Algorithm::thrifty;
  EnsemblePolicy policy;
  std::optional<RiskCritic> critic;
  std::optional<DiscrepancyClassifier> classifier;
  std::vector<EpisodeRecord> episodes;
  /// Every threshold set produced by tuning, initial one first.
  std::vector<GateThresholds> threshold_history;
  std::optional<GateThresholds> thresholds;
  Dataset d_h;
  Dataset d_r;
  long interactive_steps = 0;
  long offline_steps = 0;
};

/// `n` oracle episodes from fresh start states; every step is supervisor
/// sourced. Successful demos end with an absorbing goal record.
Dataset collect_demos(const env::EnvConfig& env, const OracleConfig& oracle, int n, Rng& rng);

struct GatedEpisode {
  std::vector<Mode> modes;
  std::vector<SwitchCause> causes;
  std::vector<Transition> supervisor_transitions;
  std::vector<Transition> autonomous_transitions;
  std::optional<Transition> absorbing;
  bool success = false;
  bool truncated = false;

  EpisodeStats stats() const;
};

/// One episode under `gate`, at most `max_steps` steps (or the horizon).
/// Mode starts autonomous. SupervisorUnavailable propagates.
GatedEpisode run_gated_episode(const env::EnvConfig& env, const EnsemblePolicy& policy,
                               Supervisor& supervisor, Gate& gate, int max_steps, Rng& rng,
                               int robot_id = 0);

/// Hook invoked after each completed episode (logging, progress).
using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

RunResult run_thrifty(const RunConfig& config, Supervisor* supervisor = nullptr,
                      const EpisodeCallback& on_episode = {});
RunResult run_bc(const RunConfig& config);
RunResult run_safedagger(const RunConfig& config, Supervisor* supervisor = nullptr,
                         const EpisodeCallback& on_episode = {});
RunResult run_lazydagger(const RunConfig& config, Supervisor* supervisor = nullptr,
                         const EpisodeCallback& on_episode = {});
/// With `gate` null the synthetic gater decides.
RunResult run_hgdagger(const RunConfig& config, Supervisor* supervisor = nullptr,
                       Gate* gate = nullptr, const EpisodeCallback& on_episode = {});
/// Dispatches on config.algorithm.
RunResult run(const RunConfig& config, Supervisor* supervisor = nullptr,
              const EpisodeCallback& on_episode = {});

struct EvalStats {
  int episodes = 0;
  int successes = 0;
  std::vector<EpisodeStats> stats;
  double success_rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

/// Autonomous evaluation when `supervisor` is null, otherwise the gated
/// loop without any training. Throws if n < 1.
EvalStats evaluate(const EnsemblePolicy& policy, const env::EnvConfig& env, int n, Rng& rng,
                   Supervisor* supervisor = nullptr, Gate* gate = nullptr);

/// Evaluation gate matching the run's algorithm, bound to the run's models.
std::unique_ptr<Gate> make_gate(const RunResult& result, const RunConfig& config);

/// Per-state gate scores over the non-absorbing states of a dataset.
struct StateScores {
  std::vector<double> risk;
  std::vector<double> novelty;
};
StateScores score_states(const EnsemblePolicy& policy, const RiskCritic& critic,
                         const Dataset& dataset);

/// Squared action discrepancy between robot and supervisor on labelled
/// supervisor states.
std::vector<double> supervisor_discrepancies(const EnsemblePolicy& policy, const Dataset& d_h);

}  // namespace thrifty
