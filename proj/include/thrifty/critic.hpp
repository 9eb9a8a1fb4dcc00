#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thrifty/dataset.hpp"
#include "thrifty/ensemble.hpp"
#include "thrifty/nn.hpp"
#include "thrifty/rng.hpp"

namespace thrifty {

struct CriticConfig {
  std::vector<int> hidden_sizes{64, 64};
  double learning_rate = 1e-3;
  int batch_size = 50;
  double goal_fraction = 0.10;
  double gamma = 0.9999;
  /// Critic steps between refreshes of the frozen bootstrap network.
  int target_refresh = 100;
  int init_steps = 3000;
  /// Critic steps after each interactive episode.
  int update_steps = 150;

  void validate() const;
};

/// Critic input: state mapped to [-1, 1]^2 followed by the action divided by
/// the action bound.
nn::Vector critic_features(const env::Position& s, const env::Action& a, double action_max);

/// Sigmoid-headed estimate of the discounted probability that the robot
/// policy reaches the goal set from (s, a).
class RiskCritic {
 public:
  RiskCritic() = default;
  RiskCritic(const CriticConfig& config, double action_max, std::uint64_t seed);
  RiskCritic(nn::Mlp network, const CriticConfig& config, double action_max);

  double q_value(const env::Position& s, const env::Action& a) const;
  /// 1 - q_value.
  double risk(const env::Position& s, const env::Action& a) const;
  std::vector<double> q_batch(std::span<const env::Position> states,
                              std::span<const env::Action> actions) const;
  std::vector<double> risk_batch(std::span<const env::Position> states,
                                 std::span<const env::Action> actions) const;
  /// Value from the frozen bootstrap network.
  double frozen_q_value(const env::Position& s, const env::Action& a) const;
  std::vector<double> frozen_q_batch(std::span<const env::Position> states,
                                     std::span<const env::Action> actions) const;

  void sync_target();

  const nn::Mlp& network() const { return net_; }
  nn::Mlp& network() { return net_; }
  const CriticConfig& config() const { return config_; }
  double action_max() const { return action_max_; }
  std::uint64_t step_count() const { return step_count_; }

 private:
  friend std::vector<double> train_critic(RiskCritic&, const Dataset&, const EnsemblePolicy&,
                                          int, Rng&);
  nn::Matrix features(std::span<const env::Position> states,
                      std::span<const env::Action> actions) const;

  CriticConfig config_;
  double action_max_ = 0.05;
  nn::Mlp net_;
  nn::Mlp target_net_;
  nn::AdamState optimizer_;
  std::uint64_t step_count_ = 0;
};

/// 1_G(s) + (1 - 1_G(s)) * gamma * Q_frozen(s', pi(s')).
double td_target(const RiskCritic& critic, const env::PolicyFn& policy,
                 const Transition& transition);
double td_target(const RiskCritic& critic, const EnsemblePolicy& policy,
                 const Transition& transition);

/// Draws minibatch indices with a fixed share of goal-flagged transitions.
/// Degrades to uniform sampling when either class is empty.
class CriticBatchSampler {
 public:
  CriticBatchSampler(const Dataset& dataset, const CriticConfig& config);

  std::vector<std::size_t> sample(Rng& rng) const;
  bool balanced() const { return balanced_; }
  int goal_slots() const { return goal_slots_; }

 private:
  std::vector<std::size_t> goal_;
  std::vector<std::size_t> other_;
  std::size_t total_ = 0;
  int batch_size_ = 0;
  int goal_slots_ = 0;
  bool balanced_ = false;
};

/// Minimizes the mean squared TD error on `dataset` for `steps` Adam steps.
/// Returns the per-step minibatch loss. Throws on an empty dataset.
std::vector<double> train_critic(RiskCritic& critic, const Dataset& dataset,
                                 const EnsemblePolicy& policy, int steps, Rng& rng);

struct Rollout {
  std::vector<Transition> transitions;
  bool success = false;
  int steps = 0;
};

/// `k` autonomous episodes; successful ones end with an absorbing goal
/// transition. No supervisor is consulted.
std::vector<Rollout> collect_eval_rollouts(const env::PolicyFn& policy,
                                           const env::EnvConfig& env, int k, Rng& rng);

void append_rollouts(Dataset& dataset, const std::vector<Rollout>& rollouts);

}  // namespace thrifty
