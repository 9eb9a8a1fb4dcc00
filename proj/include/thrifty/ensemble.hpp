#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thrifty/dataset.hpp"
#include "thrifty/nn.hpp"
#include "thrifty/rng.hpp"

namespace thrifty {

struct PolicyTrainingConfig {
  std::vector<int> hidden_sizes{64, 64};
  int ensemble_size = 5;
  double learning_rate = 1e-3;
  int batch_size = 100;
  int epochs = 5;
  int steps_per_epoch = 500;
  /// Gradient steps per member after each interactive episode.
  int retrain_steps = 100;
  bool retrain_from_scratch = false;

  void validate() const;
};

/// Network input for a state: the unit square mapped to [-1, 1]^2.
nn::Vector policy_features(const env::Position& s);

/// Bootstrapped ensemble of tanh-headed MLPs. Member outputs are scaled by
/// the action bound, so every member action lies in [-a_max, a_max]^2.
class EnsemblePolicy {
 public:
  EnsemblePolicy() = default;
  EnsemblePolicy(const PolicyTrainingConfig& config, double action_max, std::uint64_t seed);
  EnsemblePolicy(std::vector<nn::Mlp> members, double action_max);

  std::size_t size() const { return members_.size(); }
  double action_max() const { return action_max_; }
  const std::vector<nn::Mlp>& members() const { return members_; }
  std::vector<nn::Mlp>& members() { return members_; }

  std::vector<env::Action> member_actions(const env::Position& s) const;
  /// Ensemble-mean action: the action the robot executes.
  env::Action act(const env::Position& s) const;
  double novelty(const env::Position& s) const;

  struct BatchOutput {
    std::vector<env::Action> mean_actions;
    std::vector<double> novelty;
  };
  BatchOutput evaluate_batch(std::span<const env::Position> states) const;
  std::vector<env::Action> act_batch(std::span<const env::Position> states) const;

  /// Resets the optimizer state of every member (used on warm restarts
  /// after loading from disk).
  void reset_optimizers();

  bool operator==(const EnsemblePolicy& other) const;

 private:
  friend void train_members(EnsemblePolicy&, const Dataset&, const PolicyTrainingConfig&,
                            int, Rng&);
  std::vector<nn::Mlp> members_;
  std::vector<nn::AdamState> optimizers_;
  double action_max_ = 0.05;
};

env::Action mean_action(std::span<const env::Action> member_outputs);
/// Population variance of each action component across members, averaged
/// over components. A single member yields 0.
double novelty_of(std::span<const env::Action> member_outputs);

/// Squared Euclidean distance between two actions.
double discrepancy(const env::Action& a, const env::Action& b);

/// Runs `steps` minibatch Adam steps per member, each member drawing batches
/// from its own with-replacement resample (size |D_h|) of the supervisor
/// transitions. Absorbing goal records carry no supervisor label and are
/// skipped.
void train_members(EnsemblePolicy& policy, const Dataset& dataset,
                   const PolicyTrainingConfig& config, int steps, Rng& rng);

/// Behavior cloning from scratch. Throws std::invalid_argument when the
/// dataset holds no supervisor transitions.
EnsemblePolicy fit_bc(const Dataset& dataset, const PolicyTrainingConfig& config,
                      double action_max, Rng& rng);

/// Per-episode update: continues from current parameters unless the
/// config asks for a fresh fit.
void retrain(EnsemblePolicy& policy, const Dataset& dataset,
             const PolicyTrainingConfig& config, Rng& rng);

}  // namespace thrifty
