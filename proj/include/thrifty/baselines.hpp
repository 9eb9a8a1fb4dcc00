#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thrifty/gate.hpp"
#include "thrifty/supervisor.hpp"

namespace thrifty {

struct ClassifierConfig {
  std::vector<int> hidden_sizes{64, 64};
  double learning_rate = 1e-3;
  int batch_size = 100;
  int init_steps = 2000;
  int update_steps = 200;
  /// Probability above which a state is predicted unsafe.
  double decision_threshold = 0.5;

  void validate() const;
};

/// Sigmoid MLP over the policy features predicting whether the robot's
/// action at a state strays from the supervisor's (label 1 = unsafe).
class DiscrepancyClassifier {
 public:
  DiscrepancyClassifier() = default;
  DiscrepancyClassifier(const ClassifierConfig& config, std::uint64_t seed);
  DiscrepancyClassifier(nn::Mlp network, const ClassifierConfig& config);

  double unsafe_probability(const env::Position& s) const;
  bool unsafe(const env::Position& s) const;

  const nn::Mlp& network() const { return net_; }
  const ClassifierConfig& config() const { return config_; }

 private:
  friend std::vector<double> train_classifier(DiscrepancyClassifier&,
                                              std::span<const env::Position>,
                                              std::span<const double>, int, Rng&);
  ClassifierConfig config_;
  nn::Mlp net_;
  nn::AdamState optimizer_;
};

/// MSE regression of the sigmoid output onto {0, 1} labels. Returns the
/// per-step loss. Throws on empty or mismatched inputs.
std::vector<double> train_classifier(DiscrepancyClassifier& classifier,
                                     std::span<const env::Position> states,
                                     std::span<const double> labels, int steps, Rng& rng);

struct LabelledStates {
  std::vector<env::Position> states;
  std::vector<double> labels;
};

/// Labels every labelled supervisor state 1 when the normalized discrepancy
/// between the robot action and the supervisor label exceeds `threshold`.
LabelledStates discrepancy_labels(const EnsemblePolicy& policy, const Dataset& dataset,
                                  double threshold);

/// Supervisor acts exactly on the states the classifier flags.
class SafeDaggerGate : public Gate {
 public:
  explicit SafeDaggerGate(const DiscrepancyClassifier& classifier);
  std::optional<SwitchCause> intervene(const GateQuery& query) override;
  /// Control returns once the successor state is predicted safe.
  bool cede(const CedeQuery& query) override;
  std::unique_ptr<Gate> clone() const override;

 private:
  const DiscrepancyClassifier* classifier_;
};

/// Enters on predicted discrepancy, leaves on measured discrepancy.
class LazyDaggerGate : public Gate {
 public:
  LazyDaggerGate(const DiscrepancyClassifier& classifier, double tau_a, double action_scale);
  std::optional<SwitchCause> intervene(const GateQuery& query) override;
  bool cede(const CedeQuery& query) override;
  std::unique_ptr<Gate> clone() const override;

  /// Exit decisions taken from the measured robot/supervisor discrepancy.
  long measured_exit_checks() const { return measured_exit_checks_; }
  /// Exit decisions that consulted the classifier. Stays zero by design.
  long predicted_exit_checks() const { return predicted_exit_checks_; }

 private:
  const DiscrepancyClassifier* classifier_;
  double tau_a_;
  double action_scale_;
  long measured_exit_checks_ = 0;
  long predicted_exit_checks_ = 0;
};

/// Human-gated switching driven by the synthetic gater against the oracle.
class HgGate : public Gate {
 public:
  HgGate(SyntheticGaterConfig gater, OracleConfig oracle, env::EnvConfig env);
  void begin_episode(int robot_id) override;
  std::optional<SwitchCause> intervene(const GateQuery& query) override;
  bool cede(const CedeQuery& query) override;
  std::unique_ptr<Gate> clone() const override;

 private:
  SyntheticGaterConfig gater_;
  OracleConfig oracle_;
  env::EnvConfig env_;
  GaterState state_;
};

}  // namespace thrifty
