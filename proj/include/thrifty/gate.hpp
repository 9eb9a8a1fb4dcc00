#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "thrifty/critic.hpp"
#include "thrifty/ensemble.hpp"

namespace thrifty {

enum class Mode { autonomous, supervisor };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view name);

/// Why an autonomous robot handed control to the supervisor. Gates that do
/// not score states (human-gated, classifier-gated) report `external`.
enum class SwitchCause { novelty, risk, external };

std::string_view to_string(SwitchCause c);
SwitchCause switch_cause_from_string(std::string_view name);

struct GateThresholds {
  double tau_h = 0.0;    // risk above which the robot asks for help
  double tau_a = 0.0;    // risk below which control may return
  double delta_h = 0.0;  // novelty above which the robot asks for help
  double delta_a = 0.0;  // action discrepancy below which control may return
  double alpha_h = 0.01;

  bool operator==(const GateThresholds&) const = default;
};

/// Which clauses of the two predicates are active. Disabling novelty also
/// drops the discrepancy test on the way back; disabling risk drops both
/// risk tests.
struct GateClauses {
  bool novelty = true;
  bool risk = true;
};

/// ceil(q * n)-th smallest value (1-based); q = 0 yields the minimum.
/// Throws on an empty list or q outside [0, 1].
double nearest_rank_quantile(std::vector<double> values, double q);

/// Fresh thresholds from score histories. Throws if any list is empty.
GateThresholds tune_thresholds(std::span<const double> risk_scores,
                               std::span<const double> novelty_scores,
                               std::span<const double> supervisor_discrepancies,
                               double alpha_h);

/// Recomputes tau_h, tau_a and delta_h; delta_a is carried over.
GateThresholds retune_thresholds(const GateThresholds& previous,
                                 std::span<const double> risk_scores,
                                 std::span<const double> novelty_scores);

/// Novelty is tested before risk, so a state exceeding both is attributed
/// to novelty.
std::optional<SwitchCause> intervene_on_scores(double novelty, double risk,
                                               const GateThresholds& thresholds,
                                               GateClauses clauses = {});
bool cede_on_scores(double discrepancy, double risk, const GateThresholds& thresholds,
                    GateClauses clauses = {});

bool intervene(const env::Position& state, const EnsemblePolicy& policy,
               const RiskCritic& critic, const GateThresholds& thresholds,
               GateClauses clauses = {});
bool cede(const env::Position& state, const env::Action& human_action,
          const EnsemblePolicy& policy, const RiskCritic& critic,
          const GateThresholds& thresholds, GateClauses clauses = {});

/// Autonomous -> Supervisor iff `intervene_result`; Supervisor -> Autonomous
/// iff `cede_result`. The other flag is ignored.
Mode advance_mode(Mode mode, bool intervene_result, bool cede_result);

struct GateQuery {
  int robot_id = 0;
  long tick = 0;
  env::Position state;
  /// Ensemble-mean action the robot would execute at `state`.
  env::Action robot_action;
};

/// Evaluated after the supervisor action executed.
struct CedeQuery {
  int robot_id = 0;
  long tick = 0;
  env::Position state;
  env::Action robot_action;
  env::Action human_action;
  env::Position next_state;
};

/// Scores a gate computed on its last call, for logging and streaming.
struct GateScores {
  std::optional<double> novelty;
  std::optional<double> risk;
};

/// Switching policy. One instance tracks one robot; fleets clone it.
class Gate {
 public:
  virtual ~Gate() = default;
  virtual void begin_episode(int /*robot_id*/) {}
  virtual std::optional<SwitchCause> intervene(const GateQuery& query) = 0;
  virtual bool cede(const CedeQuery& query) = 0;
  virtual GateScores last_scores() const { return {}; }
  virtual std::unique_ptr<Gate> clone() const = 0;
};

/// Robot-gated switching on novelty and risk. Holds references to models
/// owned by the caller, which may retrain them between episodes.
class ThriftyGate : public Gate {
 public:
  ThriftyGate(const EnsemblePolicy& policy, const RiskCritic& critic,
              const GateThresholds& thresholds, GateClauses clauses = {});

  std::optional<SwitchCause> intervene(const GateQuery& query) override;
  bool cede(const CedeQuery& query) override;
  GateScores last_scores() const override { return scores_; }
  std::unique_ptr<Gate> clone() const override;

 private:
  const EnsemblePolicy* policy_;
  const RiskCritic* critic_;
  const GateThresholds* thresholds_;
  GateClauses clauses_;
  GateScores scores_;
};

/// Never requests help.
class NeverGate : public Gate {
 public:
  std::optional<SwitchCause> intervene(const GateQuery&) override { return std::nullopt; }
  bool cede(const CedeQuery&) override { return true; }
  std::unique_ptr<Gate> clone() const override { return std::make_unique<NeverGate>(); }
};

}  // namespace thrifty
