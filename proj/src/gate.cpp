#include "thrifty/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace thrifty {

std::string_view to_string(Mode m) {
  return m == Mode::autonomous ? "autonomous" : "supervisor";
}

Mode mode_from_string(std::string_view name) {
  if (name == "autonomous") return Mode::autonomous;
  if (name == "supervisor") return Mode::supervisor;
  throw std::invalid_argument("unknown mode: " + std::string(name));
}

std::string_view to_string(SwitchCause c) {
  switch (c) {
    case SwitchCause::novelty: return "novelty";
    case SwitchCause::risk: return "risk";
    case SwitchCause::external: return "external";
  }
  return "external";
}

SwitchCause switch_cause_from_string(std::string_view name) {
  if (name == "novelty") return SwitchCause::novelty;
  if (name == "risk") return SwitchCause::risk;
  if (name == "external") return SwitchCause::external;
  throw std::invalid_argument("unknown switch cause: " + std::string(name));
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("nearest_rank_quantile: empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("nearest_rank_quantile: q not in [0, 1]");
  const auto n = values.size();
  // Exact ceil(q * n) even where q * n lands a hair above an integer.
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  const double below = static_cast<double>(rank - (rank > 0 ? 1 : 0));
  if (rank > 0 && std::abs(q * static_cast<double>(n) - below) < 1e-9 * static_cast<double>(n)) {
    rank -= 1;
  }
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

GateThresholds tune_thresholds(std::span<const double> risk_scores,
                               std::span<const double> novelty_scores,
                               std::span<const double> supervisor_discrepancies,
                               double alpha_h) {
  if (supervisor_discrepancies.empty()) {
    throw std::invalid_argument("tune_thresholds: no supervisor discrepancies");
  }
  GateThresholds t;
  t.alpha_h = alpha_h;
  t.delta_a = std::accumulate(supervisor_discrepancies.begin(), supervisor_discrepancies.end(), 0.0) /
              static_cast<double>(supervisor_discrepancies.size());
  return retune_thresholds(t, risk_scores, novelty_scores);
}

GateThresholds retune_thresholds(const GateThresholds& previous,
                                 std::span<const double> risk_scores,
                                 std::span<const double> novelty_scores) {
  if (risk_scores.empty() || novelty_scores.empty()) {
    throw std::invalid_argument("tune_thresholds: empty score list");
  }
  if (!(previous.alpha_h >= 0.0 && previous.alpha_h <= 1.0)) {
    throw std::invalid_argument("tune_thresholds: alpha_h not in [0, 1]");
  }
  GateThresholds t = previous;
  const std::vector<double> risk(risk_scores.begin(), risk_scores.end());
  t.tau_h = nearest_rank_quantile(risk, 1.0 - t.alpha_h);
  t.tau_a = nearest_rank_quantile(risk, 0.5);
  t.delta_h = nearest_rank_quantile({novelty_scores.begin(), novelty_scores.end()},
                                    1.0 - t.alpha_h);
  return t;
}

std::optional<SwitchCause> intervene_on_scores(double novelty, double risk,
                                               const GateThresholds& thresholds,
                                               GateClauses clauses) {
  if (clauses.novelty && novelty > thresholds.delta_h) return SwitchCause::novelty;
  if (clauses.risk && risk > thresholds.tau_h) return SwitchCause::risk;
  return std::nullopt;
}

bool cede_on_scores(double discrepancy, double risk, const GateThresholds& thresholds,
                    GateClauses clauses) {
  if (clauses.novelty && !(discrepancy < thresholds.delta_a)) return false;
  if (clauses.risk && !(risk < thresholds.tau_a)) return false;
  return true;
}

bool intervene(const env::Position& state, const EnsemblePolicy& policy,
               const RiskCritic& critic, const GateThresholds& thresholds,
               GateClauses clauses) {
  const auto members = policy.member_actions(state);
  const env::Action a = mean_action(members);
  return intervene_on_scores(novelty_of(members), critic.risk(state, a), thresholds, clauses)
      .has_value();
}

bool cede(const env::Position& state, const env::Action& human_action,
          const EnsemblePolicy& policy, const RiskCritic& critic,
          const GateThresholds& thresholds, GateClauses clauses) {
  const env::Action a = policy.act(state);
  return cede_on_scores(discrepancy(a, human_action), critic.risk(state, a), thresholds,
                        clauses);
}

Mode advance_mode(Mode mode, bool intervene_result, bool cede_result) {
  if (mode == Mode::autonomous) return intervene_result ? Mode::supervisor : Mode::autonomous;
  return cede_result ? Mode::autonomous : Mode::supervisor;
}

ThriftyGate::ThriftyGate(const EnsemblePolicy& policy, const RiskCritic& critic,
                         const GateThresholds& thresholds, GateClauses clauses)
    : policy_(&policy), critic_(&critic), thresholds_(&thresholds), clauses_(clauses) {}

std::optional<SwitchCause> ThriftyGate::intervene(const GateQuery& query) {
  const auto members = policy_->member_actions(query.state);
  const env::Action a = mean_action(members);
  scores_.novelty = novelty_of(members);
  scores_.risk = critic_->risk(query.state, a);
  return intervene_on_scores(*scores_.novelty, *scores_.risk, *thresholds_, clauses_);
}

bool ThriftyGate::cede(const CedeQuery& query) {
  const auto members = policy_->member_actions(query.state);
  const env::Action a = mean_action(members);
  scores_.novelty = novelty_of(members);
  scores_.risk = critic_->risk(query.state, a);
  return cede_on_scores(discrepancy(a, query.human_action), *scores_.risk, *thresholds_,
                        clauses_);
}

std::unique_ptr<Gate> ThriftyGate::clone() const { return std::make_unique<ThriftyGate>(*this); }

}  // namespace thrifty
