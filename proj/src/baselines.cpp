#include "thrifty/baselines.hpp"

#include <random>
#include <stdexcept>

namespace thrifty {

namespace {

std::vector<int> classifier_layout(const ClassifierConfig& config) {
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  sizes.push_back(1);
  return sizes;
}

}  // namespace

void ClassifierConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("classifier: batch_size must be >= 1");
  if (init_steps < 0 || update_steps < 0) {
    throw std::invalid_argument("classifier: step counts must be non-negative");
  }
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw std::invalid_argument("classifier: decision_threshold must lie in (0, 1)");
  }
  for (int h : hidden_sizes) {
    if (h <= 0) throw std::invalid_argument("classifier: hidden sizes must be positive");
  }
}

DiscrepancyClassifier::DiscrepancyClassifier(const ClassifierConfig& config, std::uint64_t seed)
    : config_(config),
      net_(classifier_layout(config), nn::Activation::relu, nn::Activation::sigmoid, seed),
      optimizer_(net_) {
  config_.validate();
}

DiscrepancyClassifier::DiscrepancyClassifier(nn::Mlp network, const ClassifierConfig& config)
    : config_(config), net_(std::move(network)), optimizer_(net_) {
  config_.validate();
  if (net_.input_dim() != 2 || net_.output_dim() != 1 ||
      net_.output_activation() != nn::Activation::sigmoid) {
    throw std::invalid_argument("classifier network must map 2 inputs to one sigmoid output");
  }
}

double DiscrepancyClassifier::unsafe_probability(const env::Position& s) const {
  return net_.forward(policy_features(s))(0);
}

bool DiscrepancyClassifier::unsafe(const env::Position& s) const {
  return unsafe_probability(s) > config_.decision_threshold;
}

std::vector<double> train_classifier(DiscrepancyClassifier& classifier,
                                     std::span<const env::Position> states,
                                     std::span<const double> labels, int steps, Rng& rng) {
  if (states.empty()) throw std::invalid_argument("train_classifier: no states");
  if (states.size() != labels.size()) {
    throw std::invalid_argument("train_classifier: states and labels differ in length");
  }
  std::vector<double> losses;
  if (steps <= 0) return losses;
  const int batch = classifier.config_.batch_size;
  std::uniform_int_distribution<std::size_t> pick(0, states.size() - 1);
  nn::Matrix x(2, batch);
  std::vector<double> y(static_cast<std::size_t>(batch));
  for (int step = 0; step < steps; ++step) {
    for (int b = 0; b < batch; ++b) {
      const auto i = pick(rng);
      x.col(b) = policy_features(states[i]);
      y[b] = labels[i];
    }
    const auto cache = classifier.net_.forward_cached(x);
    nn::Matrix upstream(1, batch);
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      const double err = cache.output()(0, b) - y[b];
      loss += err * err;
      upstream(0, b) = 2.0 * err / batch;
    }
    losses.push_back(loss / batch);
    nn::adam_step(classifier.net_, classifier.net_.backward_cached(cache, upstream),
                  classifier.optimizer_, classifier.config_.learning_rate);
  }
  return losses;
}

LabelledStates discrepancy_labels(const EnsemblePolicy& policy, const Dataset& dataset,
                                  double threshold) {
  LabelledStates out;
  std::vector<env::Action> labels;
  for (const auto& t : dataset.transitions) {
    if (t.source != SourceMode::supervisor || t.goal_flag) continue;
    out.states.push_back(t.state);
    labels.push_back(t.action);
  }
  const auto robot = policy.act_batch(out.states);
  out.labels.reserve(robot.size());
  for (std::size_t i = 0; i < robot.size(); ++i) {
    const double d = normalized_discrepancy(robot[i], labels[i], policy.action_max());
    out.labels.push_back(d > threshold ? 1.0 : 0.0);
  }
  return out;
}

SafeDaggerGate::SafeDaggerGate(const DiscrepancyClassifier& classifier)
    : classifier_(&classifier) {}

std::optional<SwitchCause> SafeDaggerGate::intervene(const GateQuery& query) {
  if (classifier_->unsafe(query.state)) return SwitchCause::external;
  return std::nullopt;
}

bool SafeDaggerGate::cede(const CedeQuery& query) {
  return !classifier_->unsafe(query.next_state);
}

std::unique_ptr<Gate> SafeDaggerGate::clone() const {
  return std::make_unique<SafeDaggerGate>(*this);
}

LazyDaggerGate::LazyDaggerGate(const DiscrepancyClassifier& classifier, double tau_a,
                               double action_scale)
    : classifier_(&classifier), tau_a_(tau_a), action_scale_(action_scale) {}

std::optional<SwitchCause> LazyDaggerGate::intervene(const GateQuery& query) {
  if (classifier_->unsafe(query.state)) return SwitchCause::external;
  return std::nullopt;
}

bool LazyDaggerGate::cede(const CedeQuery& query) {
  ++measured_exit_checks_;
  return normalized_discrepancy(query.robot_action, query.human_action, action_scale_) < tau_a_;
}

std::unique_ptr<Gate> LazyDaggerGate::clone() const {
  return std::make_unique<LazyDaggerGate>(*this);
}

HgGate::HgGate(SyntheticGaterConfig gater, OracleConfig oracle, env::EnvConfig env)
    : gater_(gater), oracle_(oracle), env_(env) {
  gater_.validate();
}

void HgGate::begin_episode(int /*robot_id*/) { state_ = {}; }

std::optional<SwitchCause> HgGate::intervene(const GateQuery& query) {
  const env::Action expert = oracle_action(oracle_, env_, query.state);
  if (synthetic_gater_decide(gater_, state_, query.robot_action, expert) ==
      GaterDecision::engage) {
    return SwitchCause::external;
  }
  return std::nullopt;
}

bool HgGate::cede(const CedeQuery& query) {
  return synthetic_gater_decide(gater_, state_, query.robot_action, query.human_action) ==
         GaterDecision::disengage;
}

std::unique_ptr<Gate> HgGate::clone() const { return std::make_unique<HgGate>(*this); }

}  // namespace thrifty
