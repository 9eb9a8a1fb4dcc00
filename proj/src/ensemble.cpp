#include "thrifty/ensemble.hpp"

#include <random>
#include <stdexcept>

namespace thrifty {

namespace {

std::vector<int> member_layout(const PolicyTrainingConfig& config) {
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  sizes.push_back(2);
  return sizes;
}

nn::Matrix features_batch(std::span<const env::Position> states) {
  nn::Matrix x(2, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = policy_features(states[i]);
  }
  return x;
}

}  // namespace

void PolicyTrainingConfig::validate() const {
  if (ensemble_size < 1) throw std::invalid_argument("policy: ensemble_size must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("policy: batch_size must be >= 1");
  if (epochs < 0 || steps_per_epoch < 0 || retrain_steps < 0) {
    throw std::invalid_argument("policy: step counts must be non-negative");
  }
  for (int h : hidden_sizes) {
    if (h <= 0) throw std::invalid_argument("policy: hidden sizes must be positive");
  }
}

nn::Vector policy_features(const env::Position& s) {
  nn::Vector v(2);
  v << 2.0 * s.x - 1.0, 2.0 * s.y - 1.0;
  return v;
}

EnsemblePolicy::EnsemblePolicy(const PolicyTrainingConfig& config, double action_max,
                               std::uint64_t seed)
    : action_max_(action_max) {
  config.validate();
  for (int k = 0; k < config.ensemble_size; ++k) {
    members_.emplace_back(member_layout(config), nn::Activation::relu, nn::Activation::tanh,
                          derive_seed(seed, static_cast<std::uint64_t>(k)));
    optimizers_.emplace_back(members_.back());
  }
}

EnsemblePolicy::EnsemblePolicy(std::vector<nn::Mlp> members, double action_max)
    : members_(std::move(members)), action_max_(action_max) {
  if (members_.empty()) throw std::invalid_argument("ensemble needs at least one member");
  for (const auto& m : members_) {
    if (m.layer_sizes() != members_.front().layer_sizes() ||
        m.input_dim() != 2 || m.output_dim() != 2) {
      throw std::invalid_argument("ensemble members must share a 2-in/2-out architecture");
    }
  }
  reset_optimizers();
}

void EnsemblePolicy::reset_optimizers() {
  optimizers_.clear();
  for (const auto& m : members_) optimizers_.emplace_back(m);
}

std::vector<env::Action> EnsemblePolicy::member_actions(const env::Position& s) const {
  const nn::Vector x = policy_features(s);
  std::vector<env::Action> out;
  out.reserve(members_.size());
  for (const auto& m : members_) {
    const nn::Vector y = m.forward(x);
    out.push_back({action_max_ * y(0), action_max_ * y(1)});
  }
  return out;
}

env::Action EnsemblePolicy::act(const env::Position& s) const {
  const auto outs = member_actions(s);
  return mean_action(outs);
}

double EnsemblePolicy::novelty(const env::Position& s) const {
  const auto outs = member_actions(s);
  return novelty_of(outs);
}

EnsemblePolicy::BatchOutput EnsemblePolicy::evaluate_batch(
    std::span<const env::Position> states) const {
  const auto n = static_cast<Eigen::Index>(states.size());
  const nn::Matrix x = features_batch(states);
  const double k = static_cast<double>(members_.size());
  std::vector<nn::Matrix> outputs;
  outputs.reserve(members_.size());
  nn::Matrix mean = nn::Matrix::Zero(2, n);
  for (const auto& m : members_) {
    outputs.push_back(action_max_ * m.forward_batch(x));
    mean += outputs.back();
  }
  mean /= k;
  nn::Matrix var = nn::Matrix::Zero(2, n);
  for (const auto& y : outputs) var += (y - mean).cwiseAbs2();
  var /= k;

  BatchOutput out;
  out.mean_actions.reserve(states.size());
  out.novelty.reserve(states.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.mean_actions.push_back({mean(0, i), mean(1, i)});
    out.novelty.push_back(members_.size() < 2 ? 0.0 : 0.5 * (var(0, i) + var(1, i)));
  }
  return out;
}

std::vector<env::Action> EnsemblePolicy::act_batch(std::span<const env::Position> states) const {
  return evaluate_batch(states).mean_actions;
}

bool EnsemblePolicy::operator==(const EnsemblePolicy& other) const {
  return action_max_ == other.action_max_ && members_ == other.members_;
}

env::Action mean_action(std::span<const env::Action> member_outputs) {
  if (member_outputs.empty()) throw std::invalid_argument("mean_action: no members");
  env::Action m;
  for (const auto& a : member_outputs) {
    m.dx += a.dx;
    m.dy += a.dy;
  }
  const double k = static_cast<double>(member_outputs.size());
  return {m.dx / k, m.dy / k};
}

double novelty_of(std::span<const env::Action> member_outputs) {
  if (member_outputs.size() < 2) return 0.0;
  const env::Action m = mean_action(member_outputs);
  double vx = 0.0;
  double vy = 0.0;
  for (const auto& a : member_outputs) {
    vx += (a.dx - m.dx) * (a.dx - m.dx);
    vy += (a.dy - m.dy) * (a.dy - m.dy);
  }
  const double k = static_cast<double>(member_outputs.size());
  return 0.5 * (vx / k + vy / k);
}

double discrepancy(const env::Action& a, const env::Action& b) {
  const double dx = a.dx - b.dx;
  const double dy = a.dy - b.dy;
  return dx * dx + dy * dy;
}

void train_members(EnsemblePolicy& policy, const Dataset& dataset,
                   const PolicyTrainingConfig& config, int steps, Rng& rng) {
  std::vector<const Transition*> labelled;
  for (const auto& t : dataset.transitions) {
    if (t.source == SourceMode::supervisor && !t.goal_flag) labelled.push_back(&t);
  }
  if (labelled.empty()) {
    throw std::invalid_argument("behavior cloning needs at least one supervisor transition");
  }
  if (steps <= 0) return;

  const auto n = labelled.size();
  const int batch = config.batch_size;
  const double scale = policy.action_max_;
  const double grad_scale = 2.0 / (static_cast<double>(batch) * 2.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  nn::Matrix x(2, batch);
  nn::Matrix target(2, batch);
  for (std::size_t k = 0; k < policy.members_.size(); ++k) {
    auto& net = policy.members_[k];
    auto& opt = policy.optimizers_[k];
    std::vector<std::size_t> bootstrap(n);
    for (auto& idx : bootstrap) idx = pick(rng);
    std::uniform_int_distribution<std::size_t> pick_boot(0, n - 1);
    for (int s = 0; s < steps; ++s) {
      for (int b = 0; b < batch; ++b) {
        const Transition& t = *labelled[bootstrap[pick_boot(rng)]];
        x.col(b) = policy_features(t.state);
        target(0, b) = t.action.dx / scale;
        target(1, b) = t.action.dy / scale;
      }
      const auto cache = net.forward_cached(x);
      const nn::Matrix upstream = grad_scale * (cache.output() - target);
      nn::adam_step(net, net.backward_cached(cache, upstream), opt, config.learning_rate);
    }
  }
}

EnsemblePolicy fit_bc(const Dataset& dataset, const PolicyTrainingConfig& config,
                      double action_max, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("fit_bc: empty dataset");
  EnsemblePolicy policy(config, action_max, rng());
  train_members(policy, dataset, config, config.epochs * config.steps_per_epoch, rng);
  return policy;
}

void retrain(EnsemblePolicy& policy, const Dataset& dataset,
             const PolicyTrainingConfig& config, Rng& rng) {
  if (config.retrain_from_scratch) {
    policy = fit_bc(dataset, config, policy.action_max(), rng);
    return;
  }
  train_members(policy, dataset, config, config.retrain_steps, rng);
}

}  // namespace thrifty
