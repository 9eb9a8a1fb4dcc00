#include "thrifty/critic.hpp"

#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>

namespace thrifty {

namespace {

std::vector<int> critic_layout(const CriticConfig& config) {
  std::vector<int> sizes{4};
  sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  sizes.push_back(1);
  return sizes;
}

}  // namespace

void CriticConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("critic: batch_size must be >= 1");
  if (!(goal_fraction >= 0.0 && goal_fraction <= 1.0)) {
    throw std::invalid_argument("critic: goal_fraction must lie in [0, 1]");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("critic: gamma must lie in [0, 1]");
  if (target_refresh < 1) throw std::invalid_argument("critic: target_refresh must be >= 1");
  if (init_steps < 0 || update_steps < 0) {
    throw std::invalid_argument("critic: step counts must be non-negative");
  }
  for (int h : hidden_sizes) {
    if (h <= 0) throw std::invalid_argument("critic: hidden sizes must be positive");
  }
}

nn::Vector critic_features(const env::Position& s, const env::Action& a, double action_max) {
  nn::Vector v(4);
  v << 2.0 * s.x - 1.0, 2.0 * s.y - 1.0, a.dx / action_max, a.dy / action_max;
  return v;
}

RiskCritic::RiskCritic(const CriticConfig& config, double action_max, std::uint64_t seed)
    : config_(config),
      action_max_(action_max),
      net_(critic_layout(config), nn::Activation::relu, nn::Activation::sigmoid, seed),
      target_net_(net_),
      optimizer_(net_) {
  config_.validate();
}

RiskCritic::RiskCritic(nn::Mlp network, const CriticConfig& config, double action_max)
    : config_(config), action_max_(action_max), net_(std::move(network)) {
  config_.validate();
  if (net_.input_dim() != 4 || net_.output_dim() != 1 ||
      net_.output_activation() != nn::Activation::sigmoid) {
    throw std::invalid_argument("critic network must map 4 inputs to one sigmoid output");
  }
  target_net_ = net_;
  optimizer_ = nn::AdamState(net_);
}

nn::Matrix RiskCritic::features(std::span<const env::Position> states,
                                std::span<const env::Action> actions) const {
  if (states.size() != actions.size()) {
    throw std::invalid_argument("critic: states and actions differ in length");
  }
  nn::Matrix x(4, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = critic_features(states[i], actions[i], action_max_);
  }
  return x;
}

double RiskCritic::q_value(const env::Position& s, const env::Action& a) const {
  return net_.forward(critic_features(s, a, action_max_))(0);
}

double RiskCritic::risk(const env::Position& s, const env::Action& a) const {
  return 1.0 - q_value(s, a);
}

std::vector<double> RiskCritic::q_batch(std::span<const env::Position> states,
                                        std::span<const env::Action> actions) const {
  const nn::Matrix y = net_.forward_batch(features(states, actions));
  return {y.data(), y.data() + y.size()};
}

std::vector<double> RiskCritic::risk_batch(std::span<const env::Position> states,
                                           std::span<const env::Action> actions) const {
  auto q = q_batch(states, actions);
  for (auto& v : q) v = 1.0 - v;
  return q;
}

double RiskCritic::frozen_q_value(const env::Position& s, const env::Action& a) const {
  return target_net_.forward(critic_features(s, a, action_max_))(0);
}

std::vector<double> RiskCritic::frozen_q_batch(std::span<const env::Position> states,
                                               std::span<const env::Action> actions) const {
  const nn::Matrix y = target_net_.forward_batch(features(states, actions));
  return {y.data(), y.data() + y.size()};
}

void RiskCritic::sync_target() { target_net_ = net_; }

double td_target(const RiskCritic& critic, const env::PolicyFn& policy,
                 const Transition& transition) {
  if (transition.goal_flag) return 1.0;
  const env::Action next_action = policy(transition.next_state);
  return critic.config().gamma * critic.frozen_q_value(transition.next_state, next_action);
}

double td_target(const RiskCritic& critic, const EnsemblePolicy& policy,
                 const Transition& transition) {
  return td_target(
      critic, [&policy](const env::Position& s) { return policy.act(s); }, transition);
}

CriticBatchSampler::CriticBatchSampler(const Dataset& dataset, const CriticConfig& config)
    : total_(dataset.size()), batch_size_(config.batch_size) {
  if (dataset.empty()) throw std::invalid_argument("train_critic: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (dataset.transitions[i].goal_flag ? goal_ : other_).push_back(i);
  }
  // The small epsilon keeps products like 0.1 * 50 from rounding up a slot.
  goal_slots_ = static_cast<int>(
      std::ceil(config.goal_fraction * static_cast<double>(config.batch_size) - 1e-9));
  balanced_ = !goal_.empty() && !other_.empty();
  if (!balanced_) goal_slots_ = 0;
}

std::vector<std::size_t> CriticBatchSampler::sample(Rng& rng) const {
  std::vector<std::size_t> batch;
  batch.reserve(static_cast<std::size_t>(batch_size_));
  if (!balanced_) {
    std::uniform_int_distribution<std::size_t> any(0, total_ - 1);
    for (int b = 0; b < batch_size_; ++b) batch.push_back(any(rng));
    return batch;
  }
  std::uniform_int_distribution<std::size_t> pick_goal(0, goal_.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, other_.size() - 1);
  for (int b = 0; b < goal_slots_; ++b) batch.push_back(goal_[pick_goal(rng)]);
  for (int b = goal_slots_; b < batch_size_; ++b) batch.push_back(other_[pick_other(rng)]);
  return batch;
}

std::vector<double> train_critic(RiskCritic& critic, const Dataset& dataset,
                                 const EnsemblePolicy& policy, int steps, Rng& rng) {
  const CriticBatchSampler sampler(dataset, critic.config_);
  std::vector<double> losses;
  if (steps <= 0) return losses;
  if (dataset.goal_count() == 0) {
    std::clog << "warning: critic dataset has no goal-flagged transitions; sampling uniformly\n";
  }
  const int batch = critic.config_.batch_size;
  const double gamma = critic.config_.gamma;
  losses.reserve(static_cast<std::size_t>(steps));

  std::vector<env::Position> states(batch), next_states(batch);
  std::vector<env::Action> actions(batch);
  for (int step = 0; step < steps; ++step) {
    const auto idx = sampler.sample(rng);
    for (int b = 0; b < batch; ++b) {
      const Transition& t = dataset.transitions[idx[b]];
      states[b] = t.state;
      actions[b] = t.action;
      next_states[b] = t.next_state;
    }
    const auto next_actions = policy.act_batch(next_states);
    const auto bootstrap = critic.frozen_q_batch(next_states, next_actions);

    const auto cache = critic.net_.forward_cached(critic.features(states, actions));
    nn::Matrix upstream(1, batch);
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      const double target = dataset.transitions[idx[b]].goal_flag ? 1.0 : gamma * bootstrap[b];
      const double err = cache.output()(0, b) - target;
      loss += err * err;
      upstream(0, b) = 2.0 * err / batch;
    }
    losses.push_back(loss / batch);
    nn::adam_step(critic.net_, critic.net_.backward_cached(cache, upstream), critic.optimizer_,
                  critic.config_.learning_rate);
    if (++critic.step_count_ % static_cast<std::uint64_t>(critic.config_.target_refresh) == 0) {
      critic.sync_target();
    }
  }
  return losses;
}

std::vector<Rollout> collect_eval_rollouts(const env::PolicyFn& policy,
                                           const env::EnvConfig& env, int k, Rng& rng) {
  if (k < 0) throw std::invalid_argument("collect_eval_rollouts: k must be >= 0");
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e) {
    Rollout r;
    env::Position s = env::reset(env, rng);
    for (int t = 0; t < env.horizon; ++t) {
      const env::Action a = env::clip_action(env, policy(s));
      const auto res = env::step(env, s, a, rng);
      r.transitions.push_back(make_transition(env, s, a, res.next_state, SourceMode::autonomous));
      ++r.steps;
      s = res.next_state;
      if (res.reached_goal) {
        r.success = true;
        r.transitions.push_back(goal_transition(env, s, policy(s), SourceMode::autonomous));
        break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void append_rollouts(Dataset& dataset, const std::vector<Rollout>& rollouts) {
  for (const auto& r : rollouts) {
    dataset.transitions.insert(dataset.transitions.end(), r.transitions.begin(),
                               r.transitions.end());
  }
}

}  // namespace thrifty
