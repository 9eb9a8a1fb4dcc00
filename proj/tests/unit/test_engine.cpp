#include <doctest.h>

#include <cmath>
#include <limits>

#include "thrifty/engine.hpp"

using namespace thrifty;
using env::Position;

namespace {

RunConfig small_run(Algorithm a, std::uint64_t seed = 1) {
  RunConfig c;
  c.algorithm = a;
  c.seed = seed;
  c.interactive_steps = 300;
  c.num_demos = 10;
  c.offline_rollouts = 5;
  c.rollouts_per_refresh = 5;
  c.rollout_interval_steps = 150;
  c.policy.hidden_sizes = {16, 16};
  c.policy.ensemble_size = 3;
  c.policy.epochs = 2;
  c.policy.steps_per_epoch = 200;
  c.policy.retrain_steps = 20;
  c.critic.hidden_sizes = {16, 16};
  c.critic.init_steps = 200;
  c.critic.update_steps = 20;
  c.classifier.hidden_sizes = {16, 16};
  c.classifier.init_steps = 200;
  c.classifier.update_steps = 20;
  return c;
}

DiscrepancyClassifier constant_classifier(double logit) {
  nn::Mlp net({2, 1}, nn::Activation::identity, nn::Activation::sigmoid, 0);
  net.for_each_parameter([](double& p) { p = 0.0; });
  net.layers()[0].bias(0) = logit;
  return DiscrepancyClassifier(net, ClassifierConfig{});
}

void check_run_invariants(const RunConfig& c, const RunResult& r) {
  CHECK(r.interactive_steps <= c.interactive_steps);
  long steps = 0;
  for (const auto& e : r.episodes) {
    steps += e.stats.length();
    CHECK(e.steps_consumed == steps);
  }
  CHECK(steps == r.interactive_steps);
  for (const auto& t : r.d_h.transitions) CHECK(t.source == SourceMode::supervisor);
  for (const auto& t : r.d_r.transitions) CHECK(t.source == SourceMode::autonomous);
  for (const auto& t : r.d_h.transitions) {
    if (t.goal_flag) CHECK(t.state == t.next_state);
  }
}

}  // namespace

TEST_CASE("demo collection") {
  env::EnvConfig e;
  e.process_noise_std = 0.0;
  e.start_x = {0.1, 0.1};
  e.start_y = {0.3, 0.3};
  Rng a(1), b(1);
  const Dataset one = collect_demos(e, OracleConfig{}, 1, a);
  CHECK(one == collect_demos(e, OracleConfig{}, 1, b));
  REQUIRE_FALSE(one.empty());
  CHECK(one.transitions.back().goal_flag);
  CHECK(one.goal_count() == 1);

  Rng c(2);
  CHECK_THROWS(collect_demos(e, OracleConfig{}, 0, c));

  const env::EnvConfig desk;
  Rng d(3);
  const Dataset thirty = collect_demos(desk, OracleConfig{}, 30, d);
  // Start x <= 0.2 and goal x >= 0.85 need at least 13 steps of 0.05.
  CHECK(thirty.size() >= 30u * 13u);
  CHECK(thirty.size() <= 30u * static_cast<std::size_t>(desk.horizon + 1));
  for (const auto& t : thirty.transitions) CHECK(t.source == SourceMode::supervisor);
}

TEST_CASE("run config validation") {
  RunConfig c;
  c.algorithm = Algorithm::bc;
  c.clauses.risk = false;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  RunConfig d;
  d.clauses = {false, false};
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  for (Algorithm a : {Algorithm::thrifty, Algorithm::bc, Algorithm::safedagger, Algorithm::lazydagger,
                      Algorithm::hgdagger}) {
    CHECK(algorithm_from_string(to_string(a)) == a);
  }
  CHECK_THROWS(algorithm_from_string("dagger"));
}

TEST_CASE("zero episodes returns the initial policy") {
  RunConfig c = small_run(Algorithm::thrifty);
  c.max_episodes = 0;
  const RunResult r = run_thrifty(c);
  CHECK(r.episodes.empty());
  CHECK(r.interactive_steps == 0);
  CHECK(r.thresholds.has_value());
  CHECK(r.threshold_history.size() == 1);
  Rng rng = make_rng(c.seed, 1);
  const Dataset demos = collect_demos(c.env, c.oracle, c.num_demos, rng);
  CHECK(r.d_h == demos);
}

TEST_CASE("thrifty run bookkeeping") {
  const RunConfig c = small_run(Algorithm::thrifty, 4);
  std::vector<EpisodeRecord> seen;
  const RunResult r = run_thrifty(c, nullptr, [&](const EpisodeRecord& e) { seen.push_back(e); });
  CHECK(seen.size() == r.episodes.size());
  check_run_invariants(c, r);
  CHECK(r.interactive_steps == c.interactive_steps);
  CHECK(r.episodes.back().truncated == (r.episodes.back().stats.length() < c.env.horizon &&
                                        !r.episodes.back().stats.success));
  for (const auto& t : r.threshold_history) CHECK(t.tau_a <= t.tau_h);
  for (const auto& e : r.episodes) {
    REQUIRE(e.thresholds.has_value());
    CHECK(static_cast<int>(e.stats.switch_causes.size()) == e.stats.ints);
    for (auto cause : e.stats.switch_causes) CHECK(cause != SwitchCause::external);
  }
}

TEST_CASE("same seed, same run") {
  const RunConfig c = small_run(Algorithm::thrifty, 9);
  const RunResult a = run_thrifty(c);
  const RunResult b = run_thrifty(c);
  CHECK(a.policy == b.policy);
  CHECK(a.threshold_history == b.threshold_history);
  CHECK(a.d_h == b.d_h);
}

TEST_CASE("alpha of one asks for help almost always") {
  RunConfig c = small_run(Algorithm::thrifty, 2);
  c.alpha_h = 1.0;
  c.interactive_steps = 200;
  const RunResult r = run_thrifty(c);
  const auto scores = score_states(r.policy, *r.critic, r.d_r);
  long h = 0, total = 0;
  for (const auto& e : r.episodes) {
    h += e.stats.acts_h;
    total += e.stats.length();
  }
  CHECK(static_cast<double>(h) / total >= 0.9);
  // Each retune places tau_h at the smallest observed risk.
  const auto& last = r.threshold_history.back();
  CHECK(last.tau_h == *std::min_element(scores.risk.begin(), scores.risk.end()));
  CHECK(last.delta_h == *std::min_element(scores.novelty.begin(), scores.novelty.end()));
}

TEST_CASE("clause ablation leaves one cause") {
  RunConfig c = small_run(Algorithm::thrifty, 5);
  c.clauses.novelty = false;
  const RunResult r = run_thrifty(c);
  for (const auto& e : r.episodes) {
    for (auto cause : e.stats.switch_causes) CHECK(cause == SwitchCause::risk);
  }
}

TEST_CASE("behavior cloning baseline") {
  const RunConfig c = small_run(Algorithm::bc, 3);
  const RunResult a = run_bc(c);
  CHECK(a.policy == run_bc(c).policy);
  CHECK(a.episodes.empty());
  RunConfig one = c;
  one.bc_demo_multiplier = 1.0;
  CHECK(a.d_h.size() > run_bc(one).d_h.size());
}

TEST_CASE("classifier separates separable labels") {
  std::vector<Position> states;
  std::vector<double> labels;
  Rng rng(4);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 400; ++i) {
    const Position s{u(rng), u(rng)};
    states.push_back(s);
    labels.push_back(s.x > 0.5 ? 1.0 : 0.0);
  }
  ClassifierConfig cfg;
  cfg.hidden_sizes = {16, 16};
  DiscrepancyClassifier clf(cfg, 1);
  train_classifier(clf, states, labels, 2000, rng);
  int right = 0;
  for (std::size_t i = 0; i < states.size(); ++i) right += clf.unsafe(states[i]) == (labels[i] > 0.5);
  CHECK(right > 0.95 * states.size());
  CHECK_THROWS(train_classifier(clf, states, std::vector<double>{1.0}, 1, rng));
}

TEST_CASE("safe threshold marks a minority of held-out demo states") {
  const RunConfig c;
  Rng demo_rng(1), hold_rng(2), fit_rng(3);
  const Dataset demos = collect_demos(c.env, c.oracle, c.num_demos, demo_rng);
  const Dataset held = collect_demos(c.env, c.oracle, 20, hold_rng);
  const EnsemblePolicy pol = fit_bc(demos, c.policy, c.env.action_max, fit_rng);
  const auto l = discrepancy_labels(pol, held, c.safedagger_tau);
  double unsafe = 0.0;
  for (double v : l.labels) unsafe += v;
  const double frac = unsafe / l.labels.size();
  MESSAGE("unsafe fraction at 0.008: " << frac);
  CHECK(frac >= 0.05);
  CHECK(frac <= 0.35);
}

TEST_CASE("always-safe classifier never hands over") {
  const RunConfig c = small_run(Algorithm::safedagger);
  Rng rng(1);
  const EnsemblePolicy pol(c.policy, c.env.action_max, 2);
  const DiscrepancyClassifier safe = constant_classifier(-50.0);
  SafeDaggerGate gate(safe);
  OracleSupervisor oracle(c.oracle, c.env);
  const EvalStats s = evaluate(pol, c.env, 5, rng, &oracle, &gate);
  for (const auto& e : s.stats) CHECK(e.ints == 0);
}

TEST_CASE("lazy gate exits on measured discrepancy only") {
  const DiscrepancyClassifier unsafe = constant_classifier(50.0);
  LazyDaggerGate gate(unsafe, 0.25 * 0.015, 0.05);
  CHECK(gate.intervene({0, 1, {0.3, 0.3}, {0.0, 0.0}}) == SwitchCause::external);
  // Far from the human action: stay, although the classifier is irrelevant.
  CHECK_FALSE(gate.cede({0, 2, {0.3, 0.3}, {0.05, 0.0}, {0.0, 0.0}, {0.3, 0.3}}));
  CHECK(gate.cede({0, 3, {0.3, 0.3}, {0.001, 0.0}, {0.0, 0.0}, {0.3, 0.3}}));
  CHECK(gate.measured_exit_checks() == 2);
  CHECK(gate.predicted_exit_checks() == 0);
}

TEST_CASE("hg gater extremes") {
  const RunConfig c = small_run(Algorithm::hgdagger);
  const EnsemblePolicy pol(c.policy, c.env.action_max, 5);
  OracleSupervisor oracle(c.oracle, c.env);

  SyntheticGaterConfig never = c.gater;
  never.engage_discrepancy = std::numeric_limits<double>::infinity();
  HgGate quiet(never, c.oracle, c.env);
  Rng a(7), b(7);
  const auto gated = run_gated_episode(c.env, pol, oracle, quiet, c.env.horizon, a);
  NeverGate none;
  const auto plain = run_gated_episode(c.env, pol, oracle, none, c.env.horizon, b);
  CHECK(gated.autonomous_transitions == plain.autonomous_transitions);
  CHECK(gated.supervisor_transitions.empty());

  SyntheticGaterConfig always = c.gater;
  always.engage_discrepancy = -1.0;
  HgGate eager(always, c.oracle, c.env);
  Rng d(8);
  const auto held = run_gated_episode(c.env, pol, oracle, eager, c.env.horizon, d);
  CHECK(held.autonomous_transitions.empty());
  CHECK_FALSE(held.supervisor_transitions.empty());
}

TEST_CASE("baseline runs keep their bookkeeping") {
  for (Algorithm a : {Algorithm::safedagger, Algorithm::lazydagger, Algorithm::hgdagger}) {
    const RunConfig c = small_run(a, 6);
    const RunResult r = run(c);
    check_run_invariants(c, r);
    CHECK(r.interactive_steps == c.interactive_steps);
    for (const auto& e : r.episodes) {
      for (auto cause : e.stats.switch_causes) CHECK(cause == SwitchCause::external);
    }
    if (a != Algorithm::hgdagger) CHECK(r.classifier.has_value());
  }
}

TEST_CASE("budget truncates the last episode") {
  RunConfig c = small_run(Algorithm::hgdagger, 2);
  c.interactive_steps = 37;
  const RunResult r = run(c);
  CHECK(r.interactive_steps == 37);
  CHECK(r.episodes.back().steps_consumed == 37);
}

TEST_CASE("evaluation is reproducible") {
  const RunConfig c = small_run(Algorithm::bc);
  const EnsemblePolicy pol(c.policy, c.env.action_max, 1);
  Rng a(3), b(3);
  const auto x = evaluate(pol, c.env, 1, a);
  const auto y = evaluate(pol, c.env, 1, b);
  CHECK(x.stats == y.stats);
  CHECK_THROWS(evaluate(pol, c.env, 0, a));
}
