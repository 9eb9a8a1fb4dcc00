#include <doctest.h>

#include <cmath>
#include <thread>

#include "thrifty/supervisor.hpp"

using namespace thrifty;
using env::Action;
using env::Position;

namespace {

env::EnvConfig noiseless() {
  env::EnvConfig c;
  c.process_noise_std = 0.0;
  return c;
}

}  // namespace

TEST_CASE("reset stays in the start region and is seeded") {
  const env::EnvConfig c;
  Rng a(3), b(3);
  CHECK(env::reset(c, a) == env::reset(c, b));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Position p = env::reset(c, rng);
    CHECK(p.x >= 0.05);
    CHECK(p.x <= 0.2);
    CHECK(p.y >= 0.1);
    CHECK(p.y <= 0.9);
  }
  env::EnvConfig point = c;
  point.start_x = {0.1, 0.1};
  point.start_y = {0.3, 0.3};
  CHECK(env::reset(point, rng) == Position{0.1, 0.3});
}

TEST_CASE("wall blocks outside the gap") {
  Rng rng(0);
  const auto r = env::step(noiseless(), {0.48, 0.2}, {0.05, 0.0}, rng);
  CHECK(r.next_state.x == doctest::Approx(0.49).epsilon(1e-12));
  CHECK(r.next_state.y == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_FALSE(r.reached_goal);

  // From the right the clamp goes to the right face.
  const auto back = env::step(noiseless(), {0.53, 0.8}, {-0.05, 0.0}, rng);
  CHECK(back.next_state.x == doctest::Approx(0.51).epsilon(1e-12));

  // y keeps moving while x is clamped.
  const auto slide = env::step(noiseless(), {0.48, 0.2}, {0.05, 0.03}, rng);
  CHECK(slide.next_state.x == doctest::Approx(0.49).epsilon(1e-12));
  CHECK(slide.next_state.y == doctest::Approx(0.23).epsilon(1e-12));
}

TEST_CASE("gap lets the robot through") {
  Rng rng(0);
  const auto r = env::step(noiseless(), {0.48, 0.5}, {0.05, 0.0}, rng);
  CHECK(r.next_state.x == doctest::Approx(0.53).epsilon(1e-12));
  CHECK(r.next_state.y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("step clips actions and stays in the arena") {
  Rng rng(0);
  const auto r = env::step(noiseless(), {0.98, 0.02}, {1.0, -1.0}, rng);
  CHECK(r.next_state.x == 1.0);
  CHECK(r.next_state.y == 0.0);
  CHECK_THROWS_AS(env::step(noiseless(), {0.1, 0.1}, {NAN, 0.0}, rng), std::invalid_argument);
  env::EnvConfig noisy;
  noisy.process_noise_std = 0.2;
  for (int i = 0; i < 500; ++i) CHECK(env::in_arena(env::step(noisy, {0.5, 0.99}, {0.0, 0.05}, rng).next_state));
}

TEST_CASE("goal indicator") {
  const env::EnvConfig c;
  Rng rng(0);
  CHECK(env::step(noiseless(), {0.9, 0.5}, {0.0, 0.0}, rng).reached_goal);
  CHECK(env::goal_indicator(c, {0.9, 0.5}));
  CHECK(env::goal_indicator(c, {0.9, 0.55}));
  CHECK_FALSE(env::goal_indicator(c, {0.1, 0.1}));
}

TEST_CASE("clip_action") {
  const env::EnvConfig c;
  CHECK(env::clip_action(c, {0.2, -0.2}) == Action{0.05, -0.05});
  CHECK(env::clip_action(c, {0.01, 0.0}) == Action{0.01, 0.0});
  CHECK(env::clip_action(c, {-1.0, 1.0}) == Action{-0.05, 0.05});
}

TEST_CASE("env config validation") {
  env::EnvConfig c;
  c.goal_center = {0.52, 0.5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  env::EnvConfig d;
  d.action_max = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("oracle actions") {
  const OracleConfig o;
  const env::EnvConfig c = noiseless();
  CHECK(oracle_action(o, c, {0.1, 0.5}) == Action{0.05, 0.0});
  const Action mid = oracle_action(o, c, {0.5, 0.5});
  CHECK(mid.dx == doctest::Approx(0.05));
  CHECK(mid.dy == doctest::Approx(0.0));
}

TEST_CASE("oracle reaches the goal from the start-region corners") {
  const OracleConfig o;
  const env::EnvConfig c = noiseless();
  Rng rng(0);
  for (double x : {0.05, 0.2}) {
    for (double y : {0.1, 0.9, 0.5}) {
      Position s{x, y};
      bool done = false;
      for (int t = 0; t < c.horizon && !done; ++t) {
        const auto r = env::step(c, s, oracle_action(o, c, s), rng);
        s = r.next_state;
        done = r.reached_goal;
      }
      CHECK_MESSAGE(done, "start " << x << "," << y);
    }
  }
}

TEST_CASE("noisy oracle") {
  const env::EnvConfig c;
  OracleConfig o;
  Rng rng(5);
  CHECK(noisy_oracle_action(o, c, {0.3, 0.3}, rng) == oracle_action(o, c, {0.3, 0.3}));
  o.noise_std = 0.005;
  Rng a(9), b(9);
  CHECK(noisy_oracle_action(o, c, {0.3, 0.3}, a) == noisy_oracle_action(o, c, {0.3, 0.3}, b));

  // Near the waypoint the clean action is far from the clip bound.
  const Position s{0.44, 0.5};
  const Action clean = oracle_action(o, c, s);
  double sx = 0.0, sxx = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double d = noisy_oracle_action(o, c, s, rng).dx - clean.dx;
    sx += d;
    sxx += d * d;
  }
  const double sd = std::sqrt(sxx / n - (sx / n) * (sx / n));
  CHECK(sd == doctest::Approx(0.005).epsilon(0.1));
}

TEST_CASE("synthetic gater rules") {
  const SyntheticGaterConfig g;
  GaterState s;
  CHECK(synthetic_gater_decide(g, s, 0.02) == GaterDecision::engage);
  CHECK(s.engaged);
  CHECK(synthetic_gater_decide(g, s, 0.001) == GaterDecision::stay);
  CHECK(synthetic_gater_decide(g, s, 0.001) == GaterDecision::stay);
  CHECK(synthetic_gater_decide(g, s, 0.001) == GaterDecision::disengage);
  CHECK_FALSE(s.engaged);

  GaterState r{true, 0};
  CHECK(synthetic_gater_decide(g, r, 0.001) == GaterDecision::stay);
  CHECK(synthetic_gater_decide(g, r, 0.02) == GaterDecision::stay);
  CHECK(synthetic_gater_decide(g, r, 0.001) == GaterDecision::stay);
  CHECK(r.calm_steps == 1);
  CHECK(normalized_discrepancy({0.05, 0.0}, {0.0, 0.0}, 0.05) == doctest::Approx(1.0));
}

TEST_CASE("oracle supervisor labels the clean action") {
  OracleConfig o;
  o.noise_std = 0.02;
  OracleSupervisor sup(o, {}, 3);
  const auto a = sup.act({0, 0, {0.44, 0.5}});
  CHECK(a.label == oracle_action(o, {}, {0.44, 0.5}));
  CHECK_FALSE(a.executed == a.label);
}

namespace {

struct LoopbackChannel : SupervisorChannel {
  ActionMailbox box;
  int requests = 0;
  void request_action(int, long, const Position&) override { ++requests; }
  Action await_action(int robot_id) override { return box.take(robot_id); }
};

}  // namespace

TEST_CASE("mailbox keeps only the latest action") {
  ActionMailbox box;
  box.post(1, {0.01, 0.0});
  box.post(1, {0.03, 0.0});
  CHECK(box.take(1) == Action{0.03, 0.0});
  CHECK_FALSE(box.try_take(1).has_value());
}

TEST_CASE("remote supervisor passes the human action through") {
  LoopbackChannel ch;
  RemoteSupervisor sup(ch, {});
  std::thread human([&] { ch.box.post(0, {0.03, 0.0}); });
  const auto a = sup.act({0, 4, {0.2, 0.2}});
  human.join();
  CHECK(a.executed == Action{0.03, 0.0});
  CHECK(a.label == a.executed);
  CHECK(ch.requests == 1);

  ch.box.post(0, {0.4, -0.4});
  CHECK(sup.act({0, 5, {0.2, 0.2}}).executed == Action{0.05, -0.05});
}

TEST_CASE("closed channel surfaces as unavailable supervisor") {
  LoopbackChannel ch;
  RemoteSupervisor sup(ch, {});
  std::thread closer([&] { ch.box.close(); });
  CHECK_THROWS_AS(sup.act({0, 1, {0.2, 0.2}}), SupervisorUnavailable);
  closer.join();
}
