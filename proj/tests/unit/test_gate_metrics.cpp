#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "thrifty/gate.hpp"
#include "thrifty/metrics.hpp"

using namespace thrifty;

namespace {

std::vector<double> grid100() {
  std::vector<double> v;
  for (int i = 0; i < 100; ++i) v.push_back(i / 100.0);
  return v;
}

// Independent quantile: sort, then count up to the first value whose rank
// reaches q * n.
double sorted_rank_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (static_cast<double>(i + 1) >= q * n - 1e-9) return v[i];
  }
  return v.back();
}

}  // namespace

TEST_CASE("nearest-rank quantile") {
  CHECK(nearest_rank_quantile(grid100(), 0.99) == 0.98);
  CHECK(nearest_rank_quantile(grid100(), 1.0) == 0.99);
  CHECK(nearest_rank_quantile(grid100(), 0.0) == 0.0);
  CHECK(nearest_rank_quantile(grid100(), 0.5) == 0.49);
  CHECK(nearest_rank_quantile({0.7}, 0.3) == 0.7);
  CHECK_THROWS(nearest_rank_quantile({}, 0.5));
  CHECK_THROWS(nearest_rank_quantile({1.0}, 1.5));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + rng() % 300);
    for (auto& x : v) x = u(rng);
    const double q = u(rng);
    CHECK(nearest_rank_quantile(v, q) == sorted_rank_oracle(v, q));
  }
}

TEST_CASE("threshold tuning") {
  const auto risk = grid100();
  const auto t = tune_thresholds(risk, risk, std::vector<double>{0.001, 0.003}, 0.01);
  CHECK(t.tau_h == 0.98);
  CHECK(t.tau_a == 0.49);
  CHECK(t.delta_h == 0.98);
  CHECK(t.delta_a == doctest::Approx(0.002));
  CHECK(t.alpha_h == 0.01);

  const std::vector<double> flat(40, 0.3);
  const auto c = tune_thresholds(flat, flat, flat, 0.05);
  CHECK(c.tau_h == 0.3);
  CHECK(c.tau_a == 0.3);

  const auto r = retune_thresholds(t, flat, flat);
  CHECK(r.delta_a == t.delta_a);
  CHECK(r.tau_h == 0.3);
  CHECK_THROWS(tune_thresholds({}, risk, risk, 0.01));
}

TEST_CASE("calibration holds on the tuning list") {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> e(3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(50 + rng() % 500);
    for (auto& x : v) x = e(rng);
    for (double alpha : {0.01, 0.05, 0.1, 0.3}) {
      const double tau = nearest_rank_quantile(v, 1.0 - alpha);
      const double frac =
          static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x > tau; })) /
          v.size();
      CHECK(frac <= alpha + 1e-12);
      CHECK(frac >= alpha - 1.0 / v.size() - 1e-12);
    }
  }
}

TEST_CASE("tau_a never exceeds tau_h for alpha up to one half") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng() % 200);
    for (auto& x : v) x = u(rng);
    const double alpha = 0.5 * u(rng);
    const auto t = tune_thresholds(v, v, v, alpha);
    CHECK(t.tau_a <= t.tau_h);
  }
}

TEST_CASE("intervene and cede predicates") {
  GateThresholds t;
  t.delta_h = 0.1;
  t.tau_h = 0.8;
  CHECK(intervene_on_scores(0.5, 0.0, t) == SwitchCause::novelty);
  CHECK(intervene_on_scores(0.5, 0.95, t) == SwitchCause::novelty);
  CHECK(intervene_on_scores(0.05, 0.9, t) == SwitchCause::risk);
  CHECK_FALSE(intervene_on_scores(0.05, 0.1, t).has_value());

  GateThresholds c;
  c.delta_a = 0.01;
  c.tau_a = 0.5;
  CHECK(cede_on_scores(0.001, 0.1, c));
  CHECK_FALSE(cede_on_scores(0.001, 0.6, c));
  CHECK_FALSE(cede_on_scores(0.02, 0.1, c));
}

TEST_CASE("clause ablations") {
  GateThresholds t;
  t.delta_h = 0.1;
  t.tau_h = 0.8;
  t.delta_a = 0.01;
  t.tau_a = 0.5;
  const GateClauses no_novelty{false, true};
  const GateClauses no_risk{true, false};
  CHECK_FALSE(intervene_on_scores(0.5, 0.1, t, no_novelty).has_value());
  CHECK(intervene_on_scores(0.5, 0.9, t, no_novelty) == SwitchCause::risk);
  CHECK_FALSE(intervene_on_scores(0.05, 0.9, t, no_risk).has_value());
  CHECK(intervene_on_scores(0.5, 0.9, t, no_risk) == SwitchCause::novelty);
  CHECK(cede_on_scores(0.02, 0.1, t, no_novelty));
  CHECK(cede_on_scores(0.001, 0.6, t, no_risk));
}

TEST_CASE("mode machine walk") {
  Mode m = Mode::autonomous;
  const struct {
    bool iv, cd;
    Mode expected;
  } walk[] = {{false, false, Mode::autonomous},
              {true, false, Mode::supervisor},
              {false, false, Mode::supervisor},
              {false, true, Mode::autonomous},
              {false, false, Mode::autonomous}};
  for (const auto& w : walk) {
    m = advance_mode(m, w.iv, w.cd);
    CHECK(m == w.expected);
  }
  Mode a = Mode::autonomous;
  for (int i = 0; i < 50; ++i) a = advance_mode(a, false, true);
  CHECK(a == Mode::autonomous);
  Mode s = Mode::supervisor;
  for (int i = 0; i < 50; ++i) s = advance_mode(s, true, false);
  CHECK(s == Mode::supervisor);
}

TEST_CASE("mode and cause names round trip") {
  for (Mode m : {Mode::autonomous, Mode::supervisor}) CHECK(mode_from_string(to_string(m)) == m);
  for (SwitchCause c : {SwitchCause::novelty, SwitchCause::risk, SwitchCause::external}) {
    CHECK(switch_cause_from_string(to_string(c)) == c);
  }
  CHECK_THROWS(mode_from_string("manual"));
}

TEST_CASE("never gate") {
  NeverGate g;
  CHECK_FALSE(g.intervene({}).has_value());
  CHECK(g.cede({}));
}

TEST_CASE("episode counting") {
  using enum Mode;
  const std::vector<Mode> mixed{autonomous, autonomous, supervisor, supervisor, autonomous, supervisor};
  const auto s = episode_stats(mixed, true);
  CHECK(s.ints == 2);
  CHECK(s.acts_h == 3);
  CHECK(s.acts_r == 3);
  CHECK(s.length() == 6);

  const std::vector<Mode> auto_only(7, autonomous);
  CHECK(episode_stats(auto_only, false).ints == 0);
  CHECK(episode_stats(auto_only, false).acts_h == 0);

  const std::vector<Mode> sup_only(5, supervisor);
  CHECK(episode_stats(sup_only, true).ints == 1);
  CHECK_THROWS(episode_stats(std::vector<Mode>{}, true));
}

TEST_CASE("aggregation") {
  std::vector<EpisodeStats> none{{1, 2, 3, false, {}}};
  const auto a = aggregate(none);
  CHECK_FALSE(a.ints.has_value());
  CHECK(a.total_ints == 1);
  CHECK(a.total_acts_r == 3);

  std::vector<EpisodeStats> one{{2, 4, 6, true, {}}};
  CHECK(aggregate(one).ints == MeanStd{2.0, 0.0});

  std::vector<EpisodeStats> two{{1, 0, 0, true, {}}, {3, 0, 0, true, {}}};
  const auto m = aggregate(two);
  CHECK(m.ints->mean == 2.0);
  CHECK(m.ints->std == 1.0);
}

TEST_CASE("burden") {
  CHECK(burden(3, 10, 5) == 45.0);
  CHECK(burden(0, 10, 5) == 0.0);
  CHECK_THROWS(burden(-1, 1, 1));
  const double c = 7.9, i = 179.4 / 7.9;
  CHECK(burden(c, i, 10) == doctest::Approx(258.4).epsilon(1e-12));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int k = 0; k < 100; ++k) {
    const double C = u(rng), I = u(rng), L = u(rng);
    CHECK(burden(C, I, L) == C * (L + I));
  }
}

TEST_CASE("burden inputs from episodes") {
  std::vector<EpisodeStats> s{{2, 20, 50, true, {}}, {4, 40, 10, true, {}}, {9, 9, 9, false, {}}};
  const auto b = burden_inputs(s);
  REQUIRE(b.has_value());
  CHECK(b->context_switches == 3.0);
  CHECK(b->intervention_length == 10.0);
  const auto quiet = burden_inputs(std::vector<EpisodeStats>{{0, 0, 5, true, {}}});
  REQUIRE(quiet.has_value());
  CHECK(quiet->context_switches == 0.0);
  CHECK(quiet->intervention_length == 0.0);
  CHECK_FALSE(burden_inputs(std::vector<EpisodeStats>{{1, 1, 5, false, {}}}).has_value());
}

TEST_CASE("summary exports") {
  std::vector<EpisodeStats> s{{1, 5, 10, true, {}}, {3, 7, 12, true, {}}};
  SummaryRow row{"thrifty", aggregate(s), 0.9, 1.0};
  SummaryRow bare{"bc", aggregate(std::vector<EpisodeStats>{}), std::nullopt, std::nullopt};
  std::ostringstream csv;
  write_summary_csv(csv, std::vector<SummaryRow>{row, bare});
  const std::string text = csv.str();
  CHECK(text.rfind("Algorithm,Ints,Acts (H),Acts (R),T Ints,T Acts (H),T Acts (R),Auto Succ,Int-Aided Succ\n", 0) == 0);
  CHECK(text.find("thrifty,2 +- 1,6 +- 1,11 +- 1,4,12,22,0.9,1") != std::string::npos);

  std::ostringstream jl;
  write_summary_jsonl(jl, std::vector<SummaryRow>{bare});
  CHECK(jl.str().find("\"Auto Succ\":null") != std::string::npos);
}
