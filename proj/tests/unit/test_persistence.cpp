#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "thrifty/config.hpp"
#include "thrifty/persistence.hpp"

using namespace thrifty;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "thrifty_unit";
  fs::create_directories(dir);
  return dir / name;
}

Dataset random_dataset(int n, std::uint64_t seed) {
  const env::EnvConfig e;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0), a(-0.05, 0.05);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const env::Position s{u(rng), u(rng)};
    const auto src = i % 3 ? SourceMode::autonomous : SourceMode::supervisor;
    if (i % 17 == 0) {
      d.add(goal_transition(e, {0.9, 0.5}, {a(rng), a(rng)}, src));
    } else {
      d.add(make_transition(e, s, {a(rng), a(rng)}, {u(rng), u(rng)}, src));
    }
  }
  return d;
}

}  // namespace

TEST_CASE("dataset round trip") {
  const Dataset d = random_dataset(1000, 3);
  const auto path = scratch("roundtrip.jsonl");
  save_dataset(path, d);
  CHECK(load_dataset(path, {}) == d);
}

TEST_CASE("empty dataset file") {
  const auto path = scratch("empty.jsonl");
  std::ofstream(path).close();
  CHECK(load_dataset(path, {}).empty());
}

TEST_CASE("corrupted line is reported by number") {
  std::ostringstream out;
  write_dataset(out, random_dataset(10, 1));
  std::istringstream in(out.str());
  std::string text, line;
  for (int i = 1; std::getline(in, line); ++i) text += (i == 7 ? line.substr(0, 20) : line) + "\n";
  std::istringstream bad(text);
  try {
    read_dataset(bad, {});
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 7);
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
}

TEST_CASE("dataset records are validated") {
  const env::EnvConfig e;
  auto parse = [&](const std::string& line) {
    std::istringstream in(line + "\n");
    return read_dataset(in, e);
  };
  const std::string good =
      R"({"state":[0.1,0.2],"action":[0.01,0.0],"next_state":[0.11,0.2],"goal_flag":0,"source_mode":"supervisor"})";
  CHECK(parse(good).size() == 1);
  CHECK_THROWS_AS(parse(R"({"state":[0.1],"action":[0.01,0.0],"next_state":[0.11,0.2],"goal_flag":0,"source_mode":"supervisor"})"), FormatError);
  CHECK_THROWS_AS(parse(R"({"state":[0.1,0.2],"action":[0.01,0.0],"next_state":[0.11,0.2],"goal_flag":1,"source_mode":"supervisor"})"), FormatError);
  CHECK_THROWS_AS(parse(R"({"state":[0.1,0.2],"action":[0.01,0.0],"next_state":[0.11,0.2],"goal_flag":0,"source_mode":"teleop"})"), FormatError);
}

TEST_CASE("policy checkpoint round trip") {
  PolicyTrainingConfig p;
  p.hidden_sizes = {8, 8};
  p.ensemble_size = 3;
  const EnsemblePolicy pol(p, 0.05, 9);
  const auto path = scratch("policy.json");
  save_checkpoint(path, pol, {7, 123, "abc"});
  const EnsemblePolicy back = load_policy_checkpoint(path);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 10; ++i) {
    const env::Position s{u(rng), u(rng)};
    CHECK(back.act(s) == pol.act(s));
    CHECK(back.novelty(s) == pol.novelty(s));
  }
  const auto meta = load_checkpoint_metadata(path);
  CHECK(meta.seed == 7);
  CHECK(meta.steps == 123);
  CHECK(meta.config_hash == "abc");
}

TEST_CASE("critic and classifier checkpoints") {
  CriticConfig cc;
  cc.hidden_sizes = {8};
  const RiskCritic critic(cc, 0.05, 4);
  const auto cpath = scratch("critic.json");
  save_checkpoint(cpath, critic);
  const RiskCritic cback = load_critic_checkpoint(cpath);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u, a(-0.05, 0.05);
  for (int i = 0; i < 10; ++i) {
    const env::Position s{u(rng), u(rng)};
    const env::Action act{a(rng), a(rng)};
    CHECK(cback.q_value(s, act) == critic.q_value(s, act));
  }
  CHECK(cback.config().gamma == cc.gamma);

  ClassifierConfig fc;
  fc.hidden_sizes = {8};
  const DiscrepancyClassifier clf(fc, 5);
  const auto fpath = scratch("classifier.json");
  save_checkpoint(fpath, clf);
  const auto fback = load_classifier_checkpoint(fpath);
  CHECK(fback.unsafe_probability({0.3, 0.4}) == clf.unsafe_probability({0.3, 0.4}));

  CHECK_THROWS_AS(load_policy_checkpoint(cpath), FormatError);
  CHECK_THROWS_AS(load_critic_checkpoint(fpath), FormatError);
}

TEST_CASE("future checkpoint version is refused") {
  PolicyTrainingConfig p;
  p.hidden_sizes = {4};
  p.ensemble_size = 1;
  const auto path = scratch("future.json");
  save_checkpoint(path, EnsemblePolicy(p, 0.05, 1));
  json j;
  std::ifstream(path) >> j;
  j["format_version"] = kCheckpointFormatVersion + 1;
  std::ofstream(path) << j.dump();
  try {
    load_policy_checkpoint(path);
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    const std::string what = e.what();
    CHECK(what.find(std::to_string(kCheckpointFormatVersion + 1)) != std::string::npos);
    CHECK(what.find(std::to_string(kCheckpointFormatVersion)) != std::string::npos);
  }
}

TEST_CASE("thresholds round trip") {
  const GateThresholds t{0.3, 0.1, 0.02, 0.004, 0.05};
  const auto path = scratch("thresholds.json");
  save_thresholds(path, t);
  CHECK(load_thresholds(path) == t);
}

TEST_CASE("episode records carry no wall clock") {
  EpisodeRecord r;
  r.episode = 3;
  r.stats = {1, 4, 10, true, {SwitchCause::risk}};
  r.thresholds = GateThresholds{0.3, 0.1, 0.02, 0.004, 0.01};
  const auto j = episode_record_json(r);
  CHECK(j.dump() == episode_record_json(r).dump());
  CHECK(episode_stats_from_json(json::parse(j.dump())) == r.stats);
  CHECK_FALSE(j.contains("time"));
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config round trip and overrides") {
  RunConfig c;
  c.algorithm = Algorithm::lazydagger;
  c.seed = 11;
  c.env.process_noise_std = 0.03;
  c.policy.hidden_sizes = {32, 32};
  const auto j = json::parse(config_to_json(c).dump());
  const RunConfig back = config_from_json(j);
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(back).size() == 16);

  const RunConfig partial = config_from_json(json{{"seed", 4}, {"env", {{"horizon", 50}}}});
  CHECK(partial.seed == 4);
  CHECK(partial.env.horizon == 50);
  CHECK(partial.env.goal_radius == env::EnvConfig{}.goal_radius);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json(json{{"sede", 4}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json{{"policy", {{"hiden_sizes", {8}}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(json{{"lazydagger_tau_h", 0.02}, {"lazydagger_tau_a", 0.01}}),
                  std::invalid_argument);
  CHECK_NOTHROW(config_from_json(json{{"lazydagger_tau_h", 0.02}, {"lazydagger_tau_a", 0.005}}));
  CHECK_THROWS_AS(config_from_json(json{{"algorithm", "bc"}, {"ablate", "risk"}}), std::invalid_argument);
  CHECK_THROWS_AS(load_config(scratch("missing-config.json")), std::invalid_argument);
}
