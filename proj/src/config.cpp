#include "thrifty/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "thrifty/persistence.hpp"

namespace thrifty {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads the keys of one JSON object into fields and rejects leftovers.
class Reader {
 public:
  Reader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw std::invalid_argument(scope_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(scope_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw std::invalid_argument(scope_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

ordered_json interval_json(const env::Interval& i) { return ordered_json::array({i.lo, i.hi}); }

env::Interval interval_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) {
    throw std::invalid_argument(std::string("env.") + key + ": expected [lo, hi]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

ordered_json env_to_json(const env::EnvConfig& env) {
  ordered_json j;
  j["wall_x"] = interval_json(env.wall_x);
  j["gap_y"] = interval_json(env.gap_y);
  j["goal_center"] = {env.goal_center.x, env.goal_center.y};
  j["goal_radius"] = env.goal_radius;
  j["action_max"] = env.action_max;
  j["process_noise_std"] = env.process_noise_std;
  j["horizon"] = env.horizon;
  j["start_x"] = interval_json(env.start_x);
  j["start_y"] = interval_json(env.start_y);
  return j;
}

env::EnvConfig env_from_json(const json& j, env::EnvConfig base) {
  Reader r(j, "env");
  for (auto [key, field] : {std::pair{"wall_x", &base.wall_x}, std::pair{"gap_y", &base.gap_y},
                            std::pair{"start_x", &base.start_x},
                            std::pair{"start_y", &base.start_y}}) {
    if (const json* v = r.child(key)) *field = interval_from(*v, key);
  }
  if (const json* v = r.child("goal_center")) {
    if (!v->is_array() || v->size() != 2) throw std::invalid_argument("env.goal_center: expected [x, y]");
    base.goal_center = {(*v)[0].get<double>(), (*v)[1].get<double>()};
  }
  r.read("goal_radius", base.goal_radius);
  r.read("action_max", base.action_max);
  r.read("process_noise_std", base.process_noise_std);
  r.read("horizon", base.horizon);
  r.finish();
  base.validate();
  return base;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["algorithm"] = to_string(c.algorithm);
  j["ablate"] = !c.clauses.novelty ? ordered_json("novelty")
                : !c.clauses.risk  ? ordered_json("risk")
                                   : ordered_json();
  j["seed"] = c.seed;
  j["max_episodes"] = c.max_episodes;
  j["interactive_steps"] = c.interactive_steps;
  j["alpha_h"] = c.alpha_h;
  j["num_demos"] = c.num_demos;
  j["bc_demo_multiplier"] = c.bc_demo_multiplier;
  j["offline_rollouts"] = c.offline_rollouts;
  j["rollout_interval_steps"] = c.rollout_interval_steps;
  j["rollouts_per_refresh"] = c.rollouts_per_refresh;
  j["rollouts_every_episode"] = c.rollouts_every_episode;
  j["env"] = env_to_json(c.env);
  j["oracle"] = {{"waypoint", {c.oracle.waypoint.x, c.oracle.waypoint.y}},
                 {"gap_exit", {c.oracle.gap_exit.x, c.oracle.gap_exit.y}},
                 {"gain", c.oracle.gain},
                 {"noise_std", c.oracle.noise_std}};
  j["policy"] = {{"hidden_sizes", c.policy.hidden_sizes},
                 {"ensemble_size", c.policy.ensemble_size},
                 {"learning_rate", c.policy.learning_rate},
                 {"batch_size", c.policy.batch_size},
                 {"epochs", c.policy.epochs},
                 {"steps_per_epoch", c.policy.steps_per_epoch},
                 {"retrain_steps", c.policy.retrain_steps},
                 {"retrain_from_scratch", c.policy.retrain_from_scratch}};
  j["critic"] = {{"hidden_sizes", c.critic.hidden_sizes},
                 {"learning_rate", c.critic.learning_rate},
                 {"batch_size", c.critic.batch_size},
                 {"goal_fraction", c.critic.goal_fraction},
                 {"gamma", c.critic.gamma},
                 {"target_refresh", c.critic.target_refresh},
                 {"init_steps", c.critic.init_steps},
                 {"update_steps", c.critic.update_steps}};
  j["classifier"] = {{"hidden_sizes", c.classifier.hidden_sizes},
                     {"learning_rate", c.classifier.learning_rate},
                     {"batch_size", c.classifier.batch_size},
                     {"init_steps", c.classifier.init_steps},
                     {"update_steps", c.classifier.update_steps},
                     {"decision_threshold", c.classifier.decision_threshold}};
  j["safedagger_tau"] = c.safedagger_tau;
  j["lazydagger_tau_h"] = c.lazydagger_tau_h;
  j["lazydagger_tau_a"] = c.lazydagger_tau_a();
  j["lazydagger_noise_std"] = c.lazydagger_noise_std;
  j["gater"] = {{"engage_discrepancy", c.gater.engage_discrepancy},
                {"disengage_factor", c.gater.disengage_factor},
                {"patience", c.gater.patience},
                {"action_scale", c.gater.action_scale}};
  return j;
}

RunConfig config_from_json(const json& j, RunConfig c) {
  Reader r(j, "config");
  std::string algorithm = std::string(to_string(c.algorithm));
  r.read("algorithm", algorithm);
  c.algorithm = algorithm_from_string(algorithm);
  if (const json* v = r.child("ablate")) {
    c.clauses = {};
    if (!v->is_null()) {
      const auto name = v->get<std::string>();
      if (name == "novelty") {
        c.clauses.novelty = false;
      } else if (name == "risk") {
        c.clauses.risk = false;
      } else {
        throw std::invalid_argument("config.ablate: expected novelty, risk or null");
      }
    }
  }
  r.read("seed", c.seed);
  r.read("max_episodes", c.max_episodes);
  r.read("interactive_steps", c.interactive_steps);
  r.read("alpha_h", c.alpha_h);
  r.read("num_demos", c.num_demos);
  r.read("bc_demo_multiplier", c.bc_demo_multiplier);
  r.read("offline_rollouts", c.offline_rollouts);
  r.read("rollout_interval_steps", c.rollout_interval_steps);
  r.read("rollouts_per_refresh", c.rollouts_per_refresh);
  r.read("rollouts_every_episode", c.rollouts_every_episode);
  if (const json* v = r.child("env")) c.env = env_from_json(*v, c.env);
  if (const json* v = r.child("oracle")) {
    Reader o(*v, "oracle");
    for (auto [key, field] : {std::pair{"waypoint", &c.oracle.waypoint},
                              std::pair{"gap_exit", &c.oracle.gap_exit}}) {
      if (const json* p = o.child(key)) *field = {(*p).at(0).get<double>(), (*p).at(1).get<double>()};
    }
    o.read("gain", c.oracle.gain);
    o.read("noise_std", c.oracle.noise_std);
    o.finish();
  }
  if (const json* v = r.child("policy")) {
    Reader p(*v, "policy");
    p.read("hidden_sizes", c.policy.hidden_sizes);
    p.read("ensemble_size", c.policy.ensemble_size);
    p.read("learning_rate", c.policy.learning_rate);
    p.read("batch_size", c.policy.batch_size);
    p.read("epochs", c.policy.epochs);
    p.read("steps_per_epoch", c.policy.steps_per_epoch);
    p.read("retrain_steps", c.policy.retrain_steps);
    p.read("retrain_from_scratch", c.policy.retrain_from_scratch);
    p.finish();
  }
  if (const json* v = r.child("critic")) {
    Reader q(*v, "critic");
    q.read("hidden_sizes", c.critic.hidden_sizes);
    q.read("learning_rate", c.critic.learning_rate);
    q.read("batch_size", c.critic.batch_size);
    q.read("goal_fraction", c.critic.goal_fraction);
    q.read("gamma", c.critic.gamma);
    q.read("target_refresh", c.critic.target_refresh);
    q.read("init_steps", c.critic.init_steps);
    q.read("update_steps", c.critic.update_steps);
    q.finish();
  }
  if (const json* v = r.child("classifier")) {
    Reader f(*v, "classifier");
    f.read("hidden_sizes", c.classifier.hidden_sizes);
    f.read("learning_rate", c.classifier.learning_rate);
    f.read("batch_size", c.classifier.batch_size);
    f.read("init_steps", c.classifier.init_steps);
    f.read("update_steps", c.classifier.update_steps);
    f.read("decision_threshold", c.classifier.decision_threshold);
    f.finish();
  }
  r.read("safedagger_tau", c.safedagger_tau);
  r.read("lazydagger_tau_h", c.lazydagger_tau_h);
  r.read("lazydagger_noise_std", c.lazydagger_noise_std);
  if (const json* v = r.child("lazydagger_tau_a")) {
    const double tau_a = v->get<double>();
    if (std::abs(tau_a - c.lazydagger_tau_a()) > 1e-12) {
      throw std::invalid_argument("config.lazydagger_tau_a must equal 0.25 * lazydagger_tau_h (" +
                                  std::to_string(c.lazydagger_tau_a()) + ")");
    }
  }
  if (const json* v = r.child("gater")) {
    Reader g(*v, "gater");
    g.read("engage_discrepancy", c.gater.engage_discrepancy);
    g.read("disengage_factor", c.gater.disengage_factor);
    g.read("patience", c.gater.patience);
    g.read("action_scale", c.gater.action_scale);
    g.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& config) {
  return sha256_hex(config_to_json(config).dump()).substr(0, 16);
}

}  // namespace thrifty
