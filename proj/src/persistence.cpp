#include "thrifty/persistence.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace thrifty {

using nlohmann::json;

namespace {

std::string with_line(const std::string& what, std::size_t line) {
  return line ? "line " + std::to_string(line) + ": " + what : what;
}

double finite_number(const json& j, const char* field) {
  if (!j.is_number()) throw FormatError(std::string(field) + " must hold numbers");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FormatError(std::string(field) + " must be finite");
  return v;
}

std::pair<double, double> pair_field(const json& obj, const char* field) {
  if (!obj.contains(field)) throw FormatError(std::string("missing field '") + field + "'");
  const json& v = obj.at(field);
  if (!v.is_array() || v.size() != 2) {
    throw FormatError(std::string(field) + " must be an array of 2 numbers");
  }
  return {finite_number(v[0], field), finite_number(v[1], field)};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json checkpoint_header(std::string_view kind, const CheckpointMetadata& meta) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = kind;
  j["metadata"] = {{"seed", meta.seed}, {"steps", meta.steps}, {"config_hash", meta.config_hash}};
  return j;
}

json open_checkpoint(const std::filesystem::path& path, std::string_view kind) {
  json j = read_json_file(path);
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw FormatError(path.string() + ": missing format_version");
  }
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) {
    throw FormatError(path.string() + ": checkpoint format_version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(kCheckpointFormatVersion) + ")");
  }
  const std::string found = j.value("kind", std::string{});
  if (found != kind) {
    throw FormatError(path.string() + ": expected a " + std::string(kind) +
                      " checkpoint, found '" + found + "'");
  }
  return j;
}

std::vector<int> int_list(const json& j) {
  std::vector<int> out;
  for (const auto& v : j) out.push_back(v.get<int>());
  return out;
}

}  // namespace

FormatError::FormatError(const std::string& what, std::size_t line)
    : std::runtime_error(with_line(what, line)), line_(line) {}

json transition_to_json(const Transition& t) {
  return {{"state", {t.state.x, t.state.y}},
          {"action", {t.action.dx, t.action.dy}},
          {"next_state", {t.next_state.x, t.next_state.y}},
          {"goal_flag", t.goal_flag ? 1 : 0},
          {"source_mode", to_string(t.source)}};
}

Transition transition_from_json(const json& j, const env::EnvConfig& env) {
  if (!j.is_object()) throw FormatError("transition must be a JSON object");
  Transition t;
  const auto [sx, sy] = pair_field(j, "state");
  const auto [ax, ay] = pair_field(j, "action");
  const auto [nx, ny] = pair_field(j, "next_state");
  t.state = {sx, sy};
  t.action = {ax, ay};
  t.next_state = {nx, ny};
  if (!j.contains("goal_flag")) throw FormatError("missing field 'goal_flag'");
  const json& g = j["goal_flag"];
  if (g.is_boolean()) {
    t.goal_flag = g.get<bool>();
  } else if (g.is_number_integer() && (g.get<int>() == 0 || g.get<int>() == 1)) {
    t.goal_flag = g.get<int>() == 1;
  } else {
    throw FormatError("goal_flag must be 0 or 1");
  }
  if (t.goal_flag != env::goal_indicator(env, t.state)) {
    throw FormatError("goal_flag disagrees with the goal region");
  }
  if (!j.contains("source_mode") || !j["source_mode"].is_string()) {
    throw FormatError("missing field 'source_mode'");
  }
  try {
    t.source = source_mode_from_string(j["source_mode"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return t;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& t : dataset.transitions) out << transition_to_json(t).dump() << '\n';
}

Dataset read_dataset(std::istream& in, const env::EnvConfig& env) {
  Dataset d;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.add(transition_from_json(json::parse(line), env));
    } catch (const json::exception& e) {
      throw FormatError(e.what(), number);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), number);
    }
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path, const env::EnvConfig& env) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_dataset(in, env);
}

json mlp_to_json(const nn::Mlp& net) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
      rows.push_back(std::move(row));
    }
    json bias = json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) bias.push_back(layer.bias(r));
    layers.push_back({{"weights", std::move(rows)}, {"bias", std::move(bias)}});
  }
  return {{"layer_sizes", net.layer_sizes()},
          {"hidden_activation", nn::to_string(net.hidden_activation())},
          {"output_activation", nn::to_string(net.output_activation())},
          {"layers", std::move(layers)}};
}

nn::Mlp mlp_from_json(const json& j) {
  try {
    nn::Mlp net(int_list(j.at("layer_sizes")),
                nn::activation_from_string(j.at("hidden_activation").get<std::string>()),
                nn::activation_from_string(j.at("output_activation").get<std::string>()), 0);
    const json& layers = j.at("layers");
    if (layers.size() != net.num_layers()) throw FormatError("layer count mismatch");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      auto& dst = net.layers()[l];
      const json& w = layers[l].at("weights");
      const json& b = layers[l].at("bias");
      if (w.size() != static_cast<std::size_t>(dst.weights.rows()) ||
          b.size() != static_cast<std::size_t>(dst.bias.size())) {
        throw FormatError("layer " + std::to_string(l) + " shape mismatch");
      }
      for (Eigen::Index r = 0; r < dst.weights.rows(); ++r) {
        const json& row = w[static_cast<std::size_t>(r)];
        if (row.size() != static_cast<std::size_t>(dst.weights.cols())) {
          throw FormatError("layer " + std::to_string(l) + " shape mismatch");
        }
        for (Eigen::Index c = 0; c < dst.weights.cols(); ++c) {
          dst.weights(r, c) = finite_number(row[static_cast<std::size_t>(c)], "weights");
        }
        dst.bias(r) = finite_number(b[static_cast<std::size_t>(r)], "bias");
      }
    }
    return net;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const EnsemblePolicy& policy,
                     const CheckpointMetadata& meta) {
  json j = checkpoint_header("policy-ensemble", meta);
  j["action_max"] = policy.action_max();
  j["members"] = json::array();
  for (const auto& m : policy.members()) j["members"].push_back(mlp_to_json(m));
  write_json_file(path, j);
}

void save_checkpoint(const std::filesystem::path& path, const RiskCritic& critic,
                     const CheckpointMetadata& meta) {
  json j = checkpoint_header("critic", meta);
  const auto& c = critic.config();
  j["action_max"] = critic.action_max();
  j["config"] = {{"hidden_sizes", c.hidden_sizes},   {"learning_rate", c.learning_rate},
                 {"batch_size", c.batch_size},       {"goal_fraction", c.goal_fraction},
                 {"gamma", c.gamma},                 {"target_refresh", c.target_refresh},
                 {"init_steps", c.init_steps},       {"update_steps", c.update_steps}};
  j["network"] = mlp_to_json(critic.network());
  write_json_file(path, j);
}

void save_checkpoint(const std::filesystem::path& path, const DiscrepancyClassifier& classifier,
                     const CheckpointMetadata& meta) {
  json j = checkpoint_header("classifier", meta);
  const auto& c = classifier.config();
  j["config"] = {{"hidden_sizes", c.hidden_sizes},
                 {"learning_rate", c.learning_rate},
                 {"batch_size", c.batch_size},
                 {"init_steps", c.init_steps},
                 {"update_steps", c.update_steps},
                 {"decision_threshold", c.decision_threshold}};
  j["network"] = mlp_to_json(classifier.network());
  write_json_file(path, j);
}

EnsemblePolicy load_policy_checkpoint(const std::filesystem::path& path) {
  const json j = open_checkpoint(path, "policy-ensemble");
  std::vector<nn::Mlp> members;
  for (const auto& m : j.at("members")) members.push_back(mlp_from_json(m));
  try {
    return EnsemblePolicy(std::move(members), j.at("action_max").get<double>());
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

RiskCritic load_critic_checkpoint(const std::filesystem::path& path) {
  const json j = open_checkpoint(path, "critic");
  try {
    const json& c = j.at("config");
    CriticConfig cfg;
    cfg.hidden_sizes = int_list(c.at("hidden_sizes"));
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.batch_size = c.at("batch_size").get<int>();
    cfg.goal_fraction = c.at("goal_fraction").get<double>();
    cfg.gamma = c.at("gamma").get<double>();
    cfg.target_refresh = c.at("target_refresh").get<int>();
    cfg.init_steps = c.at("init_steps").get<int>();
    cfg.update_steps = c.at("update_steps").get<int>();
    return RiskCritic(mlp_from_json(j.at("network")), cfg, j.at("action_max").get<double>());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

DiscrepancyClassifier load_classifier_checkpoint(const std::filesystem::path& path) {
  const json j = open_checkpoint(path, "classifier");
  try {
    const json& c = j.at("config");
    ClassifierConfig cfg;
    cfg.hidden_sizes = int_list(c.at("hidden_sizes"));
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.batch_size = c.at("batch_size").get<int>();
    cfg.init_steps = c.at("init_steps").get<int>();
    cfg.update_steps = c.at("update_steps").get<int>();
    cfg.decision_threshold = c.at("decision_threshold").get<double>();
    return DiscrepancyClassifier(mlp_from_json(j.at("network")), cfg);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

CheckpointMetadata load_checkpoint_metadata(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  CheckpointMetadata m;
  const json& meta = j.at("metadata");
  m.seed = meta.at("seed").get<std::uint64_t>();
  m.steps = meta.at("steps").get<long>();
  m.config_hash = meta.at("config_hash").get<std::string>();
  return m;
}

json thresholds_to_json(const GateThresholds& t) {
  return {{"tau_h", t.tau_h},
          {"tau_a", t.tau_a},
          {"delta_h", t.delta_h},
          {"delta_a", t.delta_a},
          {"alpha_h", t.alpha_h}};
}

GateThresholds thresholds_from_json(const json& j) {
  try {
    return {j.at("tau_h").get<double>(), j.at("tau_a").get<double>(),
            j.at("delta_h").get<double>(), j.at("delta_a").get<double>(),
            j.at("alpha_h").get<double>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed thresholds: ") + e.what());
  }
}

void save_thresholds(const std::filesystem::path& path, const GateThresholds& t) {
  write_json_file(path, thresholds_to_json(t));
}

GateThresholds load_thresholds(const std::filesystem::path& path) {
  return thresholds_from_json(read_json_file(path));
}

nlohmann::ordered_json episode_record_json(const EpisodeRecord& record) {
  nlohmann::ordered_json j;
  j["episode"] = record.episode;
  j["ints"] = record.stats.ints;
  j["acts_h"] = record.stats.acts_h;
  j["acts_r"] = record.stats.acts_r;
  j["success"] = record.stats.success;
  auto causes = nlohmann::ordered_json::array();
  for (SwitchCause c : record.stats.switch_causes) causes.push_back(to_string(c));
  j["switch_causes"] = std::move(causes);
  if (record.thresholds) {
    j["thresholds"] = thresholds_to_json(*record.thresholds);
  } else {
    j["thresholds"] = nullptr;
  }
  j["steps_consumed"] = record.steps_consumed;
  j["dh_size"] = record.dh_size;
  j["dr_size"] = record.dr_size;
  j["truncated"] = record.truncated;
  j["aborted"] = record.aborted;
  return j;
}

EpisodeStats episode_stats_from_json(const json& j) {
  EpisodeStats s;
  s.ints = j.at("ints").get<int>();
  s.acts_h = j.at("acts_h").get<int>();
  s.acts_r = j.at("acts_r").get<int>();
  s.success = j.at("success").get<bool>();
  for (const auto& c : j.at("switch_causes")) {
    s.switch_causes.push_back(switch_cause_from_string(c.get<std::string>()));
  }
  return s;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

}  // namespace thrifty
