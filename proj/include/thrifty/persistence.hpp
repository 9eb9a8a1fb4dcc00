#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "thrifty/baselines.hpp"
#include "thrifty/critic.hpp"
#include "thrifty/engine.hpp"
#include "thrifty/ensemble.hpp"

namespace thrifty {

/// Malformed file contents. `line()` is 1-based, or 0 when not line oriented.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline constexpr int kCheckpointFormatVersion = 1;

// Datasets: one JSON object per line with state, action, next_state,
// goal_flag and source_mode.
nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j, const env::EnvConfig& env);
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in, const env::EnvConfig& env);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
/// Validates vector sizes, finiteness and goal flags against `env`.
Dataset load_dataset(const std::filesystem::path& path, const env::EnvConfig& env);

nlohmann::json mlp_to_json(const nn::Mlp& net);
nn::Mlp mlp_from_json(const nlohmann::json& j);

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  long steps = 0;
  std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& path, const EnsemblePolicy& policy,
                     const CheckpointMetadata& meta = {});
void save_checkpoint(const std::filesystem::path& path, const RiskCritic& critic,
                     const CheckpointMetadata& meta = {});
void save_checkpoint(const std::filesystem::path& path, const DiscrepancyClassifier& classifier,
                     const CheckpointMetadata& meta = {});

/// Each loader checks format_version and kind and throws FormatError on a
/// mismatch; there is no migration between versions.
EnsemblePolicy load_policy_checkpoint(const std::filesystem::path& path);
RiskCritic load_critic_checkpoint(const std::filesystem::path& path);
DiscrepancyClassifier load_classifier_checkpoint(const std::filesystem::path& path);
CheckpointMetadata load_checkpoint_metadata(const std::filesystem::path& path);

nlohmann::json thresholds_to_json(const GateThresholds& t);
GateThresholds thresholds_from_json(const nlohmann::json& j);
void save_thresholds(const std::filesystem::path& path, const GateThresholds& t);
GateThresholds load_thresholds(const std::filesystem::path& path);

/// One metrics record per training episode. No wall-clock fields, so equal
/// runs produce equal bytes.
nlohmann::ordered_json episode_record_json(const EpisodeRecord& record);
EpisodeStats episode_stats_from_json(const nlohmann::json& j);

/// Lowercase hex SHA-256 of the given text.
std::string sha256_hex(const std::string& text);

}  // namespace thrifty
