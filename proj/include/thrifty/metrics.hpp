#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thrifty/gate.hpp"

namespace thrifty {

struct EpisodeStats {
  int ints = 0;
  int acts_h = 0;
  int acts_r = 0;
  bool success = false;
  std::vector<SwitchCause> switch_causes;

  int length() const { return acts_h + acts_r; }
  bool operator==(const EpisodeStats&) const = default;
};

/// Counts executed modes. An episode always starts autonomous, so a trace
/// opening in supervisor mode carries one switch.
EpisodeStats episode_stats(std::span<const Mode> mode_trace, bool success);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
  bool operator==(const MeanStd&) const = default;
};

/// Per-episode statistics over successful episodes only (absent without any
/// success) and totals over every episode.
struct RunMetrics {
  int episodes = 0;
  int successes = 0;
  std::optional<MeanStd> ints;
  std::optional<MeanStd> acts_h;
  std::optional<MeanStd> acts_r;
  long total_ints = 0;
  long total_acts_h = 0;
  long total_acts_r = 0;
  long total_switches_novelty = 0;
  long total_switches_risk = 0;
  long total_switches_external = 0;
};

RunMetrics aggregate(std::span<const EpisodeStats> stats);

/// B = C * (L + I). Throws std::invalid_argument on negative input.
double burden(double context_switches, double intervention_length, double latency);

/// C and I from successful episodes: mean switches per episode and
/// supervisor actions per switch. I is 0 when there were no switches.
struct BurdenInputs {
  double context_switches = 0.0;
  double intervention_length = 0.0;
};
std::optional<BurdenInputs> burden_inputs(std::span<const EpisodeStats> stats);

/// One row of the summary table: run metrics plus evaluation success rates.
struct SummaryRow {
  std::string label;
  RunMetrics metrics;
  std::optional<double> auto_success;       // fraction in [0, 1]
  std::optional<double> int_aided_success;  // fraction in [0, 1]
};

extern const std::vector<std::string> kSummaryColumns;

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
void write_summary_jsonl(std::ostream& out, std::span<const SummaryRow> rows);

}  // namespace thrifty
