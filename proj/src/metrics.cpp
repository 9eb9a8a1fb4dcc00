#include "thrifty/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace thrifty {

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

nlohmann::json optional_mean_std(const std::optional<MeanStd>& v) {
  if (!v) return nullptr;
  return {{"mean", v->mean}, {"std", v->std}};
}

std::string csv_mean_std(const std::optional<MeanStd>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(6) << v->mean << " +- " << v->std;
  return s.str();
}

std::string csv_fraction(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(6) << *v;
  return s.str();
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

EpisodeStats episode_stats(std::span<const Mode> mode_trace, bool success) {
  if (mode_trace.empty()) throw std::invalid_argument("episode_stats: empty mode trace");
  EpisodeStats s;
  s.success = success;
  Mode previous = Mode::autonomous;
  for (Mode m : mode_trace) {
    if (m == Mode::supervisor) {
      ++s.acts_h;
      if (previous == Mode::autonomous) ++s.ints;
    } else {
      ++s.acts_r;
    }
    previous = m;
  }
  return s;
}

RunMetrics aggregate(std::span<const EpisodeStats> stats) {
  RunMetrics r;
  std::vector<double> ints, acts_h, acts_r;
  for (const auto& e : stats) {
    ++r.episodes;
    r.total_ints += e.ints;
    r.total_acts_h += e.acts_h;
    r.total_acts_r += e.acts_r;
    for (SwitchCause c : e.switch_causes) {
      switch (c) {
        case SwitchCause::novelty: ++r.total_switches_novelty; break;
        case SwitchCause::risk: ++r.total_switches_risk; break;
        case SwitchCause::external: ++r.total_switches_external; break;
      }
    }
    if (!e.success) continue;
    ++r.successes;
    ints.push_back(e.ints);
    acts_h.push_back(e.acts_h);
    acts_r.push_back(e.acts_r);
  }
  if (r.successes > 0) {
    r.ints = mean_std(ints);
    r.acts_h = mean_std(acts_h);
    r.acts_r = mean_std(acts_r);
  }
  return r;
}

double burden(double context_switches, double intervention_length, double latency) {
  if (!(context_switches >= 0.0) || !(intervention_length >= 0.0) || !(latency >= 0.0)) {
    throw std::invalid_argument("burden: inputs must be non-negative");
  }
  return context_switches * (latency + intervention_length);
}

std::optional<BurdenInputs> burden_inputs(std::span<const EpisodeStats> stats) {
  double ints = 0.0;
  double acts_h = 0.0;
  int successes = 0;
  for (const auto& e : stats) {
    if (!e.success) continue;
    ++successes;
    ints += e.ints;
    acts_h += e.acts_h;
  }
  if (successes == 0) return std::nullopt;
  return BurdenInputs{ints / successes, ints > 0.0 ? acts_h / ints : 0.0};
}

const std::vector<std::string> kSummaryColumns{
    "Ints", "Acts (H)", "Acts (R)", "T Ints", "T Acts (H)", "T Acts (R)", "Auto Succ",
    "Int-Aided Succ"};

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << "Algorithm";
  for (const auto& c : kSummaryColumns) out << ',' << csv_escape(c);
  out << '\n';
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out << csv_escape(row.label) << ',' << csv_mean_std(m.ints) << ','
        << csv_mean_std(m.acts_h) << ',' << csv_mean_std(m.acts_r) << ',' << m.total_ints
        << ',' << m.total_acts_h << ',' << m.total_acts_r << ','
        << csv_fraction(row.auto_success) << ',' << csv_fraction(row.int_aided_success) << '\n';
  }
}

void write_summary_jsonl(std::ostream& out, std::span<const SummaryRow> rows) {
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    nlohmann::ordered_json j;
    j["Algorithm"] = row.label;
    j["Ints"] = optional_mean_std(m.ints);
    j["Acts (H)"] = optional_mean_std(m.acts_h);
    j["Acts (R)"] = optional_mean_std(m.acts_r);
    j["T Ints"] = m.total_ints;
    j["T Acts (H)"] = m.total_acts_h;
    j["T Acts (R)"] = m.total_acts_r;
    j["Auto Succ"] = row.auto_success ? nlohmann::json(*row.auto_success) : nlohmann::json();
    j["Int-Aided Succ"] =
        row.int_aided_success ? nlohmann::json(*row.int_aided_success) : nlohmann::json();
    out << j.dump() << '\n';
  }
}

}  // namespace thrifty
