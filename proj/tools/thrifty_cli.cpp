// thrifty: train, evaluate and supervise robot-gated imitation learners on
// the bottleneck navigation task.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "thrifty/config.hpp"
#include "thrifty/engine.hpp"
#include "thrifty/fleet.hpp"
#include "thrifty/gateway.hpp"
#include "thrifty/persistence.hpp"
#include "thrifty/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace thrifty;

namespace {

// Random streams used by the CLI itself, disjoint from the engine's.
constexpr std::uint64_t kEvalStream = 20;
constexpr std::uint64_t kEvalSupervisorStream = 21;
constexpr std::uint64_t kFleetSupervisorStream = 22;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration JSON");
  cmd->add_option("--seed", c.seed, "Base random seed");
  cmd->add_option("--noise", c.noise, "Environment process noise std")->check(CLI::NonNegativeNumber);
}

RunConfig base_config(const Common& c, const std::optional<fs::path>& fallback = std::nullopt) {
  RunConfig config;
  if (c.config) {
    config = load_config(*c.config);
  } else if (fallback && fs::exists(*fallback)) {
    config = load_config(*fallback);
  }
  if (c.seed) config.seed = *c.seed;
  if (c.noise) config.env.process_noise_std = *c.noise;
  return config;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

// Rebuilds the parts of a run needed to gate: policy, critic, classifier,
// thresholds.
RunResult load_run(const fs::path& dir, const RunConfig& config) {
  RunResult r;
  r.algorithm = config.algorithm;
  r.policy = load_policy_checkpoint(dir / "policy.json");
  if (fs::exists(dir / "critic.json")) r.critic = load_critic_checkpoint(dir / "critic.json");
  if (fs::exists(dir / "classifier.json")) {
    r.classifier = load_classifier_checkpoint(dir / "classifier.json");
  }
  if (fs::exists(dir / "thresholds.json")) r.thresholds = load_thresholds(dir / "thresholds.json");
  return r;
}

int cmd_demo_collect(const Common& common, int num_demos, const std::string& out) {
  RunConfig config = base_config(common);
  if (num_demos > 0) config.num_demos = num_demos;
  Rng rng = make_rng(config.seed, 1);
  const Dataset demos = collect_demos(config.env, config.oracle, config.num_demos, rng);
  const fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path, demos);
  std::cout << "wrote " << demos.size() << " transitions from " << config.num_demos
            << " demos to " << path.string() << "\n";
  return 0;
}

struct TrainArgs {
  Common common;
  std::optional<std::string> algorithm;
  std::optional<std::string> ablate;
  std::optional<double> alpha;
  std::optional<long> steps;
  bool retrain_from_scratch = false;
  std::string out_dir = "run";
};

int cmd_train(const TrainArgs& a) {
  RunConfig config = base_config(a.common);
  if (a.algorithm) config.algorithm = algorithm_from_string(*a.algorithm);
  if (a.ablate) {
    if (config.algorithm != Algorithm::thrifty) {
      throw UsageError("--ablate only applies to --algorithm thrifty");
    }
    config.clauses = {};
    (*a.ablate == "novelty" ? config.clauses.novelty : config.clauses.risk) = false;
  }
  if (a.alpha) config.alpha_h = *a.alpha;
  if (a.steps) config.interactive_steps = *a.steps;
  if (a.retrain_from_scratch) config.policy.retrain_from_scratch = true;
  config.validate();

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", config_to_json(config));
  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());

  const RunResult result = run(config, nullptr, [&](const EpisodeRecord& record) {
    metrics << episode_record_json(record).dump() << "\n";
    metrics.flush();
  });

  const CheckpointMetadata meta{config.seed, result.interactive_steps, config_hash(config)};
  save_checkpoint(dir / "policy.json", result.policy, meta);
  if (result.critic) save_checkpoint(dir / "critic.json", *result.critic, meta);
  if (result.classifier) save_checkpoint(dir / "classifier.json", *result.classifier, meta);
  if (result.thresholds) save_thresholds(dir / "thresholds.json", *result.thresholds);
  save_dataset(dir / "d_h.jsonl", result.d_h);
  save_dataset(dir / "d_r.jsonl", result.d_r);

  std::cout << to_string(config.algorithm) << " seed " << config.seed << ": "
            << result.episodes.size() << " episodes, " << result.interactive_steps
            << " interactive steps, |D_h| = " << result.d_h.size()
            << ", |D_r| = " << result.d_r.size() << "\n";
  if (result.thresholds) {
    const auto& t = *result.thresholds;
    std::cout << "thresholds: tau_h " << t.tau_h << " tau_a " << t.tau_a << " delta_h "
              << t.delta_h << " delta_a " << t.delta_a << "\n";
  }
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

struct EvalArgs {
  Common common;
  std::string run_dir = "run";
  bool autonomous = false;
  bool with_interventions = false;
  int episodes = 100;
};

int cmd_eval(const EvalArgs& a) {
  if (a.autonomous == a.with_interventions) {
    throw UsageError("pass exactly one of --autonomous or --with-interventions");
  }
  const fs::path dir(a.run_dir);
  const RunConfig config = base_config(a.common, dir / "config.json");
  Rng rng = make_rng(config.seed, kEvalStream);
  const RunResult run = load_run(dir, config);

  json record = fs::exists(dir / "eval.json") ? read_json(dir / "eval.json") : json::object();
  if (a.autonomous) {
    const EvalStats s = evaluate(run.policy, config.env, a.episodes, rng);
    std::cout << "Auto Succ: " << s.successes << "/" << s.episodes << "\n";
    record["auto_success"] = s.success_rate();
    record["auto_episodes"] = s.episodes;
  } else {
    OracleSupervisor oracle(config.oracle, config.env,
                            derive_seed(config.seed, kEvalSupervisorStream));
    auto gate = make_gate(run, config);
    const EvalStats s = evaluate(run.policy, config.env, a.episodes, rng, &oracle, gate.get());
    const RunMetrics m = aggregate(s.stats);
    std::cout << "Int-Aided Succ: " << s.successes << "/" << s.episodes << "\n"
              << "Ints: " << m.total_ints << "  Acts (H): " << m.total_acts_h
              << "  Acts (R): " << m.total_acts_r << "\n";
    record["int_aided_success"] = s.success_rate();
    record["int_aided_episodes"] = s.episodes;
  }
  std::ofstream(dir / "eval.json") << record.dump(2) << "\n";
  return 0;
}

struct FleetArgs {
  Common common;
  std::string run_dir = "run";
  int robots = 3;
  long steps = 350;
  std::optional<std::string> gateway;
  bool remote_gating = false;
  bool keep_acting = false;
  std::optional<std::string> trace;
  double wait_seconds = 30.0;
  int tick_ms = -1;
};

int cmd_fleet(const FleetArgs& a) {
  if (a.remote_gating && !a.gateway) throw UsageError("--remote-gating requires --gateway");
  const fs::path dir(a.run_dir);
  const RunConfig config = base_config(a.common, dir / "config.json");
  const RunResult run = load_run(dir, config);

  FleetConfig fc;
  fc.robots = a.robots;
  fc.steps = a.steps;
  fc.seed = config.seed;
  fc.queued_robots_keep_acting = a.keep_acting;
  fc.env = config.env;
  fc.validate();

  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<Supervisor> supervisor;
  if (a.gateway) {
    GatewayConfig gc;
    gc.address = wire::resolve_address(*a.gateway);
    gc.env = config.env;
    gc.robot_count = a.robots;
    gateway = std::make_unique<Gateway>(gc);
    gateway->start();
    std::cerr << "gateway listening on port " << gateway->port() << "\n";
    if (!gateway->wait_for_supervisor(std::chrono::milliseconds(
            static_cast<long>(a.wait_seconds * 1000)))) {
      std::cerr << "no supervisor connected; robots run autonomously\n";
    }
    supervisor = std::make_unique<RemoteSupervisor>(*gateway, config.env);
  } else {
    supervisor = std::make_unique<OracleSupervisor>(
        config.oracle, config.env, derive_seed(config.seed, kFleetSupervisorStream));
  }
  std::unique_ptr<Gate> gate =
      a.remote_gating ? std::make_unique<RemoteGate>(*gateway) : make_gate(run, config);

  std::optional<std::ofstream> trace;
  if (a.trace) {
    trace.emplace(*a.trace);
    if (!*trace) throw std::runtime_error("cannot write " + *a.trace);
  }
  const auto pause = std::chrono::milliseconds(a.tick_ms >= 0 ? a.tick_ms : (gateway ? 100 : 0));
  const FleetMetrics m =
      run_fleet(fc, run.policy, *supervisor, *gate, [&](const FleetState& state) {
        if (trace) {
          *trace << wire::encode(wire::state_update(state)) << "\n";
          for (const auto& e : wire::event_messages(state)) *trace << wire::encode(e) << "\n";
        }
        if (gateway) {
          gateway->publish(state);
          if (pause.count() > 0) std::this_thread::sleep_for(pause);
        }
      });
  if (gateway) gateway->stop();

  std::cout << "Successes: " << m.successes << "  Episodes: " << m.episodes << "\n"
            << "Ints: " << m.ints << "  Acts (H): " << m.acts_h << "  Acts (R): " << m.acts_r
            << "\n"
            << "Mean idle: " << m.mean_idle << "\n";
  return 0;
}

int cmd_export(const std::vector<std::string>& run_dirs, const std::string& format,
               const std::optional<std::string>& output) {
  std::vector<SummaryRow> rows;
  for (const auto& d : run_dirs) {
    const fs::path dir(d);
    const RunConfig config = load_config(dir / "config.json");
    std::ifstream in(dir / "metrics.jsonl");
    if (!in) throw std::runtime_error("cannot open " + (dir / "metrics.jsonl").string());
    std::vector<EpisodeStats> stats;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) stats.push_back(episode_stats_from_json(json::parse(line)));
    }
    SummaryRow row;
    row.label = std::string(to_string(config.algorithm));
    if (!config.clauses.novelty) row.label += " (no novelty)";
    if (!config.clauses.risk) row.label += " (no risk)";
    row.metrics = aggregate(stats);
    if (fs::exists(dir / "eval.json")) {
      const json e = read_json(dir / "eval.json");
      if (e.contains("auto_success")) row.auto_success = e["auto_success"].get<double>();
      if (e.contains("int_aided_success")) {
        row.int_aided_success = e["int_aided_success"].get<double>();
      }
    }
    rows.push_back(std::move(row));
  }
  std::ofstream file;
  if (output) {
    file.open(*output);
    if (!file) throw std::runtime_error("cannot write " + *output);
  }
  std::ostream& out = output ? file : std::cout;
  if (format == "csv") {
    write_summary_csv(out, rows);
  } else {
    write_summary_jsonl(out, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robot-gated interactive imitation learning on a 2-D bottleneck task"};
  app.require_subcommand(1);

  Common demo_common;
  int num_demos = 0;
  std::string demo_out = "run/demos.jsonl";
  auto* demo = app.add_subcommand("demo-collect", "Record oracle demonstrations");
  add_common(demo, demo_common);
  demo->add_option("--num-demos", num_demos, "Number of demos (default from config)")
      ->check(CLI::PositiveNumber);
  demo->add_option("--out", demo_out, "Dataset path (JSONL)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Run an interactive learner and save its models");
  add_common(train, train_args.common);
  train->add_option("--algorithm", train_args.algorithm, "Learner")
      ->check(CLI::IsMember({"thrifty", "bc", "safedagger", "lazydagger", "hgdagger"}));
  train->add_option("--ablate", train_args.ablate, "Drop one gate clause (thrifty only)")
      ->check(CLI::IsMember({"novelty", "risk"}));
  train->add_option("--alpha", train_args.alpha, "Target intervention rate alpha_h")
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--steps", train_args.steps, "Interactive step budget")
      ->check(CLI::NonNegativeNumber);
  train->add_flag("--retrain-from-scratch", train_args.retrain_from_scratch,
                  "Reinitialise the ensemble before each retrain");
  train->add_option("--out-dir", train_args.out_dir, "Output directory");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained policy");
  add_common(eval, eval_args.common);
  eval->add_option("--run-dir", eval_args.run_dir, "Directory written by train");
  auto* auto_flag = eval->add_flag("--autonomous", eval_args.autonomous, "No supervisor");
  auto* int_flag = eval->add_flag("--with-interventions", eval_args.with_interventions,
                                  "Oracle supervisor behind the run's gate");
  auto_flag->excludes(int_flag);
  eval->add_option("--episodes", eval_args.episodes, "Evaluation episodes")
      ->check(CLI::PositiveNumber);

  FleetArgs fleet_args;
  auto* fleet = app.add_subcommand("fleet", "Simulate several robots sharing one supervisor");
  add_common(fleet, fleet_args.common);
  fleet->add_option("--run-dir", fleet_args.run_dir, "Directory written by train");
  fleet->add_option("--robots", fleet_args.robots, "Robot count")->check(CLI::PositiveNumber);
  fleet->add_option("--steps", fleet_args.steps, "Ticks to simulate")->check(CLI::NonNegativeNumber);
  fleet->add_option("--gateway", fleet_args.gateway,
                    std::string("Serve a remote supervisor at host:port (default $") +
                        wire::kAddressEnvVar + " or " + wire::kDefaultAddress + ")")
      ->expected(0, 1);
  fleet->add_flag("--remote-gating", fleet_args.remote_gating,
                  "The remote client decides when to take over");
  fleet->add_flag("--keep-acting", fleet_args.keep_acting, "Queued robots keep moving");
  fleet->add_option("--trace", fleet_args.trace, "Per-tick JSONL trace");
  fleet->add_option("--wait", fleet_args.wait_seconds, "Seconds to wait for a supervisor");
  fleet->add_option("--tick-ms", fleet_args.tick_ms, "Pause between ticks");

  std::vector<std::string> export_dirs{"run"};
  std::string export_format;
  std::optional<std::string> export_out;
  auto* exp = app.add_subcommand("export", "Summarise runs as a table");
  exp->add_option("--run-dir", export_dirs, "Run directories")->expected(1, -1);
  exp->add_option("--format", export_format, "csv or jsonl")
      ->required()
      ->check(CLI::IsMember({"csv", "jsonl"}));
  exp->add_option("--output", export_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*demo) return cmd_demo_collect(demo_common, num_demos, demo_out);
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*fleet) {
      // A bare --gateway means "use the environment variable or default".
      if (fleet->count("--gateway") && !fleet_args.gateway) fleet_args.gateway = "";
      return cmd_fleet(fleet_args);
    }
    if (*exp) return cmd_export(export_dirs, export_format, export_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
