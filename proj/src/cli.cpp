#include "dhs/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "dhs/config.hpp"
#include "dhs/harness.hpp"

namespace dhs {

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("DHS_RL_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet" || v == "error" || v == "0") return LogLevel::Quiet;
  if (v == "debug" || v == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level()) {}
  void info(const std::string& msg) const {
    if (level_ >= LogLevel::Info) err_ << "[info] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ >= LogLevel::Debug) err_ << "[debug] " << msg << '\n';
  }
  void error(const std::string& msg) const { err_ << "error: " << msg << '\n'; }

 private:
  std::ostream& err_;
  LogLevel level_;
};

std::string vector_text(const Vector& v) {
  std::string s;
  for (long i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_number(v(i));
  }
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ValidationFailed, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::ValidationFailed, "failed writing " + path.string());
}

int cmd_validate(const std::string& config_path, std::ostream& out) {
  const Config config = load_config(config_path);
  const Scenario scenario = parse_scenario(config.doc);
  auto check = [&out](const std::string& name, auto&& body) {
    try {
      const std::string detail = body();
      out << "PASS " << name << (detail.empty() ? "" : ": " + detail) << '\n';
    } catch (const Error& err) {
      out << "FAIL " << name << ": " << err.what() << '\n';
      throw Error(ErrorKind::ValidationFailed, name + " check failed: " + err.what());
    }
  };
  DhsPlant plant;
  check("topology", [&] {
    validate(scenario.topology);
    return std::to_string(scenario.size()) + " exchangers, " +
           std::to_string(scenario.topology.pipes.size()) + " pipes";
  });
  check("discretization", [&] {
    plant = discretize(scenario.topology, scenario.tau);
    return "tau " + format_number(scenario.tau) + ", open-loop spectral radius " +
           format_number(spectral_radius(plant.Ad));
  });
  check("augmentation-rank", [&] {
    build_augmented(plant, scenario.weights, scenario.Qe, scenario.Re);
    return "rank " + std::to_string(augmentation_rank(plant, scenario.weights)) + " of " +
           std::to_string(2 * scenario.size());
  });
  check("initial-controller", [&] {
    const AugmentedSystem aug =
        build_augmented(plant, scenario.weights, scenario.Qe, scenario.Re);
    const Matrix K0 = initial_controller(plant, scenario.weights, scenario.Qe, scenario.Re);
    return "closed-loop spectral radius " + format_number(spectral_radius(aug.closed_loop(K0)));
  });
  check("varied-plant", [&] {
    const ScenarioModels models = build_models(scenario);
    return "variation " + format_number(scenario.variation) +
           ", closed-loop spectral radius " +
           format_number(spectral_radius(models.true_aug.closed_loop(models.K0)));
  });
  return kExitOk;
}

int cmd_dispatch(const std::string& config_path, long step, std::ostream& out) {
  const Config config = load_config(config_path);
  const Scenario scenario = parse_scenario(config.doc);
  const Matrix lq = build_lq(scenario.topology);
  const Vector Pdis = scenario.disturbance.at(step, scenario.size());
  const DispatchSolution sol =
      solve_dispatch(lq, scenario.weights.f, scenario.weights.g, Pdis);
  const OptimalityReport r =
      check_optimality(lq, sol.P, sol.T, scenario.weights.f, scenario.weights.g, Pdis, 1e-9);
  out << "P_dis " << vector_text(Pdis) << '\n'
      << "P " << vector_text(sol.P) << '\n'
      << "T " << vector_text(sol.T) << '\n'
      << "z " << format_number(sol.z) << '\n'
      << "marginal_cost_residual " << format_number(r.marginal_cost_residual) << '\n'
      << "weighted_sum_residual " << format_number(r.weighted_sum_residual) << '\n'
      << "balance_residual " << format_number(r.balance_residual) << '\n'
      << "optimal " << (r.optimal ? "true" : "false") << '\n';
  return kExitOk;
}

int cmd_run(const std::string& name, const std::string& config_path,
            const RunOverrides& overrides, const std::string& out_dir, std::ostream& out,
            const Log& log) {
  const Config config = load_config(config_path);
  const ExperimentPlan plan = plan_experiment(config, name, overrides);
  log.info("running " + name + " (config " + plan.config_hash + ", seed " +
           std::to_string(plan.base.seed) + ")");
  const ExperimentReport report = run_experiment(plan);
  for (const auto& c : report.summary["cases"]) {
    log.debug(c["case"].get<std::string>() + ": " + std::to_string(c["iterations"].get<int>()) +
              " iterations, gain distance " + c["final_gain_distance"].dump());
  }

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [suffix, csv] : report.trajectories) {
    written.push_back(dir / (suffix.empty() ? name + ".csv" : name + "__" + suffix + ".csv"));
    write_file(written.back(), csv);
  }
  written.push_back(dir / (name + ".iterations.csv"));
  write_file(written.back(), report.iterations_csv);
  written.push_back(dir / (name + ".summary.json"));
  write_file(written.back(), report.summary.dump(2) + "\n");

  out << "experiment " << name << '\n'
      << "config_hash " << plan.config_hash << '\n'
      << "iterations " << report.summary["iterations"].dump() << '\n'
      << "final_gain_distance " << report.summary["final_gain_distance"].dump() << '\n';
  for (const auto& path : written) out << "wrote " << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Diverged:
      return kExitDiverged;
    case ErrorKind::NotContractive:
    case ErrorKind::NoConvergence:
    case ErrorKind::SequenceTooShort:
    case ErrorKind::HistoryTooShort:
    case ErrorKind::RankDeficient:
    case ErrorKind::IllConditioned:
    case ErrorKind::SingularBlock:
    case ErrorKind::DestabilizingUpdate:
    case ErrorKind::IterationCapExceeded:
    case ErrorKind::HorizonExhausted:
      return kExitEstimation;
    default:
      return kExitConfig;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"On-policy learning of optimal dispatch regulators for district heating",
               "dhs-rl"};
  app.require_subcommand(1);

  std::string config_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a network config");
  validate_cmd->add_option("config", config_path, "Config document (JSON)")->required();

  long step = 0;
  auto* dispatch_cmd = app.add_subcommand("dispatch", "Solve the steady-state dispatch");
  dispatch_cmd->add_option("config", config_path, "Config document (JSON)")->required();
  dispatch_cmd->add_option("--step", step, "Disturbance at this step (default 0)");

  std::string experiment;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<std::string> method;
  std::optional<double> eps;
  std::optional<int> iters_cap;
  auto* run_cmd = app.add_subcommand("run", "Run a scripted experiment");
  run_cmd->add_option("experiment", experiment,
                      "variation | disturbance | nominal-comparison | indirect-comparison")
      ->required();
  run_cmd->add_option("config", config_path, "Config document (JSON)")->required();
  run_cmd->add_option("--seed", seed, "Random seed (required unless set in the config)");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--method", method, "matrix | scalar-ls")
      ->check(CLI::IsMember({"matrix", "scalar-ls"}));
  run_cmd->add_option("--eps", eps, "Stop tolerance on ||K_{i+1} - K_i||_F");
  run_cmd->add_option("--iters-cap", iters_cap, "Policy-iteration cap");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const Log log(err);
  try {
    if (*validate_cmd) return cmd_validate(config_path, out);
    if (*dispatch_cmd) return cmd_dispatch(config_path, step, out);
    RunOverrides overrides;
    overrides.seed = seed;
    if (method) overrides.method = parse_method(*method);
    overrides.eps = eps;
    overrides.iteration_cap = iters_cap;
    return cmd_run(experiment, config_path, overrides, out_dir, out, log);
  } catch (const Error& e) {
    log.error(e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    log.error(e.what());
    return kExitConfig;
  }
}

}  // namespace dhs
