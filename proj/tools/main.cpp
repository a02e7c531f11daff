#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "gpcbf/sim.hpp"

namespace {

using namespace gpcbf;

const char* policy_label(ExplorationPolicy p) {
  return p == ExplorationPolicy::Ucb ? "ucb" : "random";
}

void print_summary(const RunSummary& s) {
  std::printf("safe: %s\n", s.safe ? "true" : "false");
  if (s.failure_time) {
    std::printf("failure_time: %.6g\n", *s.failure_time);
  } else {
    std::printf("failure_time: none\n");
  }
  std::printf("exploration_events: %lld\n",
              static_cast<long long>(s.exploration_events));
  if (s.feasibility_recovered_at) {
    std::printf("feasibility_recovered_at: %.6g\n", *s.feasibility_recovered_at);
  } else {
    std::printf("feasibility_recovered_at: none\n");
  }
  std::printf("errored: %s\n", s.errored ? "true" : "false");
  if (s.errored) std::printf("error: %s\n", s.error.c_str());
  std::printf("wall_time_s: %.3f\n", s.wall_time);
}

int cmd_simulate(const std::string& config_path) {
  const SimConfig cfg = load_sim_config(config_path);
  const RunResult result = run_simulation(cfg);
  print_summary(result.summary);
  if (!cfg.output_csv.empty()) {
    std::printf("trajectory_csv: %s\n", cfg.output_csv.c_str());
  }
  if (!cfg.summary_path.empty()) {
    std::printf("summary_file: %s\n", cfg.summary_path.c_str());
  }
  return result.summary.errored ? 1 : 0;
}

int cmd_sweep(const std::string& config_path) {
  const SimConfig cfg = load_sim_config(config_path);
  if (cfg.sweep.dts.empty() || cfg.sweep.policies.empty()) {
    throw ConfigError("sweep: the config must set sweep.dts and sweep.policies");
  }
  const SweepResult result = run_failure_sweep(cfg, cfg.sweep);
  std::printf("%-10s %-8s %7s %9s %13s %7s %12s\n", "dt", "policy", "trials",
              "failures", "failure_rate", "errors", "mean_events");
  bool any_error = false;
  for (const auto& cell : result.cells) {
    std::printf("%-10.4g %-8s %7d %9d %13.4f %7d %12.2f\n", cell.dt,
                policy_label(cell.policy), cell.trials, cell.failures,
                cell.failure_rate(), cell.errors, cell.mean_events);
    if (cell.errors > 0) any_error = true;
  }
  if (!cfg.sweep.table_csv.empty()) {
    std::printf("table_csv: %s\n", cfg.sweep.table_csv.c_str());
  }
  if (!cfg.sweep.trials_csv.empty()) {
    std::printf("trials_csv: %s\n", cfg.sweep.trials_csv.c_str());
  }
  return any_error ? 1 : 0;
}

int cmd_bounds(const std::string& config_path) {
  const SimConfig cfg = load_sim_config(config_path);
  const auto reports = compute_bounds(cfg);
  for (const auto& rep : reports) {
    std::printf("cbf: %s\n", rep.cbf_name.c_str());
    std::printf("  delta_n_max: %lld\n",
                static_cast<long long>(rep.delta_n_max));
    if (rep.closed_form) {
      std::printf("  closed_form_n: %lld\n",
                  static_cast<long long>(*rep.closed_form));
    }
    std::printf("  dt_threshold: %.6g\n", rep.dt_threshold);
    std::printf("  beta_at_n: %.6g\n", rep.beta_at_n);
    std::printf("  epsilon: %.6g\n", cfg.epsilon);
    std::printf("  alpha_lipschitz: %.6g\n", cfg.alpha_slope);
    std::printf("  h_lipschitz: %.6g\n", rep.h_lipschitz);
    std::printf("  xdot_bound: %.6g\n", rep.xdot_bound);
    std::printf("  delta: %.6g\n", cfg.delta);
  }
  return 0;
}

int cmd_fit_hypers(const std::string& config_path) {
  const SimConfig cfg = load_sim_config(config_path);
  const auto kernels = run_fit_hypers(cfg);
  std::printf("fitted %zu output dimensions from %d samples\n", kernels.size(),
              cfg.hyper_fit.count);
  std::printf("hypers_file: %s\n", cfg.hypers_file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Safe learning-based control: robust CBF safety filtering with "
      "on-the-fly GP-bandit exploration"};
  app.require_subcommand(1);

  std::string config_path;
  auto* simulate =
      app.add_subcommand("simulate", "Run one closed-loop simulation");
  simulate->add_option("config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* sweep = app.add_subcommand(
      "sweep", "Failure-rate sweep over sampling times and policies");
  sweep->add_option("config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* bounds = app.add_subcommand(
      "bounds", "Exploration-count and sampling-time bound report");
  bounds->add_option("config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* fit = app.add_subcommand(
      "fit-hypers", "Fit GP hyperparameters and save them to a file");
  fit->add_option("config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(config_path);
    if (sweep->parsed()) return cmd_sweep(config_path);
    if (bounds->parsed()) return cmd_bounds(config_path);
    if (fit->parsed()) return cmd_fit_hypers(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
