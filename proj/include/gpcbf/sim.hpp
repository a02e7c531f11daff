#ifndef GPCBF_SIM_HPP
#define GPCBF_SIM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpcbf/controller.hpp"
#include "gpcbf/hyperfit.hpp"
#include "gpcbf/theory.hpp"

namespace gpcbf {

struct HyperFitSpec {
  bool enabled = true;
  int count = 10;          // measurements used only to fit hyperparameters
  std::uint64_t seed = 7;
  int restarts = 8;
  bool ard = true;
};

struct SweepSpec {
  std::vector<double> dts;
  std::vector<ExplorationPolicy> policies;
  int trials = 1;
  bool stop_on_failure = true;  // end a trial at the first h < 0 record
  Vec region_lower;             // initial-state sampling box (full state)
  Vec region_upper;
  std::string table_csv;
  std::string trials_csv;
};

struct BoundsSpec {
  bool use_growth = false;  // also evaluate the closed form
  double c_gamma = 1.0;
  double omega = 0.0;
  double theta = 0.0;
};

struct SimConfig {
  std::string plant;  // "cruise" or "quadrotor"
  double horizon = 10.0;
  double dt_sample = 1e-3;
  double dt_int = 0.0;  // 0 -> min(dt_sample / 10, 1e-3)
  double epsilon = 0.5;
  double alpha_slope = 1.0;
  double delta = 0.01;
  std::uint64_t seed = 1;
  ExplorationPolicy policy = ExplorationPolicy::Ucb;
  int gamma_grid_size = 512;
  Vec initial_state;
  Vec rkhs_bounds;
  Vec noise_scales;
  std::string output_csv;
  std::string summary_path;
  CruiseParams cruise;
  QuadrotorParams quadrotor;
  Vec quad_setpoint;  // position setpoint of the hover controller
  HyperFitSpec hyper_fit;
  std::string hypers_file;  // load hyperparameters instead of fitting
  bool perfect_model = false;
  SweepSpec sweep;
  BoundsSpec bounds;

  double effective_dt_int() const {
    return dt_int > 0.0 ? dt_int : std::min(dt_sample / 10.0, 1e-3);
  }
  void validate() const;
};

SimConfig load_sim_config(const std::string& path);

struct TrajectoryLog {
  std::vector<double> t;
  Mat x;  // records x n
  Mat u;  // records x m
  std::vector<ControlMode> mode;
  Mat h;  // records x cbf count
  Vec margin;
  std::vector<std::int64_t> N;
  Vec beta;
  std::vector<std::string> cbf_names;

  int records() const { return static_cast<int>(t.size()); }
};

struct RunSummary {
  bool safe = true;  // min over time and CBFs of h stayed >= 0
  std::optional<double> failure_time;
  std::int64_t exploration_events = 0;
  std::optional<double> feasibility_recovered_at;  // first safe-mode instant
                                                   // after the last event
  double wall_time = 0.0;
  bool errored = false;
  std::string error;
};

struct RunResult {
  TrajectoryLog log;
  RunSummary summary;
};

// Closed-loop simulation from t = 0 to the horizon; deterministic given the
// config. Solver or integration failures produce a partial log plus an error
// summary instead of propagating.
RunResult run_simulation(const SimConfig& cfg);

struct SweepCell {
  double dt = 0.0;
  ExplorationPolicy policy = ExplorationPolicy::Ucb;
  int trials = 0;
  int failures = 0;
  int errors = 0;
  double mean_events = 0.0;
  double failure_rate() const {
    return trials > 0 ? static_cast<double>(failures) / trials : 0.0;
  }
};

struct SweepTrial {
  double dt = 0.0;
  ExplorationPolicy policy = ExplorationPolicy::Ucb;
  int trial = 0;
  std::uint64_t seed = 0;
  Vec initial_state;  // the sampled start; rebuilding a SimConfig from this
                      // row and the seed reproduces the trial exactly
  bool safe = true;
  std::optional<double> failure_time;
  std::int64_t exploration_events = 0;
  double min_h = 0.0;
  bool errored = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepTrial> trials;
};

// Failure-rate table over dt x policy with `trials` runs per cell; initial
// states are drawn uniformly from the sweep region (every draw satisfies
// alpha(h) >= epsilon), per-trial seeds derive from the base seed and the
// cell key, and results are independent of execution order.
SweepResult run_failure_sweep(const SimConfig& base, const SweepSpec& spec);

struct BoundsReport {
  std::string cbf_name;
  std::int64_t delta_n_max = 0;
  std::optional<std::int64_t> closed_form;
  double dt_threshold = 0.0;
  double beta_at_n = 0.0;
  double h_lipschitz = 0.0;
  double xdot_bound = 0.0;
};

std::vector<BoundsReport> compute_bounds(const SimConfig& cfg);

// Fit hyperparameters per cfg.hyper_fit and save them to cfg.hypers_file
// (must be set). Simulating with that hypers_file then reproduces a run that
// fitted in-process with the same config. Returns the fitted kernels.
std::vector<CompositeKernel> run_fit_hypers(const SimConfig& cfg);

// Deterministic low-discrepancy z = (x, u) grid over X x U; quaternion
// blocks are renormalized. The seed offsets the Halton index.
std::vector<StateInput> make_gamma_grid(const PlantModel& plant, int count,
                                        std::uint64_t seed);

// Default composite kernels for a plant (unit signal variance, lengthscales
// from the domain span), the starting point for hyperparameter fitting.
std::vector<CompositeKernel> default_kernels(const PlantModel& plant, bool ard);

// Measurements at uniformly sampled (x, u) for hyperparameter fitting.
std::vector<Measurement> sample_fit_data(const PlantModel& plant,
                                         const Vec& noise_scales, int count,
                                         std::uint64_t seed);

// Interpolant-norm estimate of the RKHS norm of each output dimension of the
// true dynamics on sampled data: sqrt(y' K^-1 y) per dimension. A projection
// lower bound, used to suggest config rkhs_bounds.
Vec estimate_rkhs_norms(const PlantModel& plant,
                        const std::vector<CompositeKernel>& kernels,
                        int samples, std::uint64_t seed);

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log);
void write_run_summary(const std::string& path, const RunSummary& summary);
void write_sweep_csvs(const SweepSpec& spec, const SweepResult& result);

}  // namespace gpcbf

#endif  // GPCBF_SIM_HPP
