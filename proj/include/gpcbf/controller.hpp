#ifndef GPCBF_CONTROLLER_HPP
#define GPCBF_CONTROLLER_HPP

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "gpcbf/cbf.hpp"
#include "gpcbf/cone.hpp"
#include "gpcbf/confidence.hpp"
#include "gpcbf/gp.hpp"
#include "gpcbf/plants.hpp"

namespace gpcbf {

enum class ExplorationPolicy { Ucb, Random };
enum class ControlMode { SafeFilter, ExploreHold };

struct ControllerConfig {
  std::vector<CbfSpec> cbfs;
  ConfidenceParams confidence;
  double dt_sample = 1e-3;  // exploratory hold duration
  ExplorationPolicy policy = ExplorationPolicy::Ucb;
  std::function<Vec(const Vec&)> nominal;
  SolveOptions solve_options;
  // Candidate z = (x, u) points for the greedy information-gain estimate
  // behind the beta schedule.
  std::vector<StateInput> gamma_grid;
  std::uint64_t seed = 0;
  // Debug mode: the cone constraints use the true plant dynamics with zero
  // confidence radius, reducing the robust filter to the exact one.
  bool perfect_model = false;

  void validate() const;
};

struct ControlDecision {
  Vec u;
  ControlMode mode = ControlMode::SafeFilter;
  double margin = 0.0;  // joint feasibility margin at decision time
  double lcb = 0.0;     // min over CBFs of the pessimistic hdot at u
  double ucb = 0.0;     // max over CBFs of the optimistic hdot at u
  double h = 0.0;       // min over CBFs of h(x)
};

struct ControllerState {
  bool explore = false;
  std::int64_t N = 0;           // sample counter, equals gp size at rest
  double t_trigger = -std::numeric_limits<double>::infinity();  // t_N
  std::optional<Vec> held_input;
  std::optional<Measurement> pending;  // taken at t_N, appended at t_N + dt
  GpPosterior gp;
  double beta = 0.0;
  int active_cbf_index = 0;
  std::int64_t exploration_events = 0;
  std::mt19937_64 rng;
  // Shared so state copies within one run reuse the same greedy tables.
  std::shared_ptr<std::vector<InfoGainTable>> gain_tables;
  GpWorkspace ws;
  AffineForm form;
};

// Initializes the state machine on a (possibly empty) posterior: builds the
// per-dimension information-gain tables over cfg.gamma_grid and the initial
// beta at N = gp size.
ControllerState make_controller(GpPosterior gp, const ControllerConfig& cfg);

// One noisy observation of xdot at (x, u): y = f(x) + g(x) u + xi with
// xi_i ~ N(0, noise_scales_i^2), deterministic given the seed; z = (x, u).
Measurement take_measurement(const PlantModel& plant, const Vec& x,
                             const Vec& u, const Vec& noise_scales,
                             std::uint64_t seed);

// Round-robin CBF choice for exploration: index (event_number - 1) mod count,
// where event_number is 1-based (call after recording the new event).
int select_exploration_cbf(std::int64_t event_number, int cbf_count);

// The robust cone constraints at state x under the current posterior/beta:
// one constraint per CBF, sharing the trace-variance quadratic.
ConeProblem build_cone_problem(ControllerState& state, const Vec& x,
                               const PlantModel& plant,
                               const ControllerConfig& cfg);

// One decision of the exploration state machine. While strictly feasible it
// returns the filtered nominal input; at the first infeasible instant it
// holds a UCB-maximizing (or uniformly random) input for dt_sample, collects
// one xdot measurement at the trigger time, appends it when the hold ends,
// recomputes beta, and re-enters the feasible branch.
ControlDecision step_controller(ControllerState& state, double t, const Vec& x,
                                const PlantModel& plant,
                                const ControllerConfig& cfg);

}  // namespace gpcbf

#endif  // GPCBF_CONTROLLER_HPP
