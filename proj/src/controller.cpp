#include "gpcbf/controller.hpp"

#include <cmath>

namespace gpcbf {

namespace {

Vec gamma_vector(ControllerState& state) {
  const int n = state.gp.output_dim();
  Vec gammas(n);
  for (int i = 0; i < n; ++i) {
    gammas[i] = (*state.gain_tables)[i].gamma(static_cast<int>(state.N));
  }
  return gammas;
}

void fill_diagnostics(const ConeProblem& prob,
                      const std::vector<CbfSpec>& cbfs, const Vec& x,
                      const Vec& u, ControlDecision& d) {
  d.lcb = std::numeric_limits<double>::infinity();
  d.ucb = -std::numeric_limits<double>::infinity();
  d.h = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prob.constraints.size(); ++k) {
    const ConeConstraint& c = prob.constraints[k];
    d.lcb = std::min(d.lcb, c.slack(u) + c.rhs);
    d.ucb = std::max(d.ucb, c.ucb_value(u));
    d.h = std::min(d.h, cbfs[k].h(x));
  }
}

ControlDecision act_on_feasibility(ControllerState& state, double t,
                                   const Vec& x, const PlantModel& plant,
                                   const ControllerConfig& cfg) {
  ConeProblem prob = build_cone_problem(state, x, plant, cfg);
  const FilterResult res = solve_safety_filter(prob, cfg.solve_options);

  ControlDecision decision;
  decision.margin = res.margin;
  if (res.status == FilterStatus::Feasible) {
    decision.u = res.u;
    decision.mode = ControlMode::SafeFilter;
    fill_diagnostics(prob, cfg.cbfs, x, decision.u, decision);
    return decision;
  }

  // First infeasible instant: start an exploration event.
  state.explore = true;
  state.N += 1;
  state.t_trigger = t;
  state.exploration_events += 1;
  state.active_cbf_index = select_exploration_cbf(
      state.exploration_events, static_cast<int>(cfg.cbfs.size()));

  Vec u_explore;
  if (cfg.policy == ExplorationPolicy::Ucb) {
    u_explore = ucb_maximizing_input(
        prob.constraints[static_cast<std::size_t>(state.active_cbf_index)],
        plant.input_box);
  } else {
    u_explore = sample_input(plant.input_box, state.rng);
  }
  state.held_input = u_explore;
  state.pending = take_measurement(plant, x, u_explore,
                                   cfg.confidence.noise_scales, state.rng());

  decision.u = u_explore;
  decision.mode = ControlMode::ExploreHold;
  fill_diagnostics(prob, cfg.cbfs, x, decision.u, decision);
  return decision;
}

}  // namespace

void ControllerConfig::validate() const {
  require(!cbfs.empty(), "ControllerConfig: at least one CBF is required");
  for (const auto& cbf : cbfs) cbf.validate();
  confidence.validate();
  require(dt_sample > 0.0, "ControllerConfig: dt_sample must be positive");
  require(static_cast<bool>(nominal), "ControllerConfig: nominal controller unset");
  require(!gamma_grid.empty() || perfect_model,
          "ControllerConfig: gamma_grid must be non-empty");
}

ControllerState make_controller(GpPosterior gp, const ControllerConfig& cfg) {
  cfg.validate();
  require(gp.output_dim() == cfg.confidence.rkhs_bounds.size(),
          "make_controller: confidence parameters do not match the posterior");
  ControllerState state;
  state.gp = std::move(gp);
  state.N = state.gp.size();
  state.rng.seed(cfg.seed);
  state.gain_tables = std::make_shared<std::vector<InfoGainTable>>();
  if (cfg.perfect_model) {
    // The true-dynamics debug mode never consults beta or the gain tables.
    state.beta = 0.0;
    return state;
  }
  state.gain_tables->reserve(static_cast<std::size_t>(state.gp.output_dim()));
  for (int i = 0; i < state.gp.output_dim(); ++i) {
    state.gain_tables->emplace_back(state.gp.kernel(i), state.gp.noise_scale(i),
                                    cfg.gamma_grid);
  }
  state.beta = confidence_beta(cfg.confidence, gamma_vector(state));
  return state;
}

Measurement take_measurement(const PlantModel& plant, const Vec& x,
                             const Vec& u, const Vec& noise_scales,
                             std::uint64_t seed) {
  require(noise_scales.size() == plant.n,
          "take_measurement: noise scale per state dimension required");
  Measurement meas;
  meas.z.x = x;
  meas.z.u = u;
  meas.y = plant.f(x) + plant.g(x) * u;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < plant.n; ++i) {
    if (noise_scales[i] > 0.0) meas.y[i] += noise_scales[i] * gauss(rng);
  }
  return meas;
}

int select_exploration_cbf(std::int64_t event_number, int cbf_count) {
  require(cbf_count >= 1, "select_exploration_cbf: empty CBF list");
  require(event_number >= 1, "select_exploration_cbf: events are 1-based");
  return static_cast<int>((event_number - 1) % cbf_count);
}

ConeProblem build_cone_problem(ControllerState& state, const Vec& x,
                               const PlantModel& plant,
                               const ControllerConfig& cfg) {
  ConeProblem prob;
  prob.box = plant.input_box;
  prob.u_nom = cfg.nominal(x);
  prob.constraints.resize(cfg.cbfs.size());

  if (cfg.perfect_model) {
    const Vec f = plant.f(x);
    const Mat g = plant.g(x);
    for (std::size_t k = 0; k < cfg.cbfs.size(); ++k) {
      const CbfSpec& cbf = cfg.cbfs[k];
      ConeConstraint& c = prob.constraints[k];
      const Vec grad = cbf.grad_h(x);
      c.a.noalias() = g.transpose() * grad;
      c.b = grad.dot(f);
      c.radius = 0.0;
      c.M = Mat::Zero(plant.m + 1, plant.m + 1);
      c.rhs = -cbf.alpha(cbf.h(x)) + 0.5 * cbf.epsilon;
    }
    return prob;
  }

  state.gp.affine_form(x, state.form, state.ws);
  for (std::size_t k = 0; k < cfg.cbfs.size(); ++k) {
    const CbfSpec& cbf = cfg.cbfs[k];
    ConeConstraint& c = prob.constraints[k];
    const Vec grad = cbf.grad_h(x);
    c.a.noalias() = state.form.A.transpose() * grad;
    c.b = grad.dot(state.form.b);
    c.radius = cbf.h_lipschitz * state.beta;
    c.M = state.form.M;
    c.rhs = -cbf.alpha(cbf.h(x)) + 0.5 * cbf.epsilon;
  }
  return prob;
}

ControlDecision step_controller(ControllerState& state, double t, const Vec& x,
                                const PlantModel& plant,
                                const ControllerConfig& cfg) {
  require(x.allFinite(), "step_controller: non-finite state");

  if (state.explore) {
    if (t < state.t_trigger + cfg.dt_sample) {
      // Keep holding the exploratory input; report the margin at the current
      // state for the log.
      ConeProblem prob = build_cone_problem(state, x, plant, cfg);
      ControlDecision decision;
      decision.u = *state.held_input;
      decision.mode = ControlMode::ExploreHold;
      decision.margin = feasibility_margin(prob, cfg.solve_options);
      fill_diagnostics(prob, cfg.cbfs, x, decision.u, decision);
      return decision;
    }
    // Hold complete: apply the measurement taken at the trigger time, then
    // re-enter the feasibility check with the updated posterior.
    state.gp = state.gp.append(*state.pending);
    state.pending.reset();
    state.held_input.reset();
    state.explore = false;
    if (!cfg.perfect_model) {
      state.beta = confidence_beta(cfg.confidence, gamma_vector(state));
    }
  }

  return act_on_feasibility(state, t, x, plant, cfg);
}

}  // namespace gpcbf
