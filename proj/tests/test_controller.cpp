#include <cmath>

#include <doctest.h>

#include "gpcbf/controller.hpp"
#include "test_util.hpp"

using namespace gpcbf;

namespace {

// Integrator plant xdot = u on state domain [0, 5], inputs [-1, 1]; every
// posterior and margin below is hand-computable.
PlantModel integrator_plant() {
  PlantModel plant;
  plant.n = 1;
  plant.m = 1;
  plant.name = "integrator";
  plant.f = [](const Vec&) { return Vec::Zero(1); };
  plant.g = [](const Vec&) { return Mat::Constant(1, 1, 1.0); };
  plant.input_box.lower = Vec::Constant(1, -1.0);
  plant.input_box.upper = Vec::Constant(1, 1.0);
  plant.state_domain.lower = Vec::Constant(1, 0.0);
  plant.state_domain.upper = Vec::Constant(1, 5.0);
  plant.xdot_bound = 1.1;
  return plant;
}

CbfSpec identity_cbf() {
  CbfSpec cbf;
  cbf.h = [](const Vec& x) { return x[0]; };
  cbf.grad_h = [](const Vec&) { return Vec::Constant(1, 1.0); };
  cbf.alpha = linear_alpha(1.0);
  cbf.alpha_lipschitz = 1.0;
  cbf.epsilon = 1.0;
  cbf.h_lipschitz = 1.0;
  cbf.name = "x";
  return cbf;
}

// base and channel kernels with sf^2 = 0.25: prior variance 0.25 (1 + u^2).
std::vector<CompositeKernel> quarter_kernels() {
  CompositeKernel k;
  k.base = SqExpKernel::isotropic(0.25, 0.5, 1);
  k.channels = {SqExpKernel::isotropic(0.25, 0.5, 1)};
  return {k};
}

ControllerConfig scripted_config(ExplorationPolicy policy) {
  ControllerConfig cfg;
  cfg.cbfs = {identity_cbf()};
  cfg.confidence.rkhs_bounds = Vec::Constant(1, 1.0);
  cfg.confidence.noise_scales = Vec::Constant(1, 0.1);
  cfg.confidence.delta = 0.5;
  cfg.dt_sample = 1.5;
  cfg.policy = policy;
  cfg.nominal = [](const Vec&) { return Vec::Zero(1); };
  StateInput grid_point;
  grid_point.x = Vec::Zero(1);
  grid_point.u = Vec::Zero(1);
  cfg.gamma_grid = {grid_point};
  cfg.seed = 99;
  return cfg;
}

double beta_formula(double B, double sigma, double gamma, double n_over_delta) {
  return B + sigma * std::sqrt(2.0 * (gamma + 1.0 + std::log(n_over_delta)));
}

}  // namespace

TEST_SUITE("controller") {

TEST_CASE("scripted trace walks the exploration state machine") {
  const PlantModel plant = integrator_plant();
  const ControllerConfig cfg = scripted_config(ExplorationPolicy::Ucb);
  ControllerState state =
      make_controller(GpPosterior::fit(quarter_kernels(),
                                       Vec::Constant(1, 0.1), {}),
                      cfg);

  const double beta0 = beta_formula(1.0, 0.1, 0.0, 2.0);
  CHECK(state.beta == doctest::Approx(beta0).epsilon(1e-12));
  CHECK(state.N == 0);

  // t = 0, h = 1.5: margin = h - eps/2 - beta sf = 1.0 - 0.5 beta0 > 0, the
  // zero nominal input is strictly feasible and passes through unchanged.
  {
    const ControlDecision d =
        step_controller(state, 0.0, Vec::Constant(1, 1.5), plant, cfg);
    CHECK(d.mode == ControlMode::SafeFilter);
    CHECK(d.u[0] == 0.0);
    CHECK(d.margin == doctest::Approx(1.0 - 0.5 * beta0).epsilon(1e-6));
    CHECK(d.h == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(d.lcb == doctest::Approx(-0.5 * beta0).epsilon(1e-9));
    CHECK(d.ucb == doctest::Approx(0.5 * beta0).epsilon(1e-9));
    CHECK(state.N == 0);
    CHECK(state.gp.size() == 0);
    CHECK(!state.explore);
  }

  // t = 1, h = 1.05: margin goes negative, exploration triggers. The UCB
  // input maximizes beta sqrt(0.25 (1 + u^2)); the +/-1 tie resolves to the
  // lexicographically smaller vertex -1.
  {
    const ControlDecision d =
        step_controller(state, 1.0, Vec::Constant(1, 1.05), plant, cfg);
    CHECK(d.mode == ControlMode::ExploreHold);
    CHECK(d.u[0] == -1.0);
    CHECK(d.margin == doctest::Approx(0.55 - 0.5 * beta0).epsilon(1e-6));
    CHECK(d.margin < 0.0);
    CHECK(state.explore);
    CHECK(state.N == 1);
    CHECK(state.t_trigger == 1.0);
    CHECK(state.exploration_events == 1);
    CHECK(state.gp.size() == 0);  // measurement pending, not appended
    REQUIRE(state.pending.has_value());
    CHECK(state.pending->z.x[0] == 1.05);
    CHECK(state.pending->z.u[0] == -1.0);
    REQUIRE(state.held_input.has_value());
  }

  // t = 2 < t_trigger + dt_sample = 2.5: still holding, nothing appended.
  {
    const ControlDecision d =
        step_controller(state, 2.0, Vec::Constant(1, 0.5), plant, cfg);
    CHECK(d.mode == ControlMode::ExploreHold);
    CHECK(d.u[0] == -1.0);
    CHECK(state.gp.size() == 0);
    CHECK(state.N == 1);
    CHECK(state.exploration_events == 1);
  }

  // t = 3 >= 2.5: the pending measurement lands, beta moves to gamma(1) of
  // the one-point grid, and h = 3 is comfortably feasible again.
  {
    const ControlDecision d =
        step_controller(state, 3.0, Vec::Constant(1, 3.0), plant, cfg);
    const double gamma1 = 0.5 * std::log1p(0.25 / 0.01);
    const double beta1 = beta_formula(1.0, 0.1, gamma1, 2.0);
    CHECK(state.beta == doctest::Approx(beta1).epsilon(1e-12));
    CHECK(d.mode == ControlMode::SafeFilter);
    CHECK(d.u[0] == 0.0);
    CHECK(d.margin > 1.5);
    CHECK(state.gp.size() == 1);
    CHECK(state.N == 1);
    CHECK(!state.explore);
    CHECK(!state.pending.has_value());
    CHECK(!state.held_input.has_value());
  }
}

TEST_CASE("random policy explores with an in-box input, deterministically") {
  const PlantModel plant = integrator_plant();
  const ControllerConfig cfg = scripted_config(ExplorationPolicy::Random);
  auto fresh = [&] {
    return make_controller(
        GpPosterior::fit(quarter_kernels(), Vec::Constant(1, 0.1), {}), cfg);
  };
  ControllerState s1 = fresh(), s2 = fresh();

  const ControlDecision d1 =
      step_controller(s1, 0.0, Vec::Constant(1, 1.05), plant, cfg);
  const ControlDecision d2 =
      step_controller(s2, 0.0, Vec::Constant(1, 1.05), plant, cfg);
  CHECK(d1.mode == ControlMode::ExploreHold);
  CHECK(plant.input_box.contains(d1.u));
  CHECK(d1.u[0] == d2.u[0]);
  CHECK(s1.pending->y[0] == s2.pending->y[0]);
  CHECK(s1.exploration_events == 1);
}

TEST_CASE("perfect model builds zero-radius constraints and filters exactly") {
  const PlantModel plant = integrator_plant();
  ControllerConfig cfg = scripted_config(ExplorationPolicy::Ucb);
  cfg.perfect_model = true;
  cfg.gamma_grid.clear();  // allowed in perfect-model mode
  ControllerState state =
      make_controller(GpPosterior::fit(quarter_kernels(),
                                       Vec::Constant(1, 0.1), {}),
                      cfg);
  CHECK(state.beta == 0.0);

  const ConeProblem prob =
      build_cone_problem(state, Vec::Constant(1, 0.3), plant, cfg);
  REQUIRE(prob.constraints.size() == 1);
  CHECK(prob.constraints[0].radius == 0.0);
  CHECK(prob.constraints[0].a[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(prob.constraints[0].b == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(prob.constraints[0].rhs == doctest::Approx(0.2).epsilon(1e-14));

  // h = 0.3: the exact filter needs u >= eps/2 - h = 0.2; minimum deviation
  // from the zero nominal is exactly 0.2.
  const ControlDecision d =
      step_controller(state, 0.0, Vec::Constant(1, 0.3), plant, cfg);
  CHECK(d.mode == ControlMode::SafeFilter);
  CHECK(d.u[0] == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(state.exploration_events == 0);
}

TEST_CASE("round-robin exploration CBF selection") {
  CHECK(select_exploration_cbf(1, 2) == 0);
  CHECK(select_exploration_cbf(2, 2) == 1);
  CHECK(select_exploration_cbf(3, 2) == 0);
  CHECK(select_exploration_cbf(5, 3) == 1);
  CHECK(select_exploration_cbf(7, 1) == 0);
  CHECK_THROWS_AS(select_exploration_cbf(0, 2), ContractViolation);
  CHECK_THROWS_AS(select_exploration_cbf(1, 0), ContractViolation);
}

TEST_CASE("controller construction validates its inputs") {
  const ControllerConfig good = scripted_config(ExplorationPolicy::Ucb);

  ControllerConfig no_grid = good;
  no_grid.gamma_grid.clear();
  CHECK_THROWS_AS(no_grid.validate(), ContractViolation);

  ControllerConfig no_nominal = good;
  no_nominal.nominal = nullptr;
  CHECK_THROWS_AS(no_nominal.validate(), ContractViolation);

  ControllerConfig bad_dt = good;
  bad_dt.dt_sample = 0.0;
  CHECK_THROWS_AS(bad_dt.validate(), ContractViolation);

  // Output dimension of the posterior must match the confidence parameters.
  ControllerConfig two_bounds = good;
  two_bounds.confidence.rkhs_bounds = Vec::Constant(2, 1.0);
  two_bounds.confidence.noise_scales = Vec::Constant(2, 0.1);
  CHECK_THROWS_AS(
      make_controller(
          GpPosterior::fit(quarter_kernels(), Vec::Constant(1, 0.1), {}),
          two_bounds),
      ContractViolation);
}

TEST_CASE("controller state counter starts at the posterior size") {
  const PlantModel plant = integrator_plant();
  const ControllerConfig cfg = scripted_config(ExplorationPolicy::Ucb);
  std::vector<Measurement> data;
  for (int i = 0; i < 3; ++i) {
    data.push_back(take_measurement(plant, Vec::Constant(1, 1.0 + i),
                                    Vec::Constant(1, 0.5),
                                    cfg.confidence.noise_scales, 50 + i));
  }
  ControllerState state = make_controller(
      GpPosterior::fit(quarter_kernels(), Vec::Constant(1, 0.1), data), cfg);
  CHECK(state.N == 3);
  CHECK(state.gp.size() == 3);
  // gamma(3) of the one-point grid saturates at gamma(1).
  const double gamma1 = 0.5 * std::log1p(0.25 / 0.01);
  CHECK(state.beta ==
        doctest::Approx(beta_formula(1.0, 0.1, gamma1, 2.0)).epsilon(1e-12));
}

TEST_CASE("non-finite states are rejected") {
  const PlantModel plant = integrator_plant();
  const ControllerConfig cfg = scripted_config(ExplorationPolicy::Ucb);
  ControllerState state =
      make_controller(GpPosterior::fit(quarter_kernels(),
                                       Vec::Constant(1, 0.1), {}),
                      cfg);
  Vec bad = Vec::Constant(1, std::nan(""));
  CHECK_THROWS_AS(step_controller(state, 0.0, bad, plant, cfg),
                  ContractViolation);
}

}  // TEST_SUITE
