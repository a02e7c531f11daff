#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "gpcbf/sim.hpp"

using namespace gpcbf;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& text) {
  int lines = 0;
  for (const char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

std::string write_temp_json(const std::string& name, const std::string& body) {
  const std::string path = temp_path(name);
  std::ofstream out(path);
  REQUIRE(static_cast<bool>(out));
  out << body;
  return path;
}

SimConfig cruise_base() {
  SimConfig cfg;
  cfg.plant = "cruise";
  cfg.horizon = 0.2;
  cfg.dt_sample = 0.01;
  cfg.epsilon = 0.5;
  cfg.alpha_slope = 1.0;
  cfg.delta = 0.01;
  cfg.seed = 11;
  cfg.gamma_grid_size = 64;
  cfg.initial_state = (Vec(2) << 20.0, 80.0).finished();
  cfg.rkhs_bounds = (Vec(2) << 1.0, 1.0).finished();
  cfg.noise_scales = (Vec(2) << 0.05, 0.05).finished();
  cfg.hyper_fit.enabled = false;
  return cfg;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("perfect-model cruise run stays safe and never explores") {
  SimConfig cfg = cruise_base();
  cfg.perfect_model = true;
  cfg.noise_scales = Vec::Zero(2);
  const RunResult res = run_simulation(cfg);

  CHECK(!res.summary.errored);
  CHECK(res.summary.safe);
  CHECK(res.summary.exploration_events == 0);
  CHECK(!res.summary.failure_time.has_value());
  CHECK(!res.summary.feasibility_recovered_at.has_value());
  REQUIRE(res.log.records() == 201);  // horizon 0.2 at dt_int 1e-3
  for (int i = 0; i < res.log.records(); ++i) {
    CHECK(res.log.mode[static_cast<std::size_t>(i)] == ControlMode::SafeFilter);
    CHECK(res.log.h.row(i).minCoeff() >= 0.0);
    CHECK(res.log.beta[i] == 0.0);
    CHECK(res.log.N[static_cast<std::size_t>(i)] == 0);
  }
  CHECK(res.log.cbf_names == std::vector<std::string>{"headway"});
}

TEST_CASE("noisy run near the boundary explores and recovers") {
  SimConfig cfg = cruise_base();
  cfg.horizon = 0.4;
  cfg.initial_state = (Vec(2) << 20.0, 36.6).finished();  // h(x0) = 0.6
  const RunResult res = run_simulation(cfg);

  CHECK(!res.summary.errored);
  CHECK(res.summary.safe);
  CHECK(res.summary.exploration_events >= 2);
  REQUIRE(res.summary.feasibility_recovered_at.has_value());
  CHECK(*res.summary.feasibility_recovered_at > 0.0);
  CHECK(*res.summary.feasibility_recovered_at <= cfg.horizon);

  // The sample counter is nondecreasing, increments exactly at triggers, and
  // every trigger happens at a nonpositive margin; beta grows with the data.
  std::int64_t prev_n = 0;
  double prev_beta = res.log.beta[0];
  for (int i = 0; i < res.log.records(); ++i) {
    const std::int64_t n = res.log.N[static_cast<std::size_t>(i)];
    CHECK(n >= prev_n);
    CHECK(n <= prev_n + 1);
    if (n > prev_n) {
      CHECK(res.log.margin[i] <= 1e-7);
      CHECK(res.log.mode[static_cast<std::size_t>(i)] ==
            ControlMode::ExploreHold);
    }
    CHECK(res.log.beta[i] >= prev_beta - 1e-12);
    prev_beta = res.log.beta[i];
    prev_n = n;
  }
  CHECK(prev_n == res.summary.exploration_events);
  CHECK(res.log.h.minCoeff() > 0.0);

  // The final stretch runs feasibly under the safety filter.
  CHECK(res.log.mode.back() == ControlMode::SafeFilter);
}

TEST_CASE("runs are deterministic byte for byte") {
  SimConfig cfg = cruise_base();
  cfg.horizon = 0.3;
  cfg.initial_state = (Vec(2) << 20.0, 36.6).finished();
  cfg.output_csv = temp_path("gpcbf_det_a.csv");
  const RunResult a = run_simulation(cfg);
  cfg.output_csv = temp_path("gpcbf_det_b.csv");
  const RunResult b = run_simulation(cfg);

  CHECK(slurp(temp_path("gpcbf_det_a.csv")) ==
        slurp(temp_path("gpcbf_det_b.csv")));
  CHECK(a.summary.exploration_events == b.summary.exploration_events);
  CHECK(a.log.records() == b.log.records());
  std::remove(temp_path("gpcbf_det_a.csv").c_str());
  std::remove(temp_path("gpcbf_det_b.csv").c_str());
}

TEST_CASE("zero horizon produces exactly one record") {
  SimConfig cfg = cruise_base();
  cfg.horizon = 0.0;
  cfg.perfect_model = true;
  cfg.noise_scales = Vec::Zero(2);
  cfg.output_csv = temp_path("gpcbf_h0.csv");
  cfg.summary_path = temp_path("gpcbf_h0_summary.txt");
  const RunResult res = run_simulation(cfg);

  CHECK(res.log.records() == 1);
  CHECK(res.summary.safe);
  const std::string csv = slurp(cfg.output_csv);
  CHECK(line_count(csv) == 2);  // header plus the t = 0 record
  CHECK(csv.rfind("t,x0,x1,u0,mode,h_1,margin,N,beta\n", 0) == 0);
  const std::string summary = slurp(cfg.summary_path);
  CHECK(summary.find("safe: true") != std::string::npos);
  CHECK(summary.find("exploration_events: 0") != std::string::npos);
  std::remove(cfg.output_csv.c_str());
  std::remove(cfg.summary_path.c_str());
}

TEST_CASE("perfect-model quadrotor run holds both barriers") {
  SimConfig cfg;
  cfg.plant = "quadrotor";
  cfg.horizon = 0.05;
  cfg.dt_sample = 0.01;
  cfg.epsilon = 0.5;
  cfg.seed = 3;
  cfg.perfect_model = true;
  cfg.gamma_grid_size = 16;
  cfg.quadrotor.thrust_max = 40.0;
  cfg.initial_state = Vec::Zero(10);
  cfg.initial_state[2] = 1.0;
  cfg.initial_state[6] = 1.0;
  cfg.rkhs_bounds = Vec::Constant(10, 1.0);
  cfg.noise_scales = Vec::Zero(10);
  cfg.hyper_fit.enabled = false;
  const RunResult res = run_simulation(cfg);

  CHECK(!res.summary.errored);
  CHECK(res.summary.safe);
  CHECK(res.summary.exploration_events == 0);
  CHECK(res.log.h.cols() == 2);
  CHECK(res.log.cbf_names ==
        std::vector<std::string>{"altitude", "position"});
  for (int i = 0; i < res.log.records(); ++i) {
    CHECK(res.log.h.row(i).minCoeff() >= 0.0);
    CHECK(std::abs(res.log.x.row(i).segment(6, 4).norm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("integration failures produce an errored summary, not a throw") {
  SimConfig cfg;
  cfg.plant = "quadrotor";
  cfg.horizon = 0.05;
  cfg.dt_sample = 0.01;
  cfg.epsilon = 0.1;
  cfg.seed = 5;
  cfg.gamma_grid_size = 16;
  cfg.quadrotor.thrust_max = 40.0;
  cfg.initial_state = Vec::Zero(10);
  cfg.initial_state[2] = 0.06;  // just above the ground-effect root
  cfg.initial_state[5] = -4.0;  // diving; crosses the root mid-integration
  cfg.initial_state[6] = 1.0;
  cfg.rkhs_bounds = Vec::Constant(10, 1.0);
  cfg.noise_scales = Vec::Constant(10, 0.01);
  cfg.hyper_fit.enabled = false;

  const RunResult res = run_simulation(cfg);
  CHECK(res.summary.errored);
  CHECK(!res.summary.error.empty());
  CHECK(res.log.records() >= 1);  // partial log up to the failure
}

TEST_CASE("infeasible initial states are rejected up front") {
  SimConfig cfg = cruise_base();
  cfg.initial_state = (Vec(2) << 30.0, 30.0).finished();  // h = -24
  CHECK_THROWS_AS(run_simulation(cfg), ConfigError);
}

TEST_CASE("a singleton sweep reproduces run_simulation exactly") {
  SimConfig base = cruise_base();
  base.horizon = 0.3;
  SweepSpec spec;
  spec.dts = {0.01};
  spec.policies = {ExplorationPolicy::Ucb};
  spec.trials = 1;
  spec.stop_on_failure = false;
  spec.region_lower = (Vec(2) << 20.0, 36.5).finished();
  spec.region_upper = (Vec(2) << 21.0, 40.0).finished();

  const SweepResult sweep = run_failure_sweep(base, spec);
  REQUIRE(sweep.trials.size() == 1);
  REQUIRE(sweep.cells.size() == 1);
  const SweepTrial& trial = sweep.trials[0];
  CHECK(!trial.errored);

  SimConfig rebuilt = base;
  rebuilt.dt_sample = trial.dt;
  rebuilt.dt_int = 0.0;
  rebuilt.policy = trial.policy;
  rebuilt.seed = trial.seed;
  rebuilt.initial_state = trial.initial_state;
  const RunResult res = run_simulation(rebuilt);

  CHECK(res.summary.safe == trial.safe);
  CHECK(res.summary.exploration_events == trial.exploration_events);
  CHECK(res.summary.failure_time.has_value() ==
        trial.failure_time.has_value());
  if (trial.failure_time) {
    CHECK(*res.summary.failure_time == *trial.failure_time);
  }
  CHECK(res.log.h.minCoeff() == doctest::Approx(trial.min_h).epsilon(1e-12));
  CHECK(sweep.cells[0].trials == 1);
  CHECK(sweep.cells[0].failures == (trial.safe ? 0 : 1));
}

TEST_CASE("sweep grid covers dt x policy and writes both CSVs") {
  SimConfig base = cruise_base();
  base.horizon = 0.1;
  SweepSpec spec;
  spec.dts = {0.01, 0.02};
  spec.policies = {ExplorationPolicy::Ucb, ExplorationPolicy::Random};
  spec.trials = 2;
  spec.stop_on_failure = true;
  spec.table_csv = temp_path("gpcbf_sweep_table.csv");
  spec.trials_csv = temp_path("gpcbf_sweep_trials.csv");

  const SweepResult sweep = run_failure_sweep(base, spec);
  write_sweep_csvs(spec, sweep);
  REQUIRE(sweep.cells.size() == 4);
  REQUIRE(sweep.trials.size() == 8);

  CHECK(sweep.cells[0].dt == 0.01);
  CHECK(sweep.cells[0].policy == ExplorationPolicy::Ucb);
  CHECK(sweep.cells[1].dt == 0.01);
  CHECK(sweep.cells[1].policy == ExplorationPolicy::Random);
  CHECK(sweep.cells[2].dt == 0.02);
  CHECK(sweep.cells[3].dt == 0.02);
  for (const auto& cell : sweep.cells) {
    CHECK(cell.trials == 2);
    CHECK(cell.errors == 0);
    CHECK(cell.failures >= 0);
    CHECK(cell.failures <= 2);
    CHECK(cell.failure_rate() == doctest::Approx(cell.failures / 2.0));
  }

  const std::string table = slurp(spec.table_csv);
  CHECK(line_count(table) == 5);
  CHECK(table.rfind("dt,policy,trials,failures,failure_rate,errors,mean_events\n",
                    0) == 0);
  const std::string trials = slurp(spec.trials_csv);
  CHECK(line_count(trials) == 9);
  CHECK(trials.rfind("dt,policy,trial,seed,safe,failure_time,"
                     "exploration_events,min_h,errored\n",
                     0) == 0);

  // Rerunning the sweep reproduces every trial exactly.
  const SweepResult again = run_failure_sweep(base, spec);
  REQUIRE(again.trials.size() == sweep.trials.size());
  for (std::size_t i = 0; i < sweep.trials.size(); ++i) {
    CHECK(again.trials[i].seed == sweep.trials[i].seed);
    CHECK(again.trials[i].safe == sweep.trials[i].safe);
    CHECK(again.trials[i].min_h == sweep.trials[i].min_h);
    CHECK(again.trials[i].exploration_events ==
          sweep.trials[i].exploration_events);
  }
  std::remove(spec.table_csv.c_str());
  std::remove(spec.trials_csv.c_str());
}

TEST_CASE("config loading applies defaults and validates keys") {
  const std::string good = write_temp_json("gpcbf_cfg_good.json", R"({
    "plant": "cruise",
    "horizon": 0.25,
    "dt_sample": 0.02,
    "epsilon": 0.4,
    "seed": 42,
    "policy": "random",
    "gamma_grid_size": 128,
    "initial_state": [20.0, 80.0],
    "rkhs_bounds": [1.5, 1.2],
    "noise_scales": [0.05, 0.1],
    "cruise": {"mass": 1700.0, "desired_speed": 22.0},
    "hyper_fit": {"enabled": false, "count": 5, "restarts": 2, "ard": false},
    "sweep": {
      "dts": [0.01, 0.1],
      "policies": ["ucb", "random"],
      "trials": 3,
      "stop_on_failure": false,
      "region_lower": [18.0, 60.0],
      "region_upper": [26.0, 120.0],
      "table_csv": "table.csv",
      "trials_csv": "trials.csv"
    },
    "bounds": {"use_growth": true, "c_gamma": 2.0, "omega": 0.1, "theta": 1.0}
  })");
  const SimConfig cfg = load_sim_config(good);
  CHECK(cfg.plant == "cruise");
  CHECK(cfg.horizon == 0.25);
  CHECK(cfg.dt_sample == 0.02);
  CHECK(cfg.dt_int == 0.0);
  CHECK(cfg.effective_dt_int() == doctest::Approx(1e-3));
  CHECK(cfg.epsilon == 0.4);
  CHECK(cfg.alpha_slope == 1.0);  // default
  CHECK(cfg.seed == 42);
  CHECK(cfg.policy == ExplorationPolicy::Random);
  CHECK(cfg.gamma_grid_size == 128);
  CHECK(cfg.initial_state[1] == 80.0);
  CHECK(cfg.rkhs_bounds[0] == 1.5);
  CHECK(cfg.noise_scales[1] == 0.1);
  CHECK(cfg.cruise.mass == 1700.0);
  CHECK(cfg.cruise.desired_speed == 22.0);
  CHECK(cfg.cruise.headway == 1.8);  // untouched default
  CHECK(!cfg.hyper_fit.enabled);
  CHECK(cfg.hyper_fit.count == 5);
  CHECK(!cfg.hyper_fit.ard);
  CHECK(cfg.sweep.dts == std::vector<double>{0.01, 0.1});
  CHECK(cfg.sweep.policies ==
        std::vector<ExplorationPolicy>{ExplorationPolicy::Ucb,
                                       ExplorationPolicy::Random});
  CHECK(cfg.sweep.trials == 3);
  CHECK(!cfg.sweep.stop_on_failure);
  CHECK(cfg.sweep.region_lower[1] == 60.0);
  CHECK(cfg.sweep.table_csv == "table.csv");
  CHECK(cfg.bounds.use_growth);
  CHECK(cfg.bounds.c_gamma == 2.0);
  std::remove(good.c_str());

  // Unknown keys are named in the error.
  const std::string bad_key = write_temp_json("gpcbf_cfg_badkey.json", R"({
    "plant": "cruise",
    "horizzon": 1.0,
    "initial_state": [20.0, 80.0],
    "noise_scales": [0.05, 0.05],
    "rkhs_bounds": [1.0, 1.0]
  })");
  CHECK_THROWS_WITH_AS(load_sim_config(bad_key),
                       doctest::Contains("horizzon"), ConfigError);
  std::remove(bad_key.c_str());

  const std::string bad_section = write_temp_json("gpcbf_cfg_badsec.json", R"({
    "plant": "cruise",
    "initial_state": [20.0, 80.0],
    "noise_scales": [0.05, 0.05],
    "rkhs_bounds": [1.0, 1.0],
    "cruise": {"masss": 1.0}
  })");
  CHECK_THROWS_WITH_AS(load_sim_config(bad_section),
                       doctest::Contains("masss"), ConfigError);
  std::remove(bad_section.c_str());

  // An initial state outside alpha(h) >= epsilon fails at load time.
  const std::string bad_start = write_temp_json("gpcbf_cfg_badstart.json", R"({
    "plant": "cruise",
    "initial_state": [30.0, 30.0],
    "noise_scales": [0.05, 0.05],
    "rkhs_bounds": [1.0, 1.0]
  })");
  CHECK_THROWS_AS(load_sim_config(bad_start), ConfigError);
  std::remove(bad_start.c_str());

  CHECK_THROWS_AS(load_sim_config(temp_path("gpcbf_missing_config.json")),
                  ConfigError);
}

TEST_CASE("gamma grid is deterministic and in-domain") {
  const PlantModel cruise = make_cruise_plant({});
  const auto grid = make_gamma_grid(cruise, 32, 5);
  REQUIRE(static_cast<int>(grid.size()) == 32);
  for (const auto& z : grid) {
    CHECK(cruise.state_domain.contains(z.x, 1e-12));
    CHECK(cruise.input_box.contains(z.u, 1e-12));
  }
  const auto same = make_gamma_grid(cruise, 32, 5);
  const auto other = make_gamma_grid(cruise, 32, 6);
  bool identical = true, differs = false;
  for (int i = 0; i < 32; ++i) {
    identical = identical && (grid[i].x - same[i].x).norm() == 0.0 &&
                (grid[i].u - same[i].u).norm() == 0.0;
    differs = differs || (grid[i].x - other[i].x).norm() > 0.0;
  }
  CHECK(identical);
  CHECK(differs);

  const PlantModel quad = make_quadrotor_plant({});
  const auto qgrid = make_gamma_grid(quad, 16, 1);
  for (const auto& z : qgrid) {
    CHECK(std::abs(z.x.segment(6, 4).norm() - 1.0) <= 1e-12);
  }

  CHECK_THROWS_AS(make_gamma_grid(cruise, 0, 1), ContractViolation);
}

TEST_CASE("default kernels span the plant dimensions either way") {
  const PlantModel cruise = make_cruise_plant({});
  for (const bool ard : {true, false}) {
    const auto kernels = default_kernels(cruise, ard);
    REQUIRE(kernels.size() == 2);
    for (const auto& k : kernels) {
      CHECK(k.base.lengthscales.size() == 2);
      REQUIRE(k.channels.size() == 1);
      CHECK(k.channels[0].lengthscales.size() == 2);
      k.validate();
    }
  }
  // ARD lengthscales follow the per-dimension span; isotropic ones share the
  // mean span.
  const auto ard_k = default_kernels(cruise, true);
  CHECK(ard_k[0].base.lengthscales[0] == doctest::Approx(20.0));
  CHECK(ard_k[0].base.lengthscales[1] == doctest::Approx(75.0));
  const auto iso_k = default_kernels(cruise, false);
  CHECK(iso_k[0].base.lengthscales[0] == doctest::Approx(47.5));
  CHECK(iso_k[0].base.lengthscales[1] == doctest::Approx(47.5));
}

TEST_CASE("rkhs norm estimates are positive and finite") {
  const PlantModel cruise = make_cruise_plant({});
  const Vec norms =
      estimate_rkhs_norms(cruise, default_kernels(cruise, true), 40, 9);
  REQUIRE(norms.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::isfinite(norms[i]));
    CHECK(norms[i] > 0.0);
  }
}

TEST_CASE("bounds reports cover every CBF with consistent fields") {
  SimConfig cfg = cruise_base();
  cfg.bounds.use_growth = true;
  cfg.bounds.c_gamma = 2.0;
  cfg.bounds.omega = 0.0;
  cfg.bounds.theta = 1.0;
  const auto reports = compute_bounds(cfg);
  REQUIRE(reports.size() == 1);
  const BoundsReport& rep = reports[0];
  CHECK(rep.cbf_name == "headway");
  CHECK(rep.delta_n_max >= 1);
  CHECK(rep.beta_at_n > 1.0);  // exceeds the RKHS bound
  CHECK(rep.h_lipschitz == doctest::Approx(std::sqrt(1.0 + 1.8 * 1.8)));
  CHECK(rep.xdot_bound > 0.0);
  CHECK(rep.dt_threshold ==
        doctest::Approx(cfg.epsilon /
                        (cfg.alpha_slope * rep.h_lipschitz * rep.xdot_bound *
                         static_cast<double>(rep.delta_n_max)))
            .epsilon(1e-12));
  REQUIRE(rep.closed_form.has_value());
  CHECK(*rep.closed_form >= 1);

  SimConfig no_growth = cruise_base();
  const auto plain = compute_bounds(no_growth);
  REQUIRE(plain.size() == 1);
  CHECK(!plain[0].closed_form.has_value());
}

TEST_CASE("a saved hypers file reproduces the in-process fit run") {
  SimConfig fit_cfg = cruise_base();
  fit_cfg.horizon = 0.1;
  fit_cfg.hyper_fit.enabled = true;
  fit_cfg.hyper_fit.count = 6;
  fit_cfg.hyper_fit.restarts = 2;
  fit_cfg.hyper_fit.ard = false;
  fit_cfg.output_csv = temp_path("gpcbf_fit_inproc.csv");

  SimConfig save_cfg = fit_cfg;
  save_cfg.hypers_file = temp_path("gpcbf_hypers.json");
  const auto fitted = run_fit_hypers(save_cfg);
  REQUIRE(fitted.size() == 2);
  const auto [loaded, noise] = load_hyperparameters(save_cfg.hypers_file);
  REQUIRE(loaded.size() == 2);
  CHECK(noise.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded[i].base.signal_variance == fitted[i].base.signal_variance);
    CHECK((loaded[i].base.lengthscales - fitted[i].base.lengthscales).norm() ==
          0.0);
    REQUIRE(loaded[i].channels.size() == fitted[i].channels.size());
    for (std::size_t c = 0; c < loaded[i].channels.size(); ++c) {
      CHECK((loaded[i].channels[c].lengthscales -
             fitted[i].channels[c].lengthscales)
                .norm() == 0.0);
    }
  }

  // A run that loads the file matches the run that fits in-process.
  (void)run_simulation(fit_cfg);
  SimConfig load_cfg = fit_cfg;
  load_cfg.hypers_file = save_cfg.hypers_file;
  load_cfg.output_csv = temp_path("gpcbf_fit_loaded.csv");
  (void)run_simulation(load_cfg);
  CHECK(slurp(fit_cfg.output_csv) == slurp(load_cfg.output_csv));
  std::remove(fit_cfg.output_csv.c_str());
  std::remove(load_cfg.output_csv.c_str());
  std::remove(save_cfg.hypers_file.c_str());

  CHECK_THROWS_AS(run_fit_hypers(fit_cfg), ConfigError);  // no hypers_file set
}

TEST_CASE("validate rejects inconsistent configs") {
  SimConfig cfg = cruise_base();
  cfg.plant = "hovercraft";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = cruise_base();
  cfg.dt_int = cfg.dt_sample * 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = cruise_base();
  cfg.horizon = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = cruise_base();
  cfg.noise_scales = Vec::Zero(2);  // zero noise needs perfect_model
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = cruise_base();
  cfg.delta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
