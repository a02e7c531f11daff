#include "gpcbf/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace gpcbf {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  std::uint64_t h = splitmix64(base ^ 0x6a09e667f3bcc908ULL);
  h = splitmix64(h ^ (a + 1));
  h = splitmix64(h ^ (b + 1) * 0x100000001b3ULL);
  h = splitmix64(h ^ (c + 1) * 0x1000193ULL);
  return h;
}

// Config-content checks throw ConfigError; require() stays reserved for
// programming-contract breaks.
void config_require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

const char* policy_name(ExplorationPolicy p) {
  return p == ExplorationPolicy::Ucb ? "ucb" : "random";
}

ExplorationPolicy parse_policy(const std::string& s) {
  if (s == "ucb" || s == "UCB") return ExplorationPolicy::Ucb;
  if (s == "random" || s == "RANDOM") return ExplorationPolicy::Random;
  throw ConfigError("unknown exploration policy: " + s);
}

const char* mode_name(ControlMode m) {
  return m == ControlMode::SafeFilter ? "SAFE_FILTER" : "EXPLORE_HOLD";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

struct RunContext {
  PlantModel plant;
  std::vector<CbfSpec> cbfs;
  std::function<Vec(const Vec&)> nominal;
};

RunContext make_context(const SimConfig& cfg) {
  RunContext ctx;
  if (cfg.plant == "cruise") {
    ctx.plant = make_cruise_plant(cfg.cruise);
    ctx.cbfs = {cruise_cbf(cfg.cruise, cfg.alpha_slope, cfg.epsilon)};
    ctx.nominal = cruise_nominal_controller(cfg.cruise);
  } else if (cfg.plant == "quadrotor") {
    ctx.plant = make_quadrotor_plant(cfg.quadrotor);
    ctx.cbfs = quadrotor_cbfs(cfg.quadrotor, cfg.alpha_slope, cfg.epsilon);
    Vec setpoint = cfg.quad_setpoint;
    if (setpoint.size() == 0) {
      setpoint = cfg.initial_state.size() >= 3 ? Vec(cfg.initial_state.head(3))
                                               : Vec(Vec::Zero(3));
    }
    ctx.nominal = quadrotor_nominal_controller(cfg.quadrotor, setpoint);
  } else {
    throw ConfigError("unknown plant '" + cfg.plant + "'");
  }
  return ctx;
}

void check_initial_state(const RunContext& ctx, const SimConfig& cfg,
                         const Vec& x0) {
  config_require(x0.size() == ctx.plant.n,
                 "initial_state size does not match the plant state dimension");
  for (const auto& cbf : ctx.cbfs) {
    const double ah = cbf.alpha(cbf.h(x0));
    if (ah < cfg.epsilon) {
      std::ostringstream msg;
      msg << "initial state violates alpha(h(x0)) >= epsilon for CBF '"
          << cbf.name << "': alpha(h) = " << ah << " < " << cfg.epsilon;
      throw ConfigError(msg.str());
    }
  }
}

std::vector<CompositeKernel> resolve_kernels(const SimConfig& cfg,
                                             const PlantModel& plant) {
  if (!cfg.hypers_file.empty()) {
    auto [kernels, noise] = load_hyperparameters(cfg.hypers_file);
    require(static_cast<int>(kernels.size()) == plant.n,
            "hypers_file: output dimension mismatch with the plant");
    (void)noise;  // the config's noise_scales stay authoritative
    return kernels;
  }
  auto init = default_kernels(plant, cfg.hyper_fit.ard);
  if (!cfg.hyper_fit.enabled || cfg.perfect_model) return init;
  const std::uint64_t fit_seed = splitmix64(cfg.seed) ^ cfg.hyper_fit.seed;
  const auto data =
      sample_fit_data(plant, cfg.noise_scales, cfg.hyper_fit.count, fit_seed);
  FitOptions opts;
  opts.restarts = cfg.hyper_fit.restarts;
  opts.ard = cfg.hyper_fit.ard;
  opts.seed = static_cast<unsigned>(splitmix64(fit_seed));
  return fit_hyperparameters(data, init, cfg.noise_scales, opts);
}

Vec resolve_rkhs_bounds(const SimConfig& cfg, const RunContext& ctx,
                        const std::vector<CompositeKernel>& kernels) {
  if (cfg.rkhs_bounds.size() > 0) {
    config_require(cfg.rkhs_bounds.size() == ctx.plant.n,
                   "rkhs_bounds size does not match the plant state dimension");
    return cfg.rkhs_bounds;
  }
  // Fallback: twice the interpolant-norm estimate on sampled dynamics.
  return 2.0 * estimate_rkhs_norms(ctx.plant, kernels, 60,
                                   splitmix64(cfg.seed ^ 0xb0b5ULL));
}

ControllerConfig make_controller_config(const SimConfig& cfg,
                                        const RunContext& ctx, Vec rkhs_bounds) {
  ControllerConfig ccfg;
  ccfg.cbfs = ctx.cbfs;
  ccfg.confidence.rkhs_bounds = std::move(rkhs_bounds);
  ccfg.confidence.noise_scales = cfg.noise_scales;
  ccfg.confidence.delta = cfg.delta;
  ccfg.dt_sample = cfg.dt_sample;
  ccfg.policy = cfg.policy;
  ccfg.nominal = ctx.nominal;
  ccfg.perfect_model = cfg.perfect_model;
  ccfg.seed = splitmix64(cfg.seed ^ 0xc0ffeeULL);
  if (!cfg.perfect_model) {
    ccfg.gamma_grid =
        make_gamma_grid(ctx.plant, cfg.gamma_grid_size, cfg.seed);
  }
  return ccfg;
}

RunResult run_simulation_impl(const SimConfig& cfg, bool stop_on_failure) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate();

  RunResult result;
  RunSummary& summary = result.summary;
  TrajectoryLog& log = result.log;

  RunContext ctx = make_context(cfg);
  check_initial_state(ctx, cfg, cfg.initial_state);
  const auto kernels = resolve_kernels(cfg, ctx.plant);
  const Vec bounds = resolve_rkhs_bounds(cfg, ctx, kernels);
  ControllerConfig ccfg = make_controller_config(cfg, ctx, bounds);
  GpPosterior gp = GpPosterior::fit(kernels, ccfg.confidence.noise_scales, {});
  ControllerState state = make_controller(std::move(gp), ccfg);

  const double dt_int = cfg.effective_dt_int();
  const std::int64_t steps = std::llround(cfg.horizon / dt_int);
  const int records = static_cast<int>(steps) + 1;
  const int n = ctx.plant.n, m = ctx.plant.m;
  const int kcbf = static_cast<int>(ctx.cbfs.size());

  log.t.reserve(records);
  log.x.resize(records, n);
  log.u.resize(records, m);
  log.mode.reserve(records);
  log.h.resize(records, kcbf);
  log.margin.resize(records);
  log.N.reserve(records);
  log.beta.resize(records);
  log.cbf_names.reserve(kcbf);
  for (const auto& cbf : ctx.cbfs) log.cbf_names.push_back(cbf.name);

  Vec x = cfg.initial_state;
  int rec = 0;
  try {
    for (std::int64_t i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) * dt_int;
      const ControlDecision decision =
          step_controller(state, t, x, ctx.plant, ccfg);
      log.t.push_back(t);
      log.x.row(rec) = x.transpose();
      log.u.row(rec) = decision.u.transpose();
      log.mode.push_back(decision.mode);
      bool violated = false;
      for (int k = 0; k < kcbf; ++k) {
        const double hval = ctx.cbfs[static_cast<std::size_t>(k)].h(x);
        log.h(rec, k) = hval;
        if (hval < 0.0) violated = true;
      }
      log.margin[rec] = decision.margin;
      log.N.push_back(state.N);
      log.beta[rec] = state.beta;
      ++rec;
      if (violated && !summary.failure_time) {
        summary.failure_time = t;
        if (stop_on_failure) break;
      }
      if (i < steps) x = integrate_step(ctx.plant, x, decision.u, dt_int);
    }
  } catch (const std::exception& e) {
    summary.errored = true;
    summary.error = e.what();
  }

  log.x.conservativeResize(rec, n);
  log.u.conservativeResize(rec, m);
  log.h.conservativeResize(rec, kcbf);
  log.margin.conservativeResize(rec);
  log.beta.conservativeResize(rec);

  summary.safe = !summary.failure_time.has_value();
  summary.exploration_events = state.exploration_events;
  int last_explore = -1;
  for (int i = 0; i < rec; ++i) {
    if (log.mode[static_cast<std::size_t>(i)] == ControlMode::ExploreHold) {
      last_explore = i;
    }
  }
  if (last_explore >= 0 && last_explore + 1 < rec) {
    summary.feasibility_recovered_at = log.t[static_cast<std::size_t>(last_explore) + 1];
  }
  summary.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  if (!cfg.output_csv.empty()) write_trajectory_csv(cfg.output_csv, log);
  if (!cfg.summary_path.empty()) write_run_summary(cfg.summary_path, summary);
  return result;
}

Vec default_sweep_lower(const PlantModel& plant) {
  if (plant.name == "cruise") {
    Vec v(2);
    v << 18.0, 60.0;
    return v;
  }
  Vec v(10);
  v << -0.3, -0.3, 0.6, 0, 0, 0, 1, 0, 0, 0;
  return v;
}

Vec default_sweep_upper(const PlantModel& plant) {
  if (plant.name == "cruise") {
    Vec v(2);
    v << 26.0, 120.0;
    return v;
  }
  Vec v(10);
  v << 0.3, 0.3, 1.2, 0, 0, 0, 1, 0, 0, 0;
  return v;
}

Vec sample_initial_state(const RunContext& ctx, const SimConfig& cfg,
                         const Vec& lower, const Vec& upper,
                         std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x1717ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Vec x0(lower.size());
    for (int i = 0; i < lower.size(); ++i) {
      x0[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
    }
    bool ok = true;
    for (const auto& cbf : ctx.cbfs) {
      if (cbf.alpha(cbf.h(x0)) < cfg.epsilon) {
        ok = false;
        break;
      }
    }
    if (ok) return x0;
  }
  throw ConfigError(
      "sweep region: could not sample an initial state with alpha(h) >= "
      "epsilon after 200 draws");
}

}  // namespace

void SimConfig::validate() const {
  config_require(plant == "cruise" || plant == "quadrotor",
                 "SimConfig: plant must be 'cruise' or 'quadrotor'");
  config_require(horizon >= 0.0, "SimConfig: horizon must be >= 0");
  config_require(dt_sample > 0.0, "SimConfig: dt_sample must be positive");
  config_require(dt_int >= 0.0, "SimConfig: dt_int must be >= 0");
  if (dt_int > 0.0) {
    config_require(dt_sample >= dt_int, "SimConfig: dt_sample must be >= dt_int");
  }
  config_require(epsilon > 0.0, "SimConfig: epsilon must be positive");
  config_require(alpha_slope > 0.0, "SimConfig: alpha_slope must be positive");
  config_require(delta > 0.0 && delta < 1.0,
                 "SimConfig: delta must lie in (0, 1)");
  config_require(gamma_grid_size > 0,
                 "SimConfig: gamma_grid_size must be positive");
  config_require(initial_state.size() > 0, "SimConfig: initial_state is required");
  config_require(noise_scales.size() > 0, "SimConfig: noise_scales are required");
  const double min_noise = noise_scales.minCoeff();
  if (perfect_model) {
    config_require(min_noise >= 0.0, "SimConfig: noise_scales must be >= 0");
  } else {
    config_require(min_noise > 0.0, "SimConfig: noise_scales must be positive");
  }
  if (rkhs_bounds.size() > 0) {
    config_require(rkhs_bounds.minCoeff() > 0.0,
                   "SimConfig: rkhs_bounds must be positive");
  }
  try {
    cruise.validate();
    quadrotor.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  config_require(hyper_fit.count >= 1, "SimConfig: hyper_fit.count must be >= 1");
  config_require(hyper_fit.restarts >= 1,
                 "SimConfig: hyper_fit.restarts must be >= 1");
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " +
                      std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config root must be an object: " + path);

  check_keys(j, path,
             {"plant", "horizon", "dt_sample", "dt_int", "epsilon",
              "alpha_slope", "delta", "seed", "policy", "gamma_grid_size",
              "initial_state", "rkhs_bounds", "noise_scales", "output_csv",
              "summary_path", "cruise", "quadrotor", "quad_setpoint",
              "hyper_fit", "hypers_file", "perfect_model", "sweep", "bounds"});

  SimConfig cfg;
  cfg.plant = j.at("plant").get<std::string>();
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.dt_sample = j.value("dt_sample", cfg.dt_sample);
  cfg.dt_int = j.value("dt_int", cfg.dt_int);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.alpha_slope = j.value("alpha_slope", cfg.alpha_slope);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.count("policy")) cfg.policy = parse_policy(j["policy"].get<std::string>());
  cfg.gamma_grid_size = j.value("gamma_grid_size", cfg.gamma_grid_size);
  if (j.count("initial_state")) {
    cfg.initial_state = vec_from_json(j["initial_state"], "initial_state");
  }
  if (j.count("rkhs_bounds")) {
    cfg.rkhs_bounds = vec_from_json(j["rkhs_bounds"], "rkhs_bounds");
  }
  if (j.count("noise_scales")) {
    cfg.noise_scales = vec_from_json(j["noise_scales"], "noise_scales");
  }
  cfg.output_csv = j.value("output_csv", cfg.output_csv);
  cfg.summary_path = j.value("summary_path", cfg.summary_path);

  if (j.count("cruise")) {
    const json& c = j["cruise"];
    check_keys(c, "cruise",
               {"mass", "zeta0", "zeta1", "zeta2", "lead_speed", "headway",
                "desired_speed", "p_gain", "input_limit"});
    cfg.cruise.mass = c.value("mass", cfg.cruise.mass);
    cfg.cruise.zeta0 = c.value("zeta0", cfg.cruise.zeta0);
    cfg.cruise.zeta1 = c.value("zeta1", cfg.cruise.zeta1);
    cfg.cruise.zeta2 = c.value("zeta2", cfg.cruise.zeta2);
    cfg.cruise.lead_speed = c.value("lead_speed", cfg.cruise.lead_speed);
    cfg.cruise.headway = c.value("headway", cfg.cruise.headway);
    cfg.cruise.desired_speed = c.value("desired_speed", cfg.cruise.desired_speed);
    cfg.cruise.p_gain = c.value("p_gain", cfg.cruise.p_gain);
    cfg.cruise.input_limit = c.value("input_limit", cfg.cruise.input_limit);
  }
  if (j.count("quadrotor")) {
    const json& q = j["quadrotor"];
    check_keys(q, "quadrotor",
               {"gravity", "ground_effect_rho", "rotor_radius",
                "altitude_headway", "h1_scale", "thrust_max", "omega_max",
                "radius", "alpha_q", "lambda"});
    cfg.quadrotor.gravity = q.value("gravity", cfg.quadrotor.gravity);
    cfg.quadrotor.ground_effect_rho =
        q.value("ground_effect_rho", cfg.quadrotor.ground_effect_rho);
    cfg.quadrotor.rotor_radius =
        q.value("rotor_radius", cfg.quadrotor.rotor_radius);
    cfg.quadrotor.altitude_headway =
        q.value("altitude_headway", cfg.quadrotor.altitude_headway);
    cfg.quadrotor.h1_scale = q.value("h1_scale", cfg.quadrotor.h1_scale);
    cfg.quadrotor.thrust_max = q.value("thrust_max", cfg.quadrotor.thrust_max);
    cfg.quadrotor.omega_max = q.value("omega_max", cfg.quadrotor.omega_max);
    cfg.quadrotor.radius = q.value("radius", cfg.quadrotor.radius);
    cfg.quadrotor.alpha_q = q.value("alpha_q", cfg.quadrotor.alpha_q);
    cfg.quadrotor.lambda = q.value("lambda", cfg.quadrotor.lambda);
  }
  if (j.count("quad_setpoint")) {
    cfg.quad_setpoint = vec_from_json(j["quad_setpoint"], "quad_setpoint");
  }
  if (j.count("hyper_fit")) {
    const json& f = j["hyper_fit"];
    check_keys(f, "hyper_fit", {"enabled", "count", "seed", "restarts", "ard"});
    cfg.hyper_fit.enabled = f.value("enabled", cfg.hyper_fit.enabled);
    cfg.hyper_fit.count = f.value("count", cfg.hyper_fit.count);
    cfg.hyper_fit.seed = f.value("seed", cfg.hyper_fit.seed);
    cfg.hyper_fit.restarts = f.value("restarts", cfg.hyper_fit.restarts);
    cfg.hyper_fit.ard = f.value("ard", cfg.hyper_fit.ard);
  }
  cfg.hypers_file = j.value("hypers_file", cfg.hypers_file);
  cfg.perfect_model = j.value("perfect_model", cfg.perfect_model);

  if (j.count("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, "sweep",
               {"dts", "policies", "trials", "stop_on_failure", "region_lower",
                "region_upper", "table_csv", "trials_csv"});
    if (s.count("dts")) {
      for (const auto& v : s["dts"]) cfg.sweep.dts.push_back(v.get<double>());
    }
    if (s.count("policies")) {
      for (const auto& v : s["policies"]) {
        cfg.sweep.policies.push_back(parse_policy(v.get<std::string>()));
      }
    }
    cfg.sweep.trials = s.value("trials", cfg.sweep.trials);
    cfg.sweep.stop_on_failure =
        s.value("stop_on_failure", cfg.sweep.stop_on_failure);
    if (s.count("region_lower")) {
      cfg.sweep.region_lower = vec_from_json(s["region_lower"], "region_lower");
    }
    if (s.count("region_upper")) {
      cfg.sweep.region_upper = vec_from_json(s["region_upper"], "region_upper");
    }
    cfg.sweep.table_csv = s.value("table_csv", cfg.sweep.table_csv);
    cfg.sweep.trials_csv = s.value("trials_csv", cfg.sweep.trials_csv);
  }
  if (j.count("bounds")) {
    const json& b = j["bounds"];
    check_keys(b, "bounds", {"use_growth", "c_gamma", "omega", "theta"});
    cfg.bounds.use_growth = b.value("use_growth", cfg.bounds.use_growth);
    cfg.bounds.c_gamma = b.value("c_gamma", cfg.bounds.c_gamma);
    cfg.bounds.omega = b.value("omega", cfg.bounds.omega);
    cfg.bounds.theta = b.value("theta", cfg.bounds.theta);
  }

  cfg.validate();
  // Surface bad plant wiring (state sizes, alpha(h(x0)) >= epsilon) at load.
  RunContext ctx = make_context(cfg);
  check_initial_state(ctx, cfg, cfg.initial_state);
  config_require(cfg.noise_scales.size() == ctx.plant.n,
                 "SimConfig: noise_scales size must equal the state dimension");
  return cfg;
}

RunResult run_simulation(const SimConfig& cfg) {
  return run_simulation_impl(cfg, false);
}

SweepResult run_failure_sweep(const SimConfig& base, const SweepSpec& spec) {
  config_require(!spec.dts.empty(), "sweep: at least one dt is required");
  config_require(!spec.policies.empty(), "sweep: at least one policy is required");
  config_require(spec.trials >= 1, "sweep: trials must be >= 1");

  RunContext ctx = make_context(base);
  Vec lower = spec.region_lower.size() > 0 ? spec.region_lower
                                           : default_sweep_lower(ctx.plant);
  Vec upper = spec.region_upper.size() > 0 ? spec.region_upper
                                           : default_sweep_upper(ctx.plant);
  config_require(lower.size() == ctx.plant.n && upper.size() == ctx.plant.n,
                 "sweep: region bounds must match the plant state dimension");
  config_require((lower.array() <= upper.array()).all(),
                 "sweep: region lower must be <= upper");

  struct Job {
    std::size_t di, pi;
    int trial;
    SimConfig cfg;
  };
  std::vector<Job> jobs;
  for (std::size_t di = 0; di < spec.dts.size(); ++di) {
    for (std::size_t pi = 0; pi < spec.policies.size(); ++pi) {
      for (int trial = 0; trial < spec.trials; ++trial) {
        Job job;
        job.di = di;
        job.pi = pi;
        job.trial = trial;
        job.cfg = base;
        job.cfg.dt_sample = spec.dts[di];
        job.cfg.dt_int = 0.0;  // rederive from dt_sample
        job.cfg.policy = spec.policies[pi];
        job.cfg.seed = mix_seed(base.seed, di, pi, static_cast<std::uint64_t>(trial));
        job.cfg.output_csv.clear();
        job.cfg.summary_path.clear();
        job.cfg.initial_state =
            sample_initial_state(ctx, base, lower, upper, job.cfg.seed);
        jobs.push_back(std::move(job));
      }
    }
  }

  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(jobs.size())));
  std::vector<RunResult> results(jobs.size());
  std::vector<std::future<void>> inflight;
  std::size_t next = 0;
  auto launch = [&](std::size_t idx) {
    return std::async(std::launch::async, [&results, &jobs, idx, &spec] {
      try {
        results[idx] = run_simulation_impl(jobs[idx].cfg, spec.stop_on_failure);
      } catch (const std::exception& e) {
        // Setup exceptions become failed-run entries; the sweep never aborts.
        results[idx].summary.errored = true;
        results[idx].summary.error = e.what();
        results[idx].summary.safe = true;
      }
    });
  };
  while (next < jobs.size() || !inflight.empty()) {
    while (next < jobs.size() && inflight.size() < workers) {
      inflight.push_back(launch(next++));
    }
    inflight.front().get();
    inflight.erase(inflight.begin());
  }

  SweepResult out;
  out.cells.reserve(spec.dts.size() * spec.policies.size());
  for (std::size_t di = 0; di < spec.dts.size(); ++di) {
    for (std::size_t pi = 0; pi < spec.policies.size(); ++pi) {
      SweepCell cell;
      cell.dt = spec.dts[di];
      cell.policy = spec.policies[pi];
      out.cells.push_back(cell);
    }
  }
  out.trials.reserve(jobs.size());
  for (std::size_t idx = 0; idx < jobs.size(); ++idx) {
    const Job& job = jobs[idx];
    const RunResult& r = results[idx];
    SweepCell& cell = out.cells[job.di * spec.policies.size() + job.pi];
    cell.trials += 1;
    const bool failed = !r.summary.safe;
    if (failed) cell.failures += 1;
    if (r.summary.errored) cell.errors += 1;
    cell.mean_events += static_cast<double>(r.summary.exploration_events);

    SweepTrial row;
    row.dt = job.cfg.dt_sample;
    row.policy = job.cfg.policy;
    row.trial = job.trial;
    row.seed = job.cfg.seed;
    row.initial_state = job.cfg.initial_state;
    row.safe = r.summary.safe;
    row.failure_time = r.summary.failure_time;
    row.exploration_events = r.summary.exploration_events;
    row.min_h = r.log.records() > 0 ? r.log.h.minCoeff() : 0.0;
    row.errored = r.summary.errored;
    out.trials.push_back(row);
  }
  for (auto& cell : out.cells) {
    if (cell.trials > 0) cell.mean_events /= cell.trials;
  }

  if (!spec.table_csv.empty() || !spec.trials_csv.empty()) {
    write_sweep_csvs(spec, out);
  }
  return out;
}

std::vector<BoundsReport> compute_bounds(const SimConfig& cfg) {
  cfg.validate();
  RunContext ctx = make_context(cfg);
  const auto kernels = resolve_kernels(cfg, ctx.plant);
  const Vec bounds = resolve_rkhs_bounds(cfg, ctx, kernels);

  ConfidenceParams conf;
  conf.rkhs_bounds = bounds;
  conf.noise_scales = cfg.noise_scales;
  conf.delta = cfg.delta;

  auto tables = std::make_shared<std::vector<InfoGainTable>>();
  const auto grid = make_gamma_grid(ctx.plant, cfg.gamma_grid_size, cfg.seed);
  for (int i = 0; i < ctx.plant.n; ++i) {
    tables->emplace_back(kernels[static_cast<std::size_t>(i)],
                         cfg.noise_scales[i], grid);
  }

  std::vector<BoundsReport> reports;
  for (const auto& cbf : ctx.cbfs) {
    TheoremInputs inp;
    inp.epsilon = cfg.epsilon;
    inp.alpha_lipschitz = cbf.alpha_lipschitz;
    inp.h_lipschitz = cbf.h_lipschitz;
    inp.xdot_bound = ctx.plant.xdot_bound;
    inp.confidence = conf;
    inp.gamma_hat = [tables](int dim, std::int64_t N) {
      return (*tables)[static_cast<std::size_t>(dim)].gamma(
          static_cast<int>(std::min<std::int64_t>(N, 1 << 20)));
    };
    if (cfg.bounds.use_growth) {
      GammaGrowthModel gm;
      gm.c_gamma = cfg.bounds.c_gamma;
      gm.omega = cfg.bounds.omega;
      gm.theta = cfg.bounds.theta;
      inp.growth = gm;
    }

    BoundsReport rep;
    rep.cbf_name = cbf.name;
    rep.h_lipschitz = cbf.h_lipschitz;
    rep.xdot_bound = ctx.plant.xdot_bound;
    rep.delta_n_max = solve_delta_n_max(inp);
    rep.dt_threshold = min_sampling_rate(inp, rep.delta_n_max);
    Vec gammas(ctx.plant.n);
    for (int i = 0; i < ctx.plant.n; ++i) {
      gammas[i] = inp.gamma(i, rep.delta_n_max);
    }
    rep.beta_at_n = confidence_beta(conf, gammas);
    if (cfg.bounds.use_growth) {
      rep.closed_form = appendix_c_closed_form(inp);
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::vector<CompositeKernel> run_fit_hypers(const SimConfig& cfg) {
  cfg.validate();
  config_require(!cfg.hypers_file.empty(),
                 "fit-hypers: hypers_file must be set in the config");
  RunContext ctx = make_context(cfg);
  auto init = default_kernels(ctx.plant, cfg.hyper_fit.ard);
  const std::uint64_t fit_seed = splitmix64(cfg.seed) ^ cfg.hyper_fit.seed;
  const auto data = sample_fit_data(ctx.plant, cfg.noise_scales,
                                    cfg.hyper_fit.count, fit_seed);
  FitOptions opts;
  opts.restarts = cfg.hyper_fit.restarts;
  opts.ard = cfg.hyper_fit.ard;
  opts.seed = static_cast<unsigned>(splitmix64(fit_seed));
  auto kernels = fit_hyperparameters(data, init, cfg.noise_scales, opts);
  save_hyperparameters(cfg.hypers_file, kernels, cfg.noise_scales);
  return kernels;
}

std::vector<StateInput> make_gamma_grid(const PlantModel& plant, int count,
                                        std::uint64_t seed) {
  require(count > 0, "make_gamma_grid: count must be positive");
  const int n = plant.n, m = plant.m;
  require(n + m <= 20, "make_gamma_grid: dimension exceeds the prime table");
  std::vector<StateInput> grid;
  grid.reserve(static_cast<std::size_t>(count));
  const std::uint64_t offset = 1 + (seed % 4096);
  for (int idx = 0; idx < count; ++idx) {
    const std::uint64_t h = offset + static_cast<std::uint64_t>(idx);
    StateInput z;
    z.x.resize(n);
    z.u.resize(m);
    for (int d = 0; d < n; ++d) {
      const double uu = halton(h, kPrimes[d]);
      z.x[d] = plant.state_domain.lower[d] +
               uu * (plant.state_domain.upper[d] - plant.state_domain.lower[d]);
    }
    for (int d = 0; d < m; ++d) {
      const double uu = halton(h, kPrimes[n + d]);
      z.u[d] = plant.input_box.lower[d] +
               uu * (plant.input_box.upper[d] - plant.input_box.lower[d]);
    }
    if (plant.renormalize_quaternion) {
      auto q = z.x.segment(plant.quaternion_offset, 4);
      const double norm = q.norm();
      if (norm < 1e-6) {
        q << 1, 0, 0, 0;
      } else {
        q /= norm;
      }
    }
    grid.push_back(std::move(z));
  }
  return grid;
}

std::vector<CompositeKernel> default_kernels(const PlantModel& plant, bool ard) {
  const Vec span = plant.state_domain.upper - plant.state_domain.lower;
  Vec ls;
  if (ard) {
    ls = (0.5 * span).cwiseMax(1e-3);
  } else {
    ls = Vec::Constant(plant.n, std::max(0.5 * span.mean(), 1e-3));
  }
  SqExpKernel proto;
  proto.signal_variance = 1.0;
  proto.lengthscales = ls;
  CompositeKernel composite;
  composite.base = proto;
  composite.channels.assign(static_cast<std::size_t>(plant.m), proto);
  return std::vector<CompositeKernel>(static_cast<std::size_t>(plant.n),
                                      composite);
}

std::vector<Measurement> sample_fit_data(const PlantModel& plant,
                                         const Vec& noise_scales, int count,
                                         std::uint64_t seed) {
  require(count > 0, "sample_fit_data: count must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Measurement> data;
  data.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Vec x = sample_state(plant, rng);
    const Vec u = sample_input(plant.input_box, rng);
    data.push_back(take_measurement(plant, x, u, noise_scales, rng()));
  }
  return data;
}

Vec estimate_rkhs_norms(const PlantModel& plant,
                        const std::vector<CompositeKernel>& kernels,
                        int samples, std::uint64_t seed) {
  require(static_cast<int>(kernels.size()) == plant.n,
          "estimate_rkhs_norms: one kernel per state dimension");
  const Vec zero_noise = Vec::Zero(plant.n);
  const auto data = sample_fit_data(plant, zero_noise, samples, seed);
  Vec norms(plant.n);
  for (int i = 0; i < plant.n; ++i) {
    const auto& kernel = kernels[static_cast<std::size_t>(i)];
    const int N = static_cast<int>(data.size());
    Mat K(N, N);
    Vec y(N);
    for (int a = 0; a < N; ++a) {
      y[a] = data[static_cast<std::size_t>(a)].y[i];
      for (int b = 0; b < N; ++b) {
        K(a, b) = kernel.eval(data[static_cast<std::size_t>(a)].z,
                              data[static_cast<std::size_t>(b)].z);
      }
    }
    K.diagonal().array() += 1e-8 * kernel.signal_variance_sum();
    const Eigen::LLT<Mat> llt(K);
    require(llt.info() == Eigen::Success,
            "estimate_rkhs_norms: kernel matrix not positive definite");
    norms[i] = std::sqrt(std::max(y.dot(llt.solve(y)), 0.0));
  }
  return norms;
}

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output csv for writing: " + path);
  std::string line = "t";
  for (int i = 0; i < log.x.cols(); ++i) line += ",x" + std::to_string(i);
  for (int i = 0; i < log.u.cols(); ++i) line += ",u" + std::to_string(i);
  line += ",mode";
  for (int k = 0; k < log.h.cols(); ++k) line += ",h_" + std::to_string(k + 1);
  line += ",margin,N,beta\n";
  out << line;
  for (int r = 0; r < log.records(); ++r) {
    line.clear();
    line += fmt(log.t[static_cast<std::size_t>(r)]);
    for (int i = 0; i < log.x.cols(); ++i) {
      line += ',';
      line += fmt(log.x(r, i));
    }
    for (int i = 0; i < log.u.cols(); ++i) {
      line += ',';
      line += fmt(log.u(r, i));
    }
    line += ',';
    line += mode_name(log.mode[static_cast<std::size_t>(r)]);
    for (int k = 0; k < log.h.cols(); ++k) {
      line += ',';
      line += fmt(log.h(r, k));
    }
    line += ',';
    line += fmt(log.margin[r]);
    line += ',';
    line += std::to_string(log.N[static_cast<std::size_t>(r)]);
    line += ',';
    line += fmt(log.beta[r]);
    line += '\n';
    out << line;
  }
  if (!out) throw ConfigError("write failed for output csv: " + path);
}

void write_run_summary(const std::string& path, const RunSummary& summary) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open summary file for writing: " + path);
  out << "safe: " << (summary.safe ? "true" : "false") << "\n";
  out << "failure_time: "
      << (summary.failure_time ? fmt(*summary.failure_time) : "none") << "\n";
  out << "exploration_events: " << summary.exploration_events << "\n";
  out << "feasibility_recovered_at: "
      << (summary.feasibility_recovered_at
              ? fmt(*summary.feasibility_recovered_at)
              : "none")
      << "\n";
  out << "errored: " << (summary.errored ? "true" : "false") << "\n";
  if (summary.errored) out << "error: " << summary.error << "\n";
  out << "wall_time_s: " << fmt(summary.wall_time) << "\n";
  if (!out) throw ConfigError("write failed for summary file: " + path);
}

void write_sweep_csvs(const SweepSpec& spec, const SweepResult& result) {
  if (!spec.table_csv.empty()) {
    std::ofstream out(spec.table_csv);
    if (!out) {
      throw ConfigError("cannot open sweep table for writing: " + spec.table_csv);
    }
    out << "dt,policy,trials,failures,failure_rate,errors,mean_events\n";
    for (const auto& cell : result.cells) {
      out << fmt(cell.dt) << ',' << policy_name(cell.policy) << ','
          << cell.trials << ',' << cell.failures << ','
          << fmt(cell.failure_rate()) << ',' << cell.errors << ','
          << fmt(cell.mean_events) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + spec.table_csv);
  }
  if (!spec.trials_csv.empty()) {
    std::ofstream out(spec.trials_csv);
    if (!out) {
      throw ConfigError("cannot open trials csv for writing: " + spec.trials_csv);
    }
    out << "dt,policy,trial,seed,safe,failure_time,exploration_events,min_h,"
           "errored\n";
    for (const auto& row : result.trials) {
      out << fmt(row.dt) << ',' << policy_name(row.policy) << ',' << row.trial
          << ',' << row.seed << ',' << (row.safe ? 1 : 0) << ','
          << (row.failure_time ? fmt(*row.failure_time) : "") << ','
          << row.exploration_events << ',' << fmt(row.min_h) << ','
          << (row.errored ? 1 : 0) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + spec.trials_csv);
  }
}

}  // namespace gpcbf
