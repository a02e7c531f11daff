#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gpcbf/sim.hpp"

namespace py = pybind11;
using namespace gpcbf;

namespace {

std::vector<std::string> mode_strings(const std::vector<ControlMode>& modes) {
  std::vector<std::string> out;
  out.reserve(modes.size());
  for (auto m : modes) {
    out.emplace_back(m == ControlMode::SafeFilter ? "SAFE_FILTER"
                                                  : "EXPLORE_HOLD");
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() =
      "Safe learning-based control: GP dynamics posteriors, robust CBF cone "
      "filtering, bandit exploration, and closed-loop simulation.";

  py::register_exception<ContractViolation>(mod, "ContractViolation",
                                            PyExc_ValueError);
  py::register_exception<NumericalError>(mod, "NumericalError",
                                         PyExc_RuntimeError);
  py::register_exception<DomainError>(mod, "DomainError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);

  py::class_<StateInput>(mod, "StateInput")
      .def(py::init<>())
      .def(py::init([](Vec x, Vec u) {
             StateInput z;
             z.x = std::move(x);
             z.u = std::move(u);
             return z;
           }),
           py::arg("x"), py::arg("u"))
      .def_readwrite("x", &StateInput::x)
      .def_readwrite("u", &StateInput::u);

  py::class_<Measurement>(mod, "Measurement")
      .def(py::init<>())
      .def(py::init([](Vec x, Vec u, Vec y) {
             Measurement m;
             m.z.x = std::move(x);
             m.z.u = std::move(u);
             m.y = std::move(y);
             return m;
           }),
           py::arg("x"), py::arg("u"), py::arg("y"))
      .def_readwrite("z", &Measurement::z)
      .def_readwrite("y", &Measurement::y);

  py::class_<InputBox>(mod, "InputBox")
      .def(py::init<>())
      .def(py::init([](Vec lower, Vec upper) {
             InputBox b;
             b.lower = std::move(lower);
             b.upper = std::move(upper);
             return b;
           }),
           py::arg("lower"), py::arg("upper"))
      .def_readwrite("lower", &InputBox::lower)
      .def_readwrite("upper", &InputBox::upper)
      .def("contains", &InputBox::contains, py::arg("u"), py::arg("tol") = 0.0)
      .def("center", &InputBox::center);

  py::class_<SqExpKernel>(mod, "SqExpKernel")
      .def(py::init<>())
      .def(py::init([](double sv, Vec ls) {
             SqExpKernel k;
             k.signal_variance = sv;
             k.lengthscales = std::move(ls);
             return k;
           }),
           py::arg("signal_variance"), py::arg("lengthscales"))
      .def_readwrite("signal_variance", &SqExpKernel::signal_variance)
      .def_readwrite("lengthscales", &SqExpKernel::lengthscales)
      .def("__call__", &SqExpKernel::operator(), py::arg("a"), py::arg("b"));

  py::class_<CompositeKernel>(mod, "CompositeKernel")
      .def(py::init<>())
      .def(py::init([](SqExpKernel base, std::vector<SqExpKernel> channels) {
             CompositeKernel k;
             k.base = std::move(base);
             k.channels = std::move(channels);
             return k;
           }),
           py::arg("base"), py::arg("channels"))
      .def_readwrite("base", &CompositeKernel::base)
      .def_readwrite("channels", &CompositeKernel::channels)
      .def("eval", &CompositeKernel::eval, py::arg("a"), py::arg("b"));

  py::class_<GpPosterior>(mod, "GpPosterior")
      .def_static("fit", &GpPosterior::fit, py::arg("kernels"),
                  py::arg("noise_scales"), py::arg("data"))
      .def("append", &GpPosterior::append, py::arg("measurement"))
      .def(
          "mean_var",
          [](const GpPosterior& gp, const Vec& x, const Vec& u) {
            StateInput z;
            z.x = x;
            z.u = u;
            Vec mean, var;
            gp.mean_var(z, mean, var);
            return py::make_tuple(mean, var);
          },
          py::arg("x"), py::arg("u"),
          "Posterior mean vector and per-dimension variance vector at (x, u).")
      .def("size", &GpPosterior::size)
      .def("output_dim", &GpPosterior::output_dim);

  py::class_<ConfidenceParams>(mod, "ConfidenceParams")
      .def(py::init<>())
      .def_readwrite("rkhs_bounds", &ConfidenceParams::rkhs_bounds)
      .def_readwrite("noise_scales", &ConfidenceParams::noise_scales)
      .def_readwrite("delta", &ConfidenceParams::delta);

  mod.def("confidence_beta", &confidence_beta, py::arg("params"),
          py::arg("gammas"));
  mod.def("info_gain_greedy", &info_gain_greedy, py::arg("kernel"),
          py::arg("noise_scale"), py::arg("grid"), py::arg("n"));

  py::class_<ConeConstraint>(mod, "ConeConstraint")
      .def(py::init<>())
      .def_readwrite("a", &ConeConstraint::a)
      .def_readwrite("b", &ConeConstraint::b)
      .def_readwrite("radius", &ConeConstraint::radius)
      .def_readwrite("M", &ConeConstraint::M)
      .def_readwrite("rhs", &ConeConstraint::rhs)
      .def("slack", &ConeConstraint::slack, py::arg("u"))
      .def("ucb_value", &ConeConstraint::ucb_value, py::arg("u"));

  py::class_<ConeProblem>(mod, "ConeProblem")
      .def(py::init<>())
      .def_readwrite("constraints", &ConeProblem::constraints)
      .def_readwrite("u_nom", &ConeProblem::u_nom)
      .def_readwrite("box", &ConeProblem::box);

  py::class_<SolveOptions>(mod, "SolveOptions")
      .def(py::init<>())
      .def_readwrite("gap_tol", &SolveOptions::gap_tol)
      .def_readwrite("feas_tol", &SolveOptions::feas_tol)
      .def_readwrite("barrier_factor", &SolveOptions::barrier_factor)
      .def_readwrite("max_newton", &SolveOptions::max_newton);

  mod.def(
      "feasibility_margin",
      [](const ConeProblem& p, const SolveOptions& opts) {
        return feasibility_margin(p, opts);
      },
      py::arg("problem"), py::arg("options") = SolveOptions{});
  mod.def(
      "solve_safety_filter",
      [](const ConeProblem& p, const SolveOptions& opts) {
        const FilterResult r = solve_safety_filter(p, opts);
        return py::make_tuple(
            r.status == FilterStatus::Feasible ? "feasible" : "infeasible",
            r.u, r.margin);
      },
      py::arg("problem"), py::arg("options") = SolveOptions{},
      "Returns (status, u, margin); u is meaningful when status is "
      "'feasible'.");
  mod.def("ucb_maximizing_input", &ucb_maximizing_input, py::arg("constraint"),
          py::arg("box"));

  py::enum_<ExplorationPolicy>(mod, "ExplorationPolicy")
      .value("UCB", ExplorationPolicy::Ucb)
      .value("RANDOM", ExplorationPolicy::Random);

  py::class_<HyperFitSpec>(mod, "HyperFitSpec")
      .def(py::init<>())
      .def_readwrite("enabled", &HyperFitSpec::enabled)
      .def_readwrite("count", &HyperFitSpec::count)
      .def_readwrite("seed", &HyperFitSpec::seed)
      .def_readwrite("restarts", &HyperFitSpec::restarts)
      .def_readwrite("ard", &HyperFitSpec::ard);

  py::class_<SweepSpec>(mod, "SweepSpec")
      .def(py::init<>())
      .def_readwrite("dts", &SweepSpec::dts)
      .def_readwrite("policies", &SweepSpec::policies)
      .def_readwrite("trials", &SweepSpec::trials)
      .def_readwrite("stop_on_failure", &SweepSpec::stop_on_failure)
      .def_readwrite("region_lower", &SweepSpec::region_lower)
      .def_readwrite("region_upper", &SweepSpec::region_upper)
      .def_readwrite("table_csv", &SweepSpec::table_csv)
      .def_readwrite("trials_csv", &SweepSpec::trials_csv);

  py::class_<BoundsSpec>(mod, "BoundsSpec")
      .def(py::init<>())
      .def_readwrite("use_growth", &BoundsSpec::use_growth)
      .def_readwrite("c_gamma", &BoundsSpec::c_gamma)
      .def_readwrite("omega", &BoundsSpec::omega)
      .def_readwrite("theta", &BoundsSpec::theta);

  py::class_<CruiseParams>(mod, "CruiseParams")
      .def(py::init<>())
      .def_readwrite("mass", &CruiseParams::mass)
      .def_readwrite("lead_speed", &CruiseParams::lead_speed)
      .def_readwrite("headway", &CruiseParams::headway)
      .def_readwrite("desired_speed", &CruiseParams::desired_speed)
      .def_readwrite("input_limit", &CruiseParams::input_limit);

  py::class_<QuadrotorParams>(mod, "QuadrotorParams")
      .def(py::init<>())
      .def_readwrite("gravity", &QuadrotorParams::gravity)
      .def_readwrite("thrust_max", &QuadrotorParams::thrust_max)
      .def_readwrite("omega_max", &QuadrotorParams::omega_max)
      .def_readwrite("radius", &QuadrotorParams::radius);

  py::class_<SimConfig>(mod, "SimConfig")
      .def(py::init<>())
      .def_readwrite("plant", &SimConfig::plant)
      .def_readwrite("horizon", &SimConfig::horizon)
      .def_readwrite("dt_sample", &SimConfig::dt_sample)
      .def_readwrite("dt_int", &SimConfig::dt_int)
      .def_readwrite("epsilon", &SimConfig::epsilon)
      .def_readwrite("alpha_slope", &SimConfig::alpha_slope)
      .def_readwrite("delta", &SimConfig::delta)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("policy", &SimConfig::policy)
      .def_readwrite("gamma_grid_size", &SimConfig::gamma_grid_size)
      .def_readwrite("initial_state", &SimConfig::initial_state)
      .def_readwrite("rkhs_bounds", &SimConfig::rkhs_bounds)
      .def_readwrite("noise_scales", &SimConfig::noise_scales)
      .def_readwrite("output_csv", &SimConfig::output_csv)
      .def_readwrite("summary_path", &SimConfig::summary_path)
      .def_readwrite("cruise", &SimConfig::cruise)
      .def_readwrite("quadrotor", &SimConfig::quadrotor)
      .def_readwrite("quad_setpoint", &SimConfig::quad_setpoint)
      .def_readwrite("hyper_fit", &SimConfig::hyper_fit)
      .def_readwrite("hypers_file", &SimConfig::hypers_file)
      .def_readwrite("perfect_model", &SimConfig::perfect_model)
      .def_readwrite("sweep", &SimConfig::sweep)
      .def_readwrite("bounds", &SimConfig::bounds)
      .def("validate", &SimConfig::validate);

  mod.def("load_config", &load_sim_config, py::arg("path"));

  py::class_<TrajectoryLog>(mod, "TrajectoryLog")
      .def_readonly("t", &TrajectoryLog::t)
      .def_readonly("x", &TrajectoryLog::x)
      .def_readonly("u", &TrajectoryLog::u)
      .def_property_readonly(
          "mode", [](const TrajectoryLog& log) { return mode_strings(log.mode); })
      .def_readonly("h", &TrajectoryLog::h)
      .def_readonly("margin", &TrajectoryLog::margin)
      .def_readonly("N", &TrajectoryLog::N)
      .def_readonly("beta", &TrajectoryLog::beta)
      .def_readonly("cbf_names", &TrajectoryLog::cbf_names)
      .def("records", &TrajectoryLog::records);

  py::class_<RunSummary>(mod, "RunSummary")
      .def_readonly("safe", &RunSummary::safe)
      .def_readonly("failure_time", &RunSummary::failure_time)
      .def_readonly("exploration_events", &RunSummary::exploration_events)
      .def_readonly("feasibility_recovered_at",
                    &RunSummary::feasibility_recovered_at)
      .def_readonly("wall_time", &RunSummary::wall_time)
      .def_readonly("errored", &RunSummary::errored)
      .def_readonly("error", &RunSummary::error);

  py::class_<RunResult>(mod, "RunResult")
      .def_readonly("log", &RunResult::log)
      .def_readonly("summary", &RunResult::summary);

  mod.def("run_simulation", &run_simulation, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());

  py::class_<SweepCell>(mod, "SweepCell")
      .def_readonly("dt", &SweepCell::dt)
      .def_readonly("policy", &SweepCell::policy)
      .def_readonly("trials", &SweepCell::trials)
      .def_readonly("failures", &SweepCell::failures)
      .def_readonly("errors", &SweepCell::errors)
      .def_readonly("mean_events", &SweepCell::mean_events)
      .def("failure_rate", &SweepCell::failure_rate);

  py::class_<SweepTrial>(mod, "SweepTrial")
      .def_readonly("dt", &SweepTrial::dt)
      .def_readonly("policy", &SweepTrial::policy)
      .def_readonly("trial", &SweepTrial::trial)
      .def_readonly("seed", &SweepTrial::seed)
      .def_readonly("initial_state", &SweepTrial::initial_state)
      .def_readonly("safe", &SweepTrial::safe)
      .def_readonly("failure_time", &SweepTrial::failure_time)
      .def_readonly("exploration_events", &SweepTrial::exploration_events)
      .def_readonly("min_h", &SweepTrial::min_h)
      .def_readonly("errored", &SweepTrial::errored);

  py::class_<SweepResult>(mod, "SweepResult")
      .def_readonly("cells", &SweepResult::cells)
      .def_readonly("trials", &SweepResult::trials);

  mod.def("run_failure_sweep", &run_failure_sweep, py::arg("base"),
          py::arg("spec"), py::call_guard<py::gil_scoped_release>());

  py::class_<BoundsReport>(mod, "BoundsReport")
      .def_readonly("cbf_name", &BoundsReport::cbf_name)
      .def_readonly("delta_n_max", &BoundsReport::delta_n_max)
      .def_readonly("closed_form", &BoundsReport::closed_form)
      .def_readonly("dt_threshold", &BoundsReport::dt_threshold)
      .def_readonly("beta_at_n", &BoundsReport::beta_at_n)
      .def_readonly("h_lipschitz", &BoundsReport::h_lipschitz)
      .def_readonly("xdot_bound", &BoundsReport::xdot_bound);

  mod.def("compute_bounds", &compute_bounds, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
  mod.def("run_fit_hypers", &run_fit_hypers, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
  mod.def("save_hyperparameters", &save_hyperparameters, py::arg("path"),
          py::arg("kernels"), py::arg("noise_scales"));
  mod.def("load_hyperparameters", &load_hyperparameters, py::arg("path"));
}
