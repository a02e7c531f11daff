"""Safe learning-based control with Gaussian-process bandit exploration.

A robust control-barrier-function safety filter runs against a GP posterior
over unknown control-affine dynamics; whenever the robust filter goes
infeasible, the controller holds a UCB-maximizing exploratory input and
collects a derivative measurement until feasibility is recovered.
"""

from ._core import (
    BoundsReport,
    BoundsSpec,
    CompositeKernel,
    ConeConstraint,
    ConeProblem,
    ConfidenceParams,
    ConfigError,
    ContractViolation,
    CruiseParams,
    DomainError,
    ExplorationPolicy,
    GpPosterior,
    HyperFitSpec,
    InputBox,
    Measurement,
    NumericalError,
    QuadrotorParams,
    RunResult,
    RunSummary,
    SimConfig,
    SolveOptions,
    SqExpKernel,
    StateInput,
    SweepCell,
    SweepResult,
    SweepSpec,
    SweepTrial,
    TrajectoryLog,
    compute_bounds,
    confidence_beta,
    feasibility_margin,
    info_gain_greedy,
    load_config,
    load_hyperparameters,
    run_failure_sweep,
    run_fit_hypers,
    run_simulation,
    save_hyperparameters,
    solve_safety_filter,
    ucb_maximizing_input,
)

__all__ = [
    "BoundsReport",
    "BoundsSpec",
    "CompositeKernel",
    "ConeConstraint",
    "ConeProblem",
    "ConfidenceParams",
    "ConfigError",
    "ContractViolation",
    "CruiseParams",
    "DomainError",
    "ExplorationPolicy",
    "GpPosterior",
    "HyperFitSpec",
    "InputBox",
    "Measurement",
    "NumericalError",
    "QuadrotorParams",
    "RunResult",
    "RunSummary",
    "SimConfig",
    "SolveOptions",
    "SqExpKernel",
    "StateInput",
    "SweepCell",
    "SweepResult",
    "SweepSpec",
    "SweepTrial",
    "TrajectoryLog",
    "compute_bounds",
    "confidence_beta",
    "feasibility_margin",
    "info_gain_greedy",
    "load_config",
    "load_hyperparameters",
    "run_failure_sweep",
    "run_fit_hypers",
    "run_simulation",
    "save_hyperparameters",
    "solve_safety_filter",
    "ucb_maximizing_input",
]
