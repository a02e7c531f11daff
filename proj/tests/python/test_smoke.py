import math

import numpy as np
import pytest

import gpcbf


def make_kernel(state_dim, input_dim):
    base = gpcbf.SqExpKernel(1.0, np.full(state_dim, 0.7))
    channels = [gpcbf.SqExpKernel(0.5, np.full(state_dim, 0.9)) for _ in range(input_dim)]
    return gpcbf.CompositeKernel(base, channels)


def test_gp_posterior_interpolates():
    kernel = make_kernel(2, 1)
    data = [
        gpcbf.Measurement(np.array([0.1, -0.2]), np.array([0.3]), np.array([1.0, -1.0])),
        gpcbf.Measurement(np.array([0.5, 0.4]), np.array([-0.2]), np.array([0.2, 0.7])),
    ]
    gp = gpcbf.GpPosterior.fit([kernel, kernel], np.array([1e-4, 1e-4]), data)
    assert gp.size() == 2
    assert gp.output_dim() == 2
    mean, var = gp.mean_var(np.array([0.1, -0.2]), np.array([0.3]))
    assert np.allclose(mean, [1.0, -1.0], atol=1e-3)
    assert np.all(var >= 0.0)
    assert np.all(var < 1e-4)

    gp2 = gp.append(
        gpcbf.Measurement(np.array([-0.3, 0.0]), np.array([0.1]), np.array([0.0, 0.5]))
    )
    assert gp2.size() == 3
    assert gp.size() == 2  # value semantics: the original is untouched


def test_cone_filter_returns_nominal_when_feasible():
    c = gpcbf.ConeConstraint()
    c.a = np.array([1.0])
    c.b = 0.0
    c.radius = 0.5
    c.M = np.eye(2) * 0.01
    c.rhs = -1.0
    p = gpcbf.ConeProblem()
    p.constraints = [c]
    p.u_nom = np.array([0.2])
    p.box = gpcbf.InputBox(np.array([-1.0]), np.array([1.0]))
    status, u, margin = gpcbf.solve_safety_filter(p)
    assert status == "feasible"
    assert margin > 0.0
    assert u == pytest.approx([0.2])

    ucb_u = gpcbf.ucb_maximizing_input(c, p.box)
    assert ucb_u == pytest.approx([1.0])


def test_perfect_model_simulation_runs_safe():
    cfg = gpcbf.SimConfig()
    cfg.plant = "cruise"
    cfg.horizon = 0.05
    cfg.dt_sample = 1e-3
    cfg.epsilon = 0.5
    cfg.seed = 3
    cfg.perfect_model = True
    cfg.initial_state = np.array([20.0, 80.0])
    cfg.noise_scales = np.zeros(2)
    cfg.rkhs_bounds = np.array([1.0, 1.0])
    result = gpcbf.run_simulation(cfg)
    assert result.summary.safe
    assert not result.summary.errored
    assert result.summary.exploration_events == 0
    assert result.log.records() == len(result.log.t)
    assert set(result.log.mode) == {"SAFE_FILTER"}
    assert np.all(result.log.h >= 0.0)


def test_config_validation_raises():
    cfg = gpcbf.SimConfig()
    cfg.plant = "not-a-plant"
    with pytest.raises(ValueError):
        cfg.validate()


def test_confidence_beta_monotone_in_gamma():
    params = gpcbf.ConfidenceParams()
    params.rkhs_bounds = np.array([1.0, 2.0])
    params.noise_scales = np.array([0.1, 0.1])
    params.delta = 0.05
    lo = gpcbf.confidence_beta(params, np.array([1.0, 1.0]))
    hi = gpcbf.confidence_beta(params, np.array([4.0, 4.0]))
    assert hi > lo > 0.0
    assert math.isfinite(hi)
