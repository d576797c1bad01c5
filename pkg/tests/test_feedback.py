"""Closed-loop control: the instantaneous velocity against a dense-matrix
twin, mixing-norm oracles, the exact tau = 0 reduction, and sweep plumbing."""

import numpy as np
import pytest

import convcool.feedback as feedback_mod
from _dense import feedback_velocity_dense
from convcool import (ControlTrajectory, FeedbackConfig, GridSpec,
                      ScalarField, TimeGrid, feedback_velocity,
                      forward_solve, mix_norm, norm_l2, simulate_closed_loop,
                      tau_sweep)
from convcool.app import build_initial_condition, InitialConditionSpec
from convcool.errors import ConfigError, SolverError
from convcool.linsolve import cell_eigenvalues


def _cfg(g, tg, tau):
    return FeedbackConfig(tau, 0.025, 0.05, tg, g)


def test_feedback_velocity_matches_dense_assembly():
    g = GridSpec(10, 10)
    tg = TimeGrid(1.0, 10)
    fields = [build_initial_condition(InitialConditionSpec("example1"), g)]
    rng = np.random.default_rng(60)
    fields.append(ScalarField(g, rng.standard_normal((10, 10))))
    for T in fields:
        for tau in (0.75, 1.25):
            sol = feedback_velocity(T, _cfg(g, tg, tau))
            u_ref, w_ref = feedback_velocity_dense(T.values, tau, 0.025,
                                                   0.05, g.hx, g.hy)
            assert np.max(np.abs(sol.velocity.u - u_ref)) < 1e-8
            assert np.max(np.abs(sol.velocity.w - w_ref)) < 1e-8


def test_feedback_velocity_is_exactly_zero_for_zero_gain():
    g = GridSpec(10, 10)
    T = build_initial_condition(InitialConditionSpec("example1"), g)
    sol = feedback_velocity(T, _cfg(g, TimeGrid(1.0, 10), 0.0))
    assert np.all(sol.velocity.u == 0.0) and np.all(sol.velocity.w == 0.0)
    assert sol.report.iterations == 0


def test_mix_norm_on_an_eigenmode():
    # dev T is the cos(pi x) mode, an eigenvector of the smoother, so the
    # mixing norm collapses to ||T|| * sqrt(1 + lam) / (1 + coeff*lam)
    g = GridSpec(24, 24)
    lam = cell_eigenvalues(24, g.hx)[1]
    x, _ = g.cell_mesh()
    T = ScalarField(g, 1.7 * np.cos(np.pi * x) + np.zeros((24, 24)))
    base = norm_l2(T)
    for coeff in (1.0, 0.05 * 0.75):
        expected = base * np.sqrt(1.0 + lam) / (1.0 + coeff * lam)
        assert abs(mix_norm(T, coeff) - expected) < 1e-10 * expected


def test_zero_gain_run_reproduces_the_uncontrolled_march():
    g = GridSpec(16, 16)
    tg = TimeGrid(1.0, 8)
    rng = np.random.default_rng(61)
    T0 = ScalarField(g, rng.standard_normal((16, 16)))
    run = simulate_closed_loop(_cfg(g, tg, 0.0), T0)
    ref = forward_solve(ControlTrajectory.zeros(g, tg), T0, 0.05)
    for i in range(tg.n_t + 1):
        assert np.array_equal(run.T[i].values, ref[i].values)
    assert run.objective.j_gamma == 0.0
    assert np.all(run.vel_norms == 0.0)
    assert np.all(run.control_power == 0.0)


def test_feedback_accelerates_decay():
    g = GridSpec(40, 40)
    tg = TimeGrid(1.0, 40)
    T0 = build_initial_condition(InitialConditionSpec("example1"), g)
    run0 = simulate_closed_loop(_cfg(g, tg, 0.0), T0)
    run = simulate_closed_loop(_cfg(g, tg, 0.75), T0)
    assert run.dev_norms[-1] < run0.dev_norms[-1]
    assert run.mix_norms[-1] < run0.mix_norms[-1]
    assert run.objective.j_total < run0.objective.j_total
    assert run.dev_norms[-1] < run.dev_norms[0]
    # diagnostics cover every node, controls hold their final value
    assert len(run.dev_norms) == len(run.vel_norms) == tg.n_t + 1
    assert run.vel_norms[-1] == run.vel_norms[-2]
    assert run.control_power[-1] == run.control_power[-2]
    assert np.all(run.control_power >= 0.0)
    assert run.objective.max_vel == np.max(run.vel_norms)


def test_sweep_rows_and_error_capture(monkeypatch):
    g = GridSpec(16, 16)
    tg = TimeGrid(1.0, 16)
    T0 = build_initial_condition(InitialConditionSpec("example1"), g)
    base = _cfg(g, tg, 0.0)
    rows = tau_sweep(base, [0.0, 0.5, 1.0], T0)
    assert [r.tau for r in rows] == [0.0, 0.5, 1.0]
    for r in rows:
        assert r.error is None
        assert r.objective is not None and r.reported is not None
        assert len(r.dev_norms) == tg.n_t + 1
    assert rows[0].reported.j_gamma == 0.0

    real = feedback_mod.simulate_closed_loop

    def explode(cfg, T0_arg):
        if cfg.tau == 0.5:
            raise SolverError("stokes diverged", time_index=3)
        return real(cfg, T0_arg)

    monkeypatch.setattr(feedback_mod, "simulate_closed_loop", explode)
    rows = tau_sweep(base, [0.0, 0.5, 1.0], T0)
    assert rows[1].error is not None and "diverged" in rows[1].error
    assert rows[1].objective is None
    assert rows[0].error is None and rows[2].error is None

    with pytest.raises(ConfigError):
        tau_sweep(base, [], T0)
    with pytest.raises(ConfigError):
        tau_sweep(base, [0.5, -0.1], T0)


def test_config_validation():
    g = GridSpec(8, 8)
    tg = TimeGrid(1.0, 4)
    with pytest.raises(ConfigError):
        FeedbackConfig(-0.1, 0.025, 0.05, tg, g)
    with pytest.raises(ConfigError):
        FeedbackConfig(0.5, 0.0, 0.05, tg, g)
    with pytest.raises(ConfigError):
        FeedbackConfig(0.5, 0.025, -1.0, tg, g)
    cfg = _cfg(g, tg, 0.5).with_tau(1.5)
    assert cfg.tau == 1.5 and cfg.gamma == 0.025
    with pytest.raises(ConfigError):
        simulate_closed_loop(cfg, ScalarField.zeros(GridSpec(10, 10)))
