"""Acceleration on a known linear fixed point, continuation ladders, the
fixed-point map's structure, and a small end-to-end optimal solve."""

import numpy as np
import pytest

from conftest import random_divfree_control
from convcool import (AndersonMemory, ControlProblem, ControlTrajectory,
                      GridSpec, ScalarField, TimeGrid, adjoint_solve,
                      anderson_step, continuation_levels, directional_derivative,
                      divergence, evaluate, forward_solve, picard_map,
                      solve_optimal)
from convcool.app import build_initial_condition, InitialConditionSpec
from convcool.errors import ConfigError, SolverError


def test_acceleration_beats_plain_iteration_on_a_linear_map():
    # g(x) = Ax + b with spectral radius 0.9: plain iteration contracts by
    # 0.9 per step, while the depth-2 extrapolation recovers the affine
    # fixed point essentially exactly once two differences are in memory.
    A = np.array([[0.9, 0.0], [0.0, 0.8]])
    b = np.array([1.0, 1.0])
    x_star = np.linalg.solve(np.eye(2) - A, b)

    def g(x):
        return A @ x + b

    mem = AndersonMemory(2)
    x = np.zeros(2)
    for _ in range(5):
        x = mem.mix(x, g(x))
    assert np.linalg.norm(x - x_star) < 1e-10

    x_plain = np.zeros(2)
    for _ in range(5):
        x_plain = g(x_plain)
    assert np.linalg.norm(x_plain - x_star) > 1e-2


def test_degenerate_residual_differences_fall_back_to_picard():
    # g(x) = x + c has identical residual everywhere, so the least-squares
    # system is singular; the mixer must hand back the plain map value
    c = np.array([1.0, 2.0])
    mem = AndersonMemory(3)
    x0 = np.zeros(2)
    x1 = mem.mix(x0, x0 + c)
    assert np.all(x1 == x0 + c)
    x2 = mem.mix(x1, x1 + c)
    assert mem.fallbacks == 1
    assert np.all(x2 == x1 + c)


def test_anderson_step_with_empty_memory_is_picard():
    rng = np.random.default_rng(50)
    g = GridSpec(8, 8)
    tg = TimeGrid(1.0, 3)
    v = random_divfree_control(g, tg, rng)
    gv = random_divfree_control(g, tg, rng)
    out = anderson_step(AndersonMemory(5), v, gv)
    for i in range(tg.n_t):
        assert np.array_equal(out[i].u, gv[i].u)
        assert np.array_equal(out[i].w, gv[i].w)


def test_continuation_ladder():
    levels = continuation_levels(GridSpec(40, 40), TimeGrid(1.0, 40))
    assert [(g.nx, g.ny, tg.n_t) for g, tg in levels] == [
        (10, 10, 10), (20, 20, 20), (40, 40, 40)]
    assert all(tg.t_f == 1.0 for _, tg in levels)
    only = continuation_levels(GridSpec(10, 10), TimeGrid(2.0, 10))
    assert len(only) == 1 and only[0][1].t_f == 2.0
    with pytest.raises(ConfigError):
        continuation_levels(GridSpec(48, 48), TimeGrid(1.0, 48))
    with pytest.raises(ConfigError):
        continuation_levels(GridSpec(20, 20), TimeGrid(1.0, 40))


def test_problem_validation():
    g = GridSpec(10, 10)
    tg = TimeGrid(1.0, 10)
    ic = lambda x, y: x * y
    good = dict(kappa=0.05, alpha=0.0, beta=1.0, gamma=0.025)
    ControlProblem(g, tg, ic, **good)
    for bad in (dict(good, kappa=0.0), dict(good, gamma=-1.0),
                dict(good, alpha=-0.5), dict(good, beta=-1.0)):
        with pytest.raises(ConfigError):
            ControlProblem(g, tg, ic, **bad)
    with pytest.raises(ConfigError):
        ControlProblem(g, tg, ic, **good, tol=0.0)
    with pytest.raises(ConfigError):
        ControlProblem(g, tg, ic, **good, memory=0)


def test_initial_condition_sampling_and_coarsening():
    g_fine = GridSpec(20, 20)
    g_coarse = GridSpec(10, 10)
    tg = TimeGrid(1.0, 20)
    rng = np.random.default_rng(51)
    field = ScalarField(g_fine, rng.standard_normal((20, 20)))
    problem = ControlProblem(g_fine, tg, field, 0.05, 0.0, 1.0, 0.025)
    same = problem.initial_condition(g_fine)
    assert np.array_equal(same.values, field.values)
    assert same.values is not field.values
    coarse = problem.initial_condition(g_coarse)
    blocks = 0.25 * (field.values[0::2, 0::2] + field.values[1::2, 0::2]
                     + field.values[0::2, 1::2] + field.values[1::2, 1::2])
    assert np.max(np.abs(coarse.values - blocks)) < 1e-15
    with pytest.raises(ConfigError):
        problem.initial_condition(GridSpec(15, 15))
    # a callable is re-sampled per level via vertex averaging
    fn = ControlProblem(g_fine, tg, lambda x, y: x + 2 * y, 0.05, 0.0, 1.0, 0.025)
    sampled = fn.initial_condition(g_coarse)
    x, y = g_coarse.cell_mesh()
    assert np.max(np.abs(sampled.values - (x + 2 * y))) < 1e-14


def test_picard_map_is_divergence_free_and_zero_for_zero_weights():
    rng = np.random.default_rng(52)
    g = GridSpec(12, 12)
    tg = TimeGrid(1.0, 6)
    ic = ScalarField(g, rng.standard_normal((12, 12)))
    v = random_divfree_control(g, tg, rng, scale=0.5)
    problem = ControlProblem(g, tg, ic, 0.05, 0.0, 1.0, 0.025)
    out = picard_map(v, problem)
    for i in range(tg.n_t):
        div = divergence(out[i]).values
        assert np.max(np.abs(div)) < 1e-7
        assert np.all(out[i].u[0, :] == 0) and np.all(out[i].u[-1, :] == 0)
    # zero cost weights: the adjoint vanishes, so the map returns rest
    dead = ControlProblem(g, tg, ic, 0.05, 0.0, 0.0, 0.025)
    out = picard_map(v, dead)
    assert all(np.all(out[i].u == 0) and np.all(out[i].w == 0)
               for i in range(tg.n_t))


def test_small_optimal_solve_reaches_a_stationary_point():
    g = GridSpec(20, 20)
    tg = TimeGrid(1.0, 20)
    ic = build_initial_condition(InitialConditionSpec("example1"), g)
    problem = ControlProblem(g, tg, ic, 0.05, 0.0, 1.0, 0.025)
    result = solve_optimal(problem)

    assert result.residual_history[-1] <= problem.tol
    assert set(result.level_iterations) == {(10, 10, 10), (20, 20, 20)}
    assert result.iterations == result.level_iterations[(20, 20, 20)]
    assert result.wall_time > 0.0

    # strict improvement over no control
    T_none = forward_solve(ControlTrajectory.zeros(g, tg), ic, 0.05)
    j_none = evaluate(T_none, ControlTrajectory.zeros(g, tg), 0.0, 1.0, 0.025)
    assert result.objective.j_total < j_none.j_total
    assert result.objective.max_div < 1e-7

    # the returned control is a fixed point of the map to the stated tol
    g_of_v = picard_map(result.v, problem)
    scale = np.sqrt(tg.dt * g.hx * g.hy)
    x = result.v.to_flat()
    res = scale * np.linalg.norm(g_of_v.to_flat() - x) / (1 + scale * np.linalg.norm(x))
    assert res <= 10 * problem.tol

    # and the cost gradient there is numerically stationary
    rng = np.random.default_rng(53)
    q = adjoint_solve(result.v, result.T, 0.0, 1.0, 0.05)
    for _ in range(2):
        h = random_divfree_control(g, tg, rng)
        dd = directional_derivative(result.v, result.T, q, h, 0.025)
        assert abs(dd) < 1e-4


def test_non_convergence_raises_with_context():
    g = GridSpec(10, 10)
    tg = TimeGrid(1.0, 10)
    ic = build_initial_condition(InitialConditionSpec("example1"), g)
    problem = ControlProblem(g, tg, ic, 0.05, 0.0, 1.0, 0.025,
                             tol=1e-15, max_iterations=3)
    with pytest.raises(SolverError) as err:
        solve_optimal(problem)
    assert err.value.context["iterations"] == 3
    assert "residual" in err.value.context
    assert "best_residual" in err.value.context


def test_coarse_level_stall_warns_and_the_target_level_still_converges(
        monkeypatch):
    # the fixed-point tolerance is a contract for the target level only; a
    # coarser level that exhausts its budget is just a rougher warm start
    from convcool import optimize as optimize_mod

    g = GridSpec(20, 20)
    tg = TimeGrid(1.0, 20)
    ic = build_initial_condition(InitialConditionSpec("example1"), g)
    problem = ControlProblem(g, tg, ic, 0.05, 0.0, 1.0, 0.025)
    real = optimize_mod._aa_picard

    def stalled_on_coarse(problem, grid, tg, v0, T0, tag):
        v, history, restarts, converged = real(problem, grid, tg, v0, T0, tag)
        if grid.nx < problem.grid.nx:
            return v, history, restarts, False
        return v, history, restarts, converged

    monkeypatch.setattr(optimize_mod, "_aa_picard", stalled_on_coarse)
    with pytest.warns(UserWarning, match="refining from its best iterate"):
        result = solve_optimal(problem)
    assert result.residual_history[-1] <= problem.tol
