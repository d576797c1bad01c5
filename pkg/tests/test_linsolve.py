"""The Helmholtz solver (I − cΔ_N)⁻¹: transform eigenvalues, residual
guarantees, agreement between the direct and iterative routes, and the
dense-matrix cross-check."""

import numpy as np
import pytest

from _dense import neumann_laplacian_matrix
from convcool import (GridSpec, HelmholtzOperator, ScalarField,
                      SolverError, helmholtz_solve, mean)
from convcool.linsolve import cell_eigenvalues


def test_cell_eigenvalues_match_difference_quotients():
    # 4 sin²(kπ/2n)/h² equals 2(1 − cos(kπ/n))/h², the symbol of the
    # mirror-ghost second difference; k = 0 gives exactly 0 (constants).
    n, h = 12, 1.0 / 12
    lam = cell_eigenvalues(n, h)
    k = np.arange(n)
    assert np.allclose(lam, 2.0 * (1.0 - np.cos(k * np.pi / n)) / h ** 2)
    assert lam[0] == 0.0
    assert np.all(np.diff(lam) > 0)


def test_operator_apply_matches_dense_matrix():
    rng = np.random.default_rng(2)
    g = GridSpec(7, 5)
    lap = neumann_laplacian_matrix(7, 5, g.hx, g.hy)
    op = HelmholtzOperator(g, 0.03)
    dense = np.eye(35) - 0.03 * lap
    for _ in range(3):
        f = rng.standard_normal((7, 5))
        got = op.apply(ScalarField(g, f)).values
        want = (dense @ f.reshape(-1)).reshape(7, 5)
        assert np.max(np.abs(got - want)) < 1e-12


def test_direct_solve_inverts_the_stencil():
    rng = np.random.default_rng(3)
    for nx, ny, c in ((8, 8, 0.05), (16, 9, 1.3), (5, 12, 0.0)):
        g = GridSpec(nx, ny)
        op = HelmholtzOperator(g, c)
        rhs = ScalarField(g, rng.standard_normal((nx, ny)))
        u, report = helmholtz_solve(op, rhs)
        residual = op.apply(u).values - rhs.values
        assert np.max(np.abs(residual)) < 1e-11
        assert report.method == "dct"
        # λ_0 = 0: the solve preserves the mean exactly
        assert abs(mean(u) - mean(rhs)) < 1e-13 * (1 + abs(mean(rhs)))


def test_pcg_agrees_with_direct():
    rng = np.random.default_rng(4)
    g = GridSpec(14, 11)
    op = HelmholtzOperator(g, 0.2)
    for _ in range(3):
        rhs = ScalarField(g, rng.standard_normal((14, 11)))
        direct, _ = helmholtz_solve(op, rhs)
        iterative, report = helmholtz_solve(op, rhs, tol=1e-12, method="pcg")
        assert np.max(np.abs(direct.values - iterative.values)) < 1e-9
        assert report.iterations > 0
        assert report.residual <= 1e-12


def test_solve_eigenmode_exactly():
    # cos(πx) is a discrete eigenvector: with rhs = (1 + cλ)cos(πx) the
    # solution is the mode itself.
    g = GridSpec(20, 20)
    c = 0.7
    lam = cell_eigenvalues(20, g.hx)[1]  # k = 1 mode in x
    x, _ = g.cell_mesh()
    mode = np.cos(np.pi * x) + np.zeros((20, 20))
    op = HelmholtzOperator(g, c)
    rhs = ScalarField(g, (1.0 + c * lam) * mode)
    u, _ = helmholtz_solve(op, rhs)
    assert np.max(np.abs(u.values - mode)) < 1e-11


def test_validation_errors():
    g = GridSpec(6, 6)
    with pytest.raises(ValueError):
        HelmholtzOperator(g, -0.1)
    op = HelmholtzOperator(g, 0.1)
    rhs = ScalarField(GridSpec(8, 8), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        helmholtz_solve(op, rhs)
    with pytest.raises(ValueError):
        helmholtz_solve(op, ScalarField(g, np.zeros((6, 6))), tol=0.0)
    with pytest.raises(ValueError):
        helmholtz_solve(op, ScalarField(g, np.zeros((6, 6))), method="qr")


def test_pcg_iteration_cap_raises():
    g = GridSpec(10, 10)
    op = HelmholtzOperator(g, 5.0)
    rhs = ScalarField(g, np.ones((10, 10)))
    rhs.values[0, 0] += 1.0
    with pytest.raises(SolverError):
        helmholtz_solve(op, rhs, tol=1e-300, method="pcg", precond="jacobi")
