"""Stationary Stokes solver on the MAC grid:

    γ·(−Δ)v + ∇p = f,   ∇·v = 0,   v|_Γ = 0,   ∫p = 0.

The saddle system is reduced to its pressure Schur complement.  With
L = −Δ (componentwise, no-slip walls), B = divergence and the discrete
gradient G = −Bᵀ, eliminating v = (γL)⁻¹(f − Gp) leaves

    K p = b,     K = B L⁻¹ Bᵀ  (SPD on mean-free p),   b = −B L⁻¹ f,

which conjugate gradients solve in a mesh-independent number of iterations
(K is spectrally equivalent to the identity).  Each K-apply costs one
gradient, two fast component solves, and one divergence.  The component
Laplacians are diagonalized exactly by sine transforms — DST-I across the
Dirichlet direction (interior faces), DST-II across the wall-reflected
direction — so the momentum equation is satisfied to round-off and the final
divergence equals −r/γ, where r is the pressure residual.  The stopping rule
‖r‖ ≤ γ·tol·(1 + ‖f‖) therefore bounds ‖∇·v‖ ≤ tol·(1 + ‖f‖) exactly.

Everything is written over a leading batch axis so that a whole trajectory of
independent force fields is solved in one sweep of vectorized transforms;
per-column CG coefficients keep each column's iteration path identical to a
standalone solve.
"""

import numpy as np
import scipy.fft

from .errors import SolverError
from .grid import ScalarField, StaggeredVelocity, mean, vel_norm_l2

DEFAULT_TOL = 1e-10
_component_cache = {}


def _sine_eigenvalues(n, h, kind):
    """Eigenvalues 4·sin²(kπ/(2n))/h² of −d²/dx² for the two face lines:
    ``kind="interior"`` is the Dirichlet line on interior faces (k = 1..n−1,
    DST-I modes); ``kind="reflect"`` is the wall-reflected cell line
    (k = 1..n, DST-II modes)."""
    if kind == "interior":
        k = np.arange(1, n)
    else:
        k = np.arange(1, n + 1)
    s = np.sin(k * np.pi / (2 * n))
    return 4.0 * s * s / (h * h)


class _ComponentSolvers:
    """Cached fast inverses of the componentwise −Δ with no-slip walls.

    ``solve_u`` acts on the interior u-rows (..., nx−1, ny): DST-I along x,
    DST-II along y.  ``solve_w`` mirrors the roles.  Instances are immutable
    after construction and shared per grid.
    """

    def __init__(self, grid):
        self.grid = grid
        self.lam_u = (_sine_eigenvalues(grid.nx, grid.hx, "interior")[:, None]
                      + _sine_eigenvalues(grid.ny, grid.hy, "reflect")[None, :])
        self.lam_w = (_sine_eigenvalues(grid.nx, grid.hx, "reflect")[:, None]
                      + _sine_eigenvalues(grid.ny, grid.hy, "interior")[None, :])

    def solve_u(self, rhs):
        t = scipy.fft.dst(rhs, type=1, axis=-2, norm="ortho")
        t = scipy.fft.dst(t, type=2, axis=-1, norm="ortho")
        t /= self.lam_u
        t = scipy.fft.idst(t, type=2, axis=-1, norm="ortho")
        return scipy.fft.idst(t, type=1, axis=-2, norm="ortho")

    def solve_w(self, rhs):
        t = scipy.fft.dst(rhs, type=2, axis=-2, norm="ortho")
        t = scipy.fft.dst(t, type=1, axis=-1, norm="ortho")
        t /= self.lam_w
        t = scipy.fft.idst(t, type=1, axis=-1, norm="ortho")
        return scipy.fft.idst(t, type=2, axis=-2, norm="ortho")


def component_solvers(grid):
    solver = _component_cache.get(grid)
    if solver is None:
        solver = _ComponentSolvers(grid)
        _component_cache[grid] = solver
    return solver


# batched first-difference helpers over the trailing two axes ----------------

def _grad_u(p, hx):
    """(..., nx, ny) -> pressure gradient on interior u-faces (..., nx-1, ny)."""
    return (p[..., 1:, :] - p[..., :-1, :]) / hx


def _grad_w(p, hy):
    return (p[..., :, 1:] - p[..., :, :-1]) / hy


def _div(iu, iw, hx, hy):
    """Divergence from interior face values (boundary faces are zero)."""
    return (np.diff(iu, axis=-2, prepend=0.0, append=0.0) / hx
            + np.diff(iw, axis=-1, prepend=0.0, append=0.0) / hy)


def _subtract_mean(p):
    p -= p.mean(axis=(-2, -1), keepdims=True)


class StokesSolution:
    """Velocity, zero-mean pressure, and the solve report."""

    __slots__ = ("velocity", "pressure", "report")

    def __init__(self, velocity, pressure, report):
        self.velocity = velocity
        self.pressure = pressure
        self.report = report


def solve_batch(force_u, force_w, gammas, grid, tol=DEFAULT_TOL):
    """Solve m independent Stokes problems stacked on a leading axis.

    force_u: (m, nx+1, ny), force_w: (m, nx, ny+1), gammas: (m,).  Returns
    (vel_u, vel_w, pressure, iterations, rel_residuals) with the same
    stacking; rel_residuals[c] is the achieved ‖∇·v‖/(1+‖f_c‖).
    """
    from .linsolve import LinearSolveReport  # noqa: F401  (kept close by)

    gammas = np.asarray(gammas, dtype=np.float64)
    if np.any(gammas <= 0):
        raise ValueError("stokes solve requires gamma > 0")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")

    comp = component_solvers(grid)
    hx, hy, m = grid.hx, grid.hy, force_u.shape[0]
    hw = hx * hy

    fu = force_u[:, 1:-1, :]
    fw = force_w[:, :, 1:-1]
    force_norms = np.sqrt(hw * ((force_u ** 2).sum(axis=(-2, -1))
                                + (force_w ** 2).sum(axis=(-2, -1))))
    # raw-residual thresholds realizing ‖div v‖_L2 ≤ tol·(1+‖f‖)
    thresh = gammas * tol * (1.0 + force_norms) / np.sqrt(hw)

    linv_fu = comp.solve_u(fu)
    linv_fw = comp.solve_w(fw)
    b = -_div(linv_fu, linv_fw, hx, hy)
    _subtract_mean(b)

    p = np.zeros_like(b)
    r = b.copy()
    rr = (r * r).sum(axis=(-2, -1))
    rnorm = np.sqrt(rr)
    active = rnorm > thresh
    d = r.copy()
    cap = 10 * (grid.nx + grid.ny)
    iters = 0
    while active.any():
        iters += 1
        if iters > cap:
            raise SolverError(
                "pressure Schur CG did not converge",
                iterations=cap, residual=float(rnorm.max()), tol=tol,
            )
        kd = -_div(comp.solve_u(_grad_u(d, hx)), comp.solve_w(_grad_w(d, hy)), hx, hy)
        dkd = (d * kd).sum(axis=(-2, -1))
        alpha = np.where(active & (dkd > 0), rr / np.where(dkd > 0, dkd, 1.0), 0.0)
        p += alpha[:, None, None] * d
        r -= alpha[:, None, None] * kd
        _subtract_mean(p)
        _subtract_mean(r)
        rr_new = (r * r).sum(axis=(-2, -1))
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        d = r + beta[:, None, None] * d
        rr = rr_new
        rnorm = np.sqrt(rr)
        active = active & (rnorm > thresh)

    gu = _grad_u(p, hx)
    gw = _grad_w(p, hy)
    iu = comp.solve_u(fu - gu) / gammas[:, None, None]
    iw = comp.solve_w(fw - gw) / gammas[:, None, None]
    vel_u = np.zeros((m, grid.nx + 1, grid.ny))
    vel_w = np.zeros((m, grid.nx, grid.ny + 1))
    vel_u[:, 1:-1, :] = iu
    vel_w[:, :, 1:-1] = iw
    rel = np.sqrt(hw) * rnorm / (gammas * (1.0 + force_norms))
    return vel_u, vel_w, p, iters, rel


def stokes_solve(force, gamma, tol=DEFAULT_TOL):
    """Solve one Stokes problem; see module docstring for guarantees."""
    from .linsolve import LinearSolveReport

    vel_u, vel_w, p, iters, rel = solve_batch(
        force.u[None], force.w[None], np.array([float(gamma)]), force.grid, tol)
    velocity = StaggeredVelocity(force.grid, vel_u[0], vel_w[0], check=False)
    pressure = ScalarField(force.grid, p[0], check=False)
    pressure.values -= mean(pressure)
    report = LinearSolveReport("uzawa_cg", iters, float(rel[0]))
    return StokesSolution(velocity, pressure, report)


def apply_inverse_stokes(force, tol=DEFAULT_TOL):
    """Velocity part of the unit-viscosity solve: A⁻¹ composed with the
    projection that discards the gradient part of the force."""
    return stokes_solve(force, 1.0, tol).velocity
