"""Open-loop optimal control: Picard fixed-point iteration on the coupled
state/adjoint/Stokes optimality system, Anderson acceleration, and
coarse-to-fine mesh continuation.

The fixed-point map solves, for a frozen control v:

    T = forward_solve(v),  q = adjoint_solve(v, T),
    new v entry i = velocity of stokes_solve(face_force(q^{i+1}, T^i), γ).

The force pairs the adjoint at the new node with the state at the old node
of each step — exactly the stationarity condition of the discrete cost
(∂J/∂v^{i+1} = 0 given the marchers' chain rule), so a fixed point satisfies
the discrete first-order optimality system to solver precision, and the
directional derivative vanishes there to round-off rather than to O(dt).

All n_t Stokes problems of one sweep are independent and solved in a single
batched call; per-column CG coefficients keep the result identical to n_t
standalone solves regardless of batching.
"""

import logging
import time
import warnings

import numpy as np

from .errors import ConfigError, SolverError
from .grid import (GridSpec, ScalarField, StaggeredVelocity, TimeGrid,
                   face_force, prolong)
from .objective import evaluate
from .pde import ControlTrajectory, adjoint_solve, forward_solve
from .stokes import solve_batch

logger = logging.getLogger(__name__)

PICARD_TOL = 1e-5
ANDERSON_MEMORY = 5
SOLVER_MEMORY = 8
MAX_ITERATIONS = 200
COARSEST = 10


class ControlProblem:
    """Target discretization, physics, and cost weights for one optimal
    control solve.  ``ic`` is a callable (x, y) -> values used to sample the
    initial condition on every continuation level; a plain ScalarField is
    also accepted and block-averaged down to coarser levels.

    ``memory`` is the acceleration depth.  The solver default is 8: the
    fixed-point map is expansive for strongly-controlled discontinuous
    initial data (plain Picard diverges), and depth 5 can settle into a
    limit cycle near the fixed point there, while depth 8 converges all
    reference problems and is never slower on the smooth ones.
    """

    __slots__ = ("grid", "timegrid", "ic", "kappa", "alpha", "beta", "gamma",
                 "tol", "max_iterations", "stokes_tol", "memory")

    def __init__(self, grid, timegrid, ic, kappa, alpha, beta, gamma,
                 tol=PICARD_TOL, max_iterations=MAX_ITERATIONS, stokes_tol=1e-10,
                 memory=SOLVER_MEMORY):
        if kappa <= 0 or gamma <= 0:
            raise ConfigError(f"need kappa > 0 and gamma > 0, got {kappa}, {gamma}")
        if alpha < 0 or beta < 0:
            raise ConfigError(f"cost weights must be >= 0, got alpha={alpha}, beta={beta}")
        if tol <= 0:
            raise ConfigError(f"tol must be > 0, got {tol}")
        if memory < 1:
            raise ConfigError(f"memory depth must be >= 1, got {memory}")
        self.grid = grid
        self.timegrid = timegrid
        self.ic = ic
        self.kappa = float(kappa)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.gamma = float(gamma)
        self.tol = float(tol)
        self.max_iterations = int(max_iterations)
        self.stokes_tol = float(stokes_tol)
        self.memory = int(memory)

    def initial_condition(self, grid):
        """Sample (or coarsen) the initial condition on the given grid."""
        if isinstance(self.ic, ScalarField):
            field = self.ic
            if grid == field.grid:
                return field.copy()
            values = field.values
            nx, ny = field.grid.nx, field.grid.ny
            while (nx, ny) != (grid.nx, grid.ny):
                if nx % 2 or ny % 2 or nx < grid.nx or ny < grid.ny:
                    raise ConfigError(
                        f"cannot coarsen a {field.grid.nx}x{field.grid.ny} field "
                        f"to {grid.nx}x{grid.ny}")
                values = 0.25 * (values[0::2, 0::2] + values[1::2, 0::2]
                                 + values[0::2, 1::2] + values[1::2, 1::2])
                nx //= 2
                ny //= 2
            return ScalarField(grid, values, check=False)
        return ScalarField.from_vertex_average(grid, self.ic)


class PicardState:
    """Current iterate, its relative fixed-point residual, and the index."""

    __slots__ = ("v", "residual", "k")

    def __init__(self, v, residual, k):
        self.v = v
        self.residual = float(residual)
        self.k = int(k)


class OptimalControlResult:
    """Converged control with its state/adjoint, cost breakdown, and
    iteration diagnostics (finest-level count plus per-level history;
    ``aa_restarts`` counts stagnation-triggered acceleration restarts
    across all levels)."""

    __slots__ = ("v", "T", "q", "objective", "iterations", "residual_history",
                 "wall_time", "level_iterations", "aa_restarts")

    def __init__(self, v, T, q, objective, iterations, residual_history,
                 wall_time, level_iterations, aa_restarts=0):
        self.v = v
        self.T = T
        self.q = q
        self.objective = objective
        self.iterations = int(iterations)
        self.residual_history = list(residual_history)
        self.wall_time = float(wall_time)
        self.level_iterations = dict(level_iterations)
        self.aa_restarts = int(aa_restarts)


def picard_map(v_k, problem, T0=None):
    """One sweep of the fixed-point map G (see module docstring).

    ``T0`` defaults to the problem's initial condition sampled on v_k's grid
    (continuation levels pass their own sampling explicitly).
    """
    grid = v_k.grid
    tg = v_k.timegrid
    if T0 is None:
        T0 = problem.initial_condition(grid)
    T = forward_solve(v_k, T0, problem.kappa)
    q = adjoint_solve(v_k, T, problem.alpha, problem.beta, problem.kappa)
    fu = np.empty((tg.n_t, grid.nx + 1, grid.ny))
    fw = np.empty((tg.n_t, grid.nx, grid.ny + 1))
    for i in range(tg.n_t):
        f = face_force(q[i + 1], T[i])
        fu[i] = f.u
        fw[i] = f.w
    try:
        vel_u, vel_w, _, _, _ = solve_batch(
            fu, fw, np.full(tg.n_t, problem.gamma), grid, problem.stokes_tol)
    except SolverError as err:
        err.context.setdefault("stage", "picard_map")
        raise
    vels = [StaggeredVelocity(grid, vel_u[i], vel_w[i], check=False)
            for i in range(tg.n_t)]
    return ControlTrajectory(tg, vels)


class AndersonMemory:
    """Type-II Anderson extrapolation over flattened iterates.

    Keeps up to m most recent (Δx, Δg) pairs.  The mixing weights solve a
    least-squares problem over residual differences via QR; columns are
    dropped oldest-first while the triangular factor is ill-conditioned
    (ratio of extreme diagonal magnitudes above 1e12), and a fully singular
    system falls back to plain Picard, counted in ``fallbacks``.
    """

    __slots__ = ("m", "_prev_x", "_prev_g", "_dx", "_dg", "fallbacks")

    COND_LIMIT = 1e12

    def __init__(self, m=ANDERSON_MEMORY):
        self.m = int(m)
        self._prev_x = None
        self._prev_g = None
        self._dx = []
        self._dg = []
        self.fallbacks = 0

    def reset(self):
        self._prev_x = None
        self._prev_g = None
        self._dx.clear()
        self._dg.clear()

    def push(self, x, g):
        if self._prev_x is not None:
            self._dx.append(x - self._prev_x)
            self._dg.append(g - self._prev_g)
            if len(self._dx) > self.m:
                self._dx.pop(0)
                self._dg.pop(0)
        self._prev_x = x
        self._prev_g = g

    def mix(self, x, g):
        """Return the accelerated iterate for the pair (x, g(x))."""
        self.push(x, g)
        if not self._dx:
            return g.copy()
        f = g - x
        df = np.stack(self._dg, axis=1) - np.stack(self._dx, axis=1)
        dg = np.stack(self._dg, axis=1)
        while True:
            qf, rf = np.linalg.qr(df)
            diag = np.abs(np.diag(rf))
            if diag.min() > 0 and diag.max() / diag.min() <= self.COND_LIMIT:
                break
            if df.shape[1] == 1:
                self.fallbacks += 1
                return g.copy()
            df = df[:, 1:]
            dg = dg[:, 1:]
        theta = np.linalg.solve(rf, qf.T @ f)
        return g - dg @ theta


def anderson_step(mem, v_k, g_of_v_k):
    """Accelerated update from the iterate v_k and its map value G(v_k);
    with empty memory this is the plain Picard step."""
    tg = v_k.timegrid
    grid = v_k.grid
    x = v_k.to_flat()
    g = g_of_v_k.to_flat()
    return ControlTrajectory.from_flat(grid, tg, mem.mix(x, g))


def _traj_scale(grid, tg):
    """Factor turning a flat Euclidean norm into the L²(0,t_f; L²) norm."""
    return np.sqrt(tg.dt * grid.hx * grid.hy)


def _aa_picard(problem, grid, tg, v0, T0, level_tag):
    """Run AA-Picard on one mesh level.

    Returns ``(v, history, restarts, converged)``; when the iteration budget
    runs out, ``v`` is the Picard image of the best iterate seen rather than
    the last one, so the caller still gets the most trustworthy control.

    Two stability guards wrap the accelerated update: a one-step guard (a
    residual growing more than 10x discards the mixed step in favor of the
    plain Picard point) and a stagnation guard (a residual more than 5x the
    best seen, with no recent improvement, restarts the memory from the best
    iterate's Picard image).  Both only ever fire when acceleration is
    misbehaving; the map itself can be expansive, so plain Picard is a
    recovery step, not a fallback iteration.
    """
    scale = _traj_scale(grid, tg)
    mem = AndersonMemory(problem.memory)
    state = PicardState(v0, np.inf, 0)
    x = v0.to_flat()
    history = []
    best_res, best_g, best_k = np.inf, None, 0
    restarts = 0
    for k in range(1, problem.max_iterations + 1):
        gv = picard_map(state.v, problem, T0)
        g = gv.to_flat()
        res = scale * float(np.linalg.norm(g - x)) / (1.0 + scale * float(np.linalg.norm(x)))
        prev_res = state.residual
        state = PicardState(gv, res, k)
        history.append(res)
        logger.info("%s iter %d residual %.3e", level_tag, k, res)
        if res <= problem.tol:
            return gv, history, restarts, True
        if res < best_res:
            best_res, best_g, best_k = res, g.copy(), k
        if res > 5.0 * best_res and k >= best_k + 3:
            # stagnation guard: acceleration wandered away from its best
            # point; restart the memory there
            logger.info("%s iter %d residual %.1fx above best; restarting "
                        "acceleration from the best iterate", level_tag, k,
                        res / best_res)
            restarts += 1
            mem.reset()
            x_new = best_g.copy()
            best_k = k
        elif res > 10.0 * prev_res:
            # one-step safeguard: discard the mixed step, take plain Picard
            logger.info("%s iter %d residual grew %.1fx; resetting acceleration",
                        level_tag, k, res / prev_res)
            mem.reset()
            mem.push(x, g)
            x_new = g.copy()
        else:
            x_new = mem.mix(x, g)
        state = PicardState(ControlTrajectory.from_flat(grid, tg, x_new), res, k)
        x = x_new
    return (ControlTrajectory.from_flat(grid, tg, best_g), history, restarts,
            False)


def continuation_levels(grid, timegrid):
    """Mesh ladder from the coarsest level up to the target; every count
    must be COARSEST times a power of two, refined jointly."""
    def doublings(n, what):
        k, m = 0, COARSEST
        while m < n:
            m *= 2
            k += 1
        if m != n:
            raise ConfigError(f"target {what}={n} is not {COARSEST}x2^k")
        return k

    kx = doublings(grid.nx, "nx")
    ky = doublings(grid.ny, "ny")
    kt = doublings(timegrid.n_t, "n_t")
    if not (kx == ky == kt):
        raise ConfigError(
            f"continuation refines all counts jointly; got "
            f"(nx, ny, n_t) = ({grid.nx}, {grid.ny}, {timegrid.n_t})")
    return [(GridSpec(COARSEST * 2 ** j, COARSEST * 2 ** j),
             TimeGrid(timegrid.t_f, COARSEST * 2 ** j)) for j in range(kx + 1)]


def solve_optimal(problem):
    """AA-Picard with mesh continuation from (10, 10, 10) to the target.

    Each level starts from the previous level's control prolonged in space
    and time (zero on the coarsest) and iterates to the fixed-point
    tolerance.  Returns the finest-level result; per-level iteration counts
    are kept in ``level_iterations``.

    The tolerance is a contract for the target level only.  A coarser level
    that exhausts its iteration budget merely delivers a rougher warm start:
    the solve warns and refines from that level's best iterate, and only a
    non-converged target level raises :class:`SolverError`.
    """
    t_start = time.perf_counter()
    levels = continuation_levels(problem.grid, problem.timegrid)
    v = ControlTrajectory.zeros(*levels[0])
    level_iterations = {}
    history = []
    total_restarts = 0
    for idx, (grid, tg) in enumerate(levels):
        if idx > 0:
            v = prolong(v, grid, tg)
        tag = f"level ({grid.nx},{grid.ny},{tg.n_t})"
        T0 = problem.initial_condition(grid)
        v, history, restarts, converged = _aa_picard(problem, grid, tg, v, T0,
                                                     tag)
        level_iterations[(grid.nx, grid.ny, tg.n_t)] = len(history)
        total_restarts += restarts
        if not converged:
            if idx == len(levels) - 1:
                raise SolverError(
                    "fixed-point iteration did not converge",
                    level=tag, iterations=problem.max_iterations,
                    residual=history[-1], best_residual=min(history),
                    tol=problem.tol,
                )
            warnings.warn(
                f"continuation {tag} stopped at residual {min(history):.3e} "
                f"after {len(history)} iterations (tol {problem.tol:.1e}); "
                f"refining from its best iterate", UserWarning)
    grid, tg = levels[-1]
    T0 = problem.initial_condition(grid)
    T = forward_solve(v, T0, problem.kappa)
    q = adjoint_solve(v, T, problem.alpha, problem.beta, problem.kappa)
    objective = evaluate(T, v, problem.alpha, problem.beta, problem.gamma)
    return OptimalControlResult(
        v, T, q, objective, len(history), history,
        time.perf_counter() - t_start, level_iterations, total_restarts)
