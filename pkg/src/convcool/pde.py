"""Time marchers: forward state, backward adjoint, and linearized state.

All three share the semi-implicit Euler pattern — advection explicit,
diffusion implicit — so every step costs one stencil sweep plus one fast
Helmholtz solve:

    (I − κ·dt·Δ_h) T^{i+1} = T^i − dt·advect(v^{i+1}, T^i).

The adjoint marcher is the exact algebraic transpose of the forward one with
respect to the discrete cost

    J_state = (α/2)‖DT^N‖² + (β/2)·dt·Σ_{i=1..N} ‖DT^i‖²,

namely (with H = I − κ·dt·Δ_h, using that advect(v, ·) is skew-adjoint for
discretely divergence-free v):

    H q^N = (α + β·dt)·DT^N,
    H q^i = q^{i+1} + dt·advect(v^{i+1}, q^{i+1}) + β·dt·DT^i,  i = N−1..1,

and no source at i = 0 (the quadrature puts no weight on t = 0).  Taking the
transpose — rather than re-discretizing the continuous adjoint — makes the
control gradient assembled downstream exact to round-off, which is what the
finite-difference verification demands.
"""

import warnings

import numpy as np

from .grid import ScalarField, StaggeredVelocity, advect, deviation
from .linsolve import HelmholtzOperator, helmholtz_solve


class Trajectory:
    """n_t + 1 cell-centered snapshots, entry i at time i·dt."""

    __slots__ = ("timegrid", "fields")

    def __init__(self, timegrid, fields):
        fields = list(fields)
        if len(fields) != timegrid.n_t + 1:
            raise ValueError(f"expected {timegrid.n_t + 1} snapshots, got {len(fields)}")
        g = fields[0].grid
        if any(f.grid != g for f in fields):
            raise ValueError("snapshots live on different grids")
        self.timegrid = timegrid
        self.fields = fields

    @property
    def grid(self):
        return self.fields[0].grid

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]


class ControlTrajectory:
    """n_t velocity fields; entry i drives the step from t_i to t_{i+1}
    (it is the control evaluated at the new time node t_{i+1})."""

    __slots__ = ("timegrid", "velocities")
    __array_ufunc__ = None  # keep numpy scalars from consuming the dunders

    def __init__(self, timegrid, velocities):
        velocities = list(velocities)
        if len(velocities) != timegrid.n_t:
            raise ValueError(f"expected {timegrid.n_t} velocities, got {len(velocities)}")
        g = velocities[0].grid
        if any(v.grid != g for v in velocities):
            raise ValueError("velocities live on different grids")
        self.timegrid = timegrid
        self.velocities = velocities

    @property
    def grid(self):
        return self.velocities[0].grid

    def __len__(self):
        return len(self.velocities)

    def __getitem__(self, i):
        return self.velocities[i]

    def copy(self):
        return ControlTrajectory(self.timegrid, [v.copy() for v in self.velocities])

    def __add__(self, other):
        return ControlTrajectory(self.timegrid,
                                 [a + b for a, b in zip(self.velocities, other.velocities)])

    def __sub__(self, other):
        return ControlTrajectory(self.timegrid,
                                 [a - b for a, b in zip(self.velocities, other.velocities)])

    def __mul__(self, c):
        return ControlTrajectory(self.timegrid, [v * c for v in self.velocities])

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid, timegrid):
        return cls(timegrid, [StaggeredVelocity.zeros(grid) for _ in range(timegrid.n_t)])

    def to_flat(self):
        """Concatenate all face values into one 1-D vector (for the
        accelerated fixed-point iteration and finite-difference probes)."""
        return np.concatenate([np.concatenate([v.u.ravel(), v.w.ravel()])
                               for v in self.velocities])

    @classmethod
    def from_flat(cls, grid, timegrid, vec):
        nu = (grid.nx + 1) * grid.ny
        nw = grid.nx * (grid.ny + 1)
        per = nu + nw
        if vec.shape != (per * timegrid.n_t,):
            raise ValueError("flat control vector has the wrong length")
        vels = []
        for i in range(timegrid.n_t):
            chunk = vec[i * per:(i + 1) * per]
            u = chunk[:nu].reshape(grid.nx + 1, grid.ny).copy()
            w = chunk[nu:].reshape(grid.nx, grid.ny + 1).copy()
            vels.append(StaggeredVelocity(grid, u, w, check=False))
        return cls(timegrid, vels)


def _max_face_speed(v):
    m = 0.0
    for vel in v.velocities:
        m = max(m, float(np.abs(vel.u).max()), float(np.abs(vel.w).max()))
    return m


def _check_cfl(v, timegrid):
    # the implicit diffusion half of the scheme keeps moderate advective CFL
    # numbers well-behaved; warn only far outside the validated regime
    g = v.grid
    speed = _max_face_speed(v)
    number = timegrid.dt * speed / min(g.hx, g.hy)
    if number > 5.0:
        warnings.warn(f"advective CFL number {number:.2f} > 5; the explicit "
                      "advection step may be inaccurate", stacklevel=3)


def forward_solve(v, T0, kappa):
    """March the state: (I − κdtΔ)T^{i+1} = T^i − dt·advect(v^{i+1}, T^i)."""
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if v.grid != T0.grid:
        raise ValueError("control and initial condition live on different grids")
    tg = v.timegrid
    _check_cfl(v, tg)
    op = HelmholtzOperator(T0.grid, kappa * tg.dt)
    fields = [T0.copy()]
    t = T0
    for i in range(tg.n_t):
        rhs = ScalarField(t.grid, t.values - tg.dt * advect(v[i], t).values, check=False)
        t, _ = helmholtz_solve(op, rhs)
        fields.append(t)
    return Trajectory(tg, fields)


def adjoint_solve(v, T, alpha, beta, kappa):
    """March the exact-transpose adjoint backward (see module docstring).

    Entry i of the result is q^i; the terminal condition sits at index n_t.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if v.grid != T.grid or v.timegrid != T.timegrid:
        raise ValueError("control and state trajectories are inconsistent")
    tg = v.timegrid
    op = HelmholtzOperator(T.grid, kappa * tg.dt)
    q, _ = helmholtz_solve(op, (alpha + beta * tg.dt) * deviation(T[tg.n_t]))
    fields = [q]
    for i in range(tg.n_t - 1, -1, -1):
        rhs = q.values + tg.dt * advect(v[i], q).values
        if beta != 0.0 and i >= 1:
            rhs = rhs + beta * tg.dt * deviation(T[i]).values
        q, _ = helmholtz_solve(op, ScalarField(T.grid, rhs, check=False))
        fields.append(q)
    fields.reverse()
    return Trajectory(tg, fields)


def linearized_solve(v, T, h, kappa):
    """March the state perturbation driven by a control direction h:
    z^0 = 0; (I − κdtΔ)z^{i+1} = z^i − dt·(advect(v^{i+1}, z^i)
    + advect(h^{i+1}, T^i))."""
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if v.timegrid != T.timegrid or v.timegrid != h.timegrid:
        raise ValueError("trajectories are inconsistent in time")
    tg = v.timegrid
    op = HelmholtzOperator(T.grid, kappa * tg.dt)
    z = ScalarField.zeros(T.grid)
    fields = [z]
    for i in range(tg.n_t):
        rhs = z.values - tg.dt * (advect(v[i], z).values + advect(h[i], T[i]).values)
        z, _ = helmholtz_solve(op, ScalarField(T.grid, rhs, check=False))
        fields.append(z)
    return Trajectory(tg, fields)
