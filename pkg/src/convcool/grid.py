"""Staggered-grid data model on the unit square and the discrete operators
shared by every solver.

The layout is the classic MAC arrangement::

        w[i,j+1]
      +----▲----+
      |         |
  u[i,j]  T[i,j]  u[i+1,j]      T, q, p, ... at cell centers  (nx, ny)
      ~----▲----+               u on vertical faces           (nx+1, ny)
        w[i,j]                  w on horizontal faces         (nx, ny+1)

Cell centers sit at ((i+1/2)·hx, (j+1/2)·hy) on Ω = (0,1)².  Boundary-normal
faces (u on x = 0, 1 and w on y = 0, 1) carry exactly 0: the normal part of
the no-slip condition is built into the data type.

Scalar boundary conditions are homogeneous Neumann, realized with mirror
ghost cells; tangential velocity walls use reflection ghosts (ghost =
−interior) so that the velocity Laplacians see a second-order no-slip wall.
"""

import numpy as np

from . import kernels


def _as_float_array(a, shape, name):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


class GridSpec:
    """Uniform cell counts and spacings for Ω = (0,1)²."""

    __slots__ = ("nx", "ny", "hx", "hy")

    def __init__(self, nx, ny):
        nx, ny = int(nx), int(ny)
        if nx < 2 or ny < 2:
            raise ValueError(f"need at least 2 cells per direction, got {nx}x{ny}")
        self.nx = nx
        self.ny = ny
        self.hx = 1.0 / nx
        self.hy = 1.0 / ny

    def __eq__(self, other):
        return isinstance(other, GridSpec) and (self.nx, self.ny) == (other.nx, other.ny)

    def __hash__(self):
        return hash((self.nx, self.ny))

    def __repr__(self):
        return f"GridSpec({self.nx}, {self.ny})"

    def cell_x(self):
        """x coordinates of cell centers, shape (nx,)."""
        return (np.arange(self.nx) + 0.5) * self.hx

    def cell_y(self):
        return (np.arange(self.ny) + 0.5) * self.hy

    def cell_mesh(self):
        """Center coordinate arrays broadcastable to (nx, ny)."""
        return self.cell_x()[:, None], self.cell_y()[None, :]


class ScalarField:
    """Cell-centered real field (temperature, adjoint, pressure, ...)."""

    __slots__ = ("grid", "values")
    __array_ufunc__ = None  # keep numpy scalars from consuming the dunders

    def __init__(self, grid, values, check=True):
        self.grid = grid
        if check:
            values = _as_float_array(values, (grid.nx, grid.ny), "ScalarField")
        self.values = values

    def copy(self):
        return ScalarField(self.grid, self.values.copy(), check=False)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + other.values, check=False)

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - other.values, check=False)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * float(c), check=False)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx, grid.ny)), check=False)

    @classmethod
    def from_function(cls, grid, fn):
        x, y = grid.cell_mesh()
        return cls(grid, np.asarray(fn(x, y), dtype=np.float64) + np.zeros((grid.nx, grid.ny)))

    @classmethod
    def from_vertex_average(cls, grid, fn):
        """Sample fn on the (nx+1)×(ny+1) grid vertices and average each
        cell's four corners.  Second-order for smooth data, and the sampling
        convention used for initial data: discontinuous sources keep the
        values their level sets take exactly on grid lines."""
        x = np.linspace(0.0, 1.0, grid.nx + 1)[:, None]
        y = np.linspace(0.0, 1.0, grid.ny + 1)[None, :]
        v = np.asarray(fn(x, y), dtype=np.float64) + np.zeros((grid.nx + 1, grid.ny + 1))
        return cls(grid, 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:]),
                   check=False)


class StaggeredVelocity:
    """MAC face-centered vector field; boundary-normal faces are exactly 0."""

    __slots__ = ("grid", "u", "w")
    __array_ufunc__ = None  # keep numpy scalars from consuming the dunders

    def __init__(self, grid, u, w, check=True):
        self.grid = grid
        if check:
            u = _as_float_array(u, (grid.nx + 1, grid.ny), "StaggeredVelocity.u")
            w = _as_float_array(w, (grid.nx, grid.ny + 1), "StaggeredVelocity.w")
            if (np.any(u[0, :] != 0.0) or np.any(u[-1, :] != 0.0)
                    or np.any(w[:, 0] != 0.0) or np.any(w[:, -1] != 0.0)):
                raise ValueError("boundary-normal faces must be exactly 0")
        self.u = u
        self.w = w

    def copy(self):
        return StaggeredVelocity(self.grid, self.u.copy(), self.w.copy(), check=False)

    def __add__(self, other):
        return StaggeredVelocity(self.grid, self.u + other.u, self.w + other.w, check=False)

    def __sub__(self, other):
        return StaggeredVelocity(self.grid, self.u - other.u, self.w - other.w, check=False)

    def __mul__(self, c):
        c = float(c)
        return StaggeredVelocity(self.grid, self.u * c, self.w * c, check=False)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)),
                   np.zeros((grid.nx, grid.ny + 1)), check=False)

    @classmethod
    def from_stream(cls, grid, psi):
        """Discrete curl of a nodal stream function.

        psi has shape (nx+1, ny+1) on grid nodes; u = δy ψ, w = −δx ψ.  The
        MAC divergence of the result is zero to round-off, and zero boundary
        rows/columns of psi give zero boundary-normal faces.
        """
        psi = np.asarray(psi, dtype=np.float64)
        if psi.shape != (grid.nx + 1, grid.ny + 1):
            raise ValueError("stream function must be nodal, shape (nx+1, ny+1)")
        u = (psi[:, 1:] - psi[:, :-1]) / grid.hy
        w = -(psi[1:, :] - psi[:-1, :]) / grid.hx
        return cls(grid, u, w)


class TimeGrid:
    """Uniform time grid on [0, t_f]; node i is time i·dt, i = 0..n_t."""

    __slots__ = ("t_f", "n_t", "dt")

    def __init__(self, t_f, n_t):
        t_f = float(t_f)
        n_t = int(n_t)
        if t_f <= 0 or n_t < 1:
            raise ValueError(f"need t_f > 0 and n_t >= 1, got {t_f}, {n_t}")
        self.t_f = t_f
        self.n_t = n_t
        self.dt = t_f / n_t

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and (self.t_f, self.n_t) == (other.t_f, other.n_t)

    def __hash__(self):
        return hash((self.t_f, self.n_t))

    def __repr__(self):
        return f"TimeGrid(t_f={self.t_f}, n_t={self.n_t})"

    def times(self):
        return np.linspace(0.0, self.t_f, self.n_t + 1)


# ---------------------------------------------------------------------------
# field operations
# ---------------------------------------------------------------------------

def mean(f):
    """Domain average hx·hy·Σ values (|Ω| = 1); exact midpoint quadrature."""
    return f.grid.hx * f.grid.hy * float(f.values.sum())


def deviation(f):
    """DT = T − ⟨T⟩; idempotent mean-free projection."""
    return ScalarField(f.grid, f.values - mean(f), check=False)


def laplacian_neumann(f, coeff=1.0):
    """coeff·Δ_h f with mirror ghosts (homogeneous Neumann)."""
    out = kernels.lap_neumann(f.values, f.grid.hx, f.grid.hy)
    if coeff != 1.0:
        out *= coeff
    return ScalarField(f.grid, out, check=False)


def divergence(vel):
    """Cell-centered ∂u/∂x + ∂w/∂y from MAC face differences."""
    return ScalarField(vel.grid,
                       kernels.divergence(vel.u, vel.w, vel.grid.hx, vel.grid.hy),
                       check=False)


def advect(vel, f):
    """Cell-centered v·∇f (see kernel docstring for the face sampling)."""
    if vel.grid != f.grid:
        raise ValueError("advect: velocity and scalar live on different grids")
    return ScalarField(f.grid,
                       kernels.advect(vel.u, vel.w, f.values, f.grid.hx, f.grid.hy),
                       check=False)


def face_force(q, T):
    """MAC body force q·∇T (central difference of T across each interior
    face times the two-cell average of q)."""
    if q.grid != T.grid:
        raise ValueError("face_force: fields live on different grids")
    fu, fw = kernels.face_force(q.values, T.values, T.grid.hx, T.grid.hy)
    return StaggeredVelocity(T.grid, fu, fw, check=False)


def grad_to_faces(p):
    """Pressure-gradient companion of divergence (−divᵀ); zero boundary rows."""
    gu, gw = kernels.grad_to_faces(p.values, p.grid.hx, p.grid.hy)
    return StaggeredVelocity(p.grid, gu, gw, check=False)


def velocity_laplacian(vel):
    """Componentwise vector Laplacian with no-slip walls (Dirichlet in the
    normal direction, reflection ghosts tangentially); boundary-normal faces
    of the result are 0."""
    g = vel.grid
    return StaggeredVelocity(g, kernels.lap_u(vel.u, g.hx, g.hy),
                             kernels.lap_w(vel.w, g.hx, g.hy), check=False)


# ---------------------------------------------------------------------------
# inner products and norms (all with the uniform hx·hy weight)
# ---------------------------------------------------------------------------

def inner(f, g):
    return f.grid.hx * f.grid.hy * float(np.dot(f.values.ravel(), g.values.ravel()))


def norm_l2(f):
    return float(np.sqrt(f.grid.hx * f.grid.hy) * np.linalg.norm(f.values))


def vel_inner(a, b):
    hw = a.grid.hx * a.grid.hy
    return hw * (float(np.dot(a.u.ravel(), b.u.ravel()))
                 + float(np.dot(a.w.ravel(), b.w.ravel())))


def vel_norm_l2(a):
    return float(np.sqrt(max(vel_inner(a, a), 0.0)))


def grad_seminorm_sq(vel, wall_ghosts=True):
    """Squared discrete gradient seminorm of a MAC velocity.

    With ``wall_ghosts=True`` this is the no-slip energy ⟨−Δ_h v, v⟩ — the
    quadratic form of :func:`velocity_laplacian`, including the wall
    half-link terms that encode the tangential no-slip condition.  This is
    the form the control cost and the optimality system share.

    With ``wall_ghosts=False`` only differences of stored face values enter,
    so constant-valued face arrays give exactly 0.
    """
    g = vel.grid
    hw = g.hx * g.hy
    u, w = vel.u, vel.w
    # interior links, both variants
    s = float(np.sum(((u[1:, :] - u[:-1, :]) / g.hx) ** 2))
    s += float(np.sum(((u[:, 1:] - u[:, :-1]) / g.hy) ** 2))
    s += float(np.sum(((w[:, 1:] - w[:, :-1]) / g.hy) ** 2))
    s += float(np.sum(((w[1:, :] - w[:-1, :]) / g.hx) ** 2))
    if wall_ghosts:
        # wall half-links: reflection ghost = −interior contributes 2·v²/h²
        s += 2.0 * float(np.sum(u[:, 0] ** 2) + np.sum(u[:, -1] ** 2)) / g.hy ** 2
        s += 2.0 * float(np.sum(w[0, :] ** 2) + np.sum(w[-1, :] ** 2)) / g.hx ** 2
    return hw * s


def grad_inner(a, b, wall_ghosts=True):
    """Bilinear form of :func:`grad_seminorm_sq`: sums products of matching
    face differences (plus the wall half-link products when enabled)."""
    g = a.grid
    hw = g.hx * g.hy
    s = float(np.sum((a.u[1:, :] - a.u[:-1, :]) * (b.u[1:, :] - b.u[:-1, :]))) / g.hx ** 2
    s += float(np.sum((a.u[:, 1:] - a.u[:, :-1]) * (b.u[:, 1:] - b.u[:, :-1]))) / g.hy ** 2
    s += float(np.sum((a.w[:, 1:] - a.w[:, :-1]) * (b.w[:, 1:] - b.w[:, :-1]))) / g.hy ** 2
    s += float(np.sum((a.w[1:, :] - a.w[:-1, :]) * (b.w[1:, :] - b.w[:-1, :]))) / g.hx ** 2
    if wall_ghosts:
        s += 2.0 * float(np.sum(a.u[:, 0] * b.u[:, 0]) + np.sum(a.u[:, -1] * b.u[:, -1])) / g.hy ** 2
        s += 2.0 * float(np.sum(a.w[0, :] * b.w[0, :]) + np.sum(a.w[-1, :] * b.w[-1, :])) / g.hx ** 2
    return hw * s


def scalar_grad_seminorm_sq(f):
    """Squared gradient seminorm of a cell-centered field (mirror ghosts make
    wall links vanish, so only interior center differences enter)."""
    g = f.grid
    v = f.values
    s = float(np.sum(((v[1:, :] - v[:-1, :]) / g.hx) ** 2))
    s += float(np.sum(((v[:, 1:] - v[:, :-1]) / g.hy) ** 2))
    return g.hx * g.hy * s


def resample_to_nodes(f):
    """Cell values interpolated to the (nx+1, ny+1) grid vertices: each node
    averages its surrounding cells, with edge replication so boundary nodes
    average the adjacent row/column of cells (plain ndarray result)."""
    padded = np.pad(f.values, 1, mode="edge")
    return 0.25 * (padded[:-1, :-1] + padded[1:, :-1]
                   + padded[:-1, 1:] + padded[1:, 1:])


# ---------------------------------------------------------------------------
# prolongation (coarse -> fine, each resolution doubled)
# ---------------------------------------------------------------------------

def _prolong_centers_1d(a, axis):
    """Double a cell-centered axis with 3:1 linear weights and edge ghosts."""
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    pad = np.concatenate([a[:1], a, a[-1:]], axis=0)  # edge ghosts
    out = np.empty((2 * n,) + a.shape[1:], dtype=a.dtype)
    out[0::2] = 0.25 * pad[:-2] + 0.75 * pad[1:-1]
    out[1::2] = 0.75 * pad[1:-1] + 0.25 * pad[2:]
    # moveaxis returns a strided view; the stencil kernels need C layout
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def _prolong_nodes_1d(a, axis):
    """Double a face/node axis: even fine entries copy coarse nodes, odd ones
    are midpoints."""
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    out = np.empty((2 * n - 1,) + a.shape[1:], dtype=a.dtype)
    out[0::2] = a
    out[1::2] = 0.5 * (a[:-1] + a[1:])
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def _check_doubling(fine, coarse, what):
    if fine != 2 * coarse:
        raise ValueError(f"prolong: fine {what} must be exactly double "
                         f"(coarse {coarse}, fine {fine})")


def prolong_scalar(f, fine_grid):
    _check_doubling(fine_grid.nx, f.grid.nx, "nx")
    _check_doubling(fine_grid.ny, f.grid.ny, "ny")
    v = _prolong_centers_1d(_prolong_centers_1d(f.values, 0), 1)
    return ScalarField(fine_grid, v, check=False)


def prolong_velocity(vel, fine_grid):
    _check_doubling(fine_grid.nx, vel.grid.nx, "nx")
    _check_doubling(fine_grid.ny, vel.grid.ny, "ny")
    u = _prolong_centers_1d(_prolong_nodes_1d(vel.u, 0), 1)
    w = _prolong_nodes_1d(_prolong_centers_1d(vel.w, 0), 1)
    u[0, :] = 0.0
    u[-1, :] = 0.0
    w[:, 0] = 0.0
    w[:, -1] = 0.0
    return StaggeredVelocity(fine_grid, u, w, check=False)


def prolong(obj, fine_grid, fine_timegrid=None):
    """Bilinear (space) / linear (time) prolongation onto a doubled grid.

    Accepts a ScalarField, a StaggeredVelocity, or the trajectory types from
    :mod:`convcool.pde` (each field is prolonged in space, then the sequence
    is linearly interpolated onto the doubled time grid).
    """
    from . import pde  # local import: pde builds on grid

    if isinstance(obj, ScalarField):
        return prolong_scalar(obj, fine_grid)
    if isinstance(obj, StaggeredVelocity):
        return prolong_velocity(obj, fine_grid)
    if isinstance(obj, pde.Trajectory):
        if fine_timegrid is None:
            raise ValueError("prolonging a trajectory needs the fine time grid")
        _check_doubling(fine_timegrid.n_t, obj.timegrid.n_t, "n_t")
        coarse = [prolong_scalar(f, fine_grid) for f in obj.fields]
        fields = [coarse[0]]
        for i in range(obj.timegrid.n_t):
            fields.append(0.5 * (coarse[i] + coarse[i + 1]))
            fields.append(coarse[i + 1])
        return pde.Trajectory(fine_timegrid, fields)
    if isinstance(obj, pde.ControlTrajectory):
        if fine_timegrid is None:
            raise ValueError("prolonging a trajectory needs the fine time grid")
        _check_doubling(fine_timegrid.n_t, obj.timegrid.n_t, "n_t")
        coarse = [prolong_velocity(v, fine_grid) for v in obj.velocities]
        vels = []
        for j in range(fine_timegrid.n_t):
            # fine entry j acts at node time (j+1)·dt_f = (j+1)/2 coarse steps
            if j % 2 == 1:
                vels.append(coarse[(j - 1) // 2].copy())
            elif j == 0:
                vels.append(coarse[0].copy())  # before the first coarse node
            else:
                vels.append(0.5 * (coarse[j // 2 - 1] + coarse[j // 2]))
        return pde.ControlTrajectory(fine_timegrid, vels)
    raise TypeError(f"cannot prolong {type(obj).__name__}")
