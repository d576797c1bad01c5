"""Cost functional and its first and second directional derivatives.

The three parts are

    J = (α/2)‖DT(t_f)‖² + (β/2)∫‖DT‖² dt + (γ/2)∫(Av, v) dt,

with D the mean-free deviation and (Av, v) the no-slip gradient energy of
the MAC velocity.  Time integrals use the right-endpoint rectangle rule
(nodes 1..n_t), matching the implicit-Euler state locations; t = 0 carries
no weight.

The derivative and Hessian formulas below pair the adjoint/state snapshots
exactly as the chain rule of the discrete marchers dictates — the force uses
the adjoint at the new node and the state at the old node of each step — so
for discretely divergence-free controls and directions both are exact
derivatives of the discrete J, not O(dt) approximations.
"""

import numpy as np

from .grid import (advect, deviation, divergence, face_force, grad_inner,
                   grad_seminorm_sq, inner, norm_l2, resample_to_nodes,
                   vel_inner, vel_norm_l2)
from .pde import linearized_solve


class ObjectiveBreakdown:
    """Cost parts plus the trajectory-wide velocity diagnostics
    max_i ‖∇·v^i‖₂ and max_i ‖v^i‖₂."""

    __slots__ = ("j_total", "j_alpha", "j_beta", "j_gamma", "max_div", "max_vel")

    def __init__(self, j_alpha, j_beta, j_gamma, max_div, max_vel):
        self.j_alpha = float(j_alpha)
        self.j_beta = float(j_beta)
        self.j_gamma = float(j_gamma)
        self.j_total = self.j_alpha + self.j_beta + self.j_gamma
        self.max_div = float(max_div)
        self.max_vel = float(max_vel)

    def __repr__(self):
        return (f"ObjectiveBreakdown(j_total={self.j_total:.6g}, "
                f"j_alpha={self.j_alpha:.6g}, j_beta={self.j_beta:.6g}, "
                f"j_gamma={self.j_gamma:.6g}, max_div={self.max_div:.3g}, "
                f"max_vel={self.max_vel:.3g})")


def evaluate(T, v, alpha, beta, gamma):
    """Cost of a state/control pair (see module docstring for the parts)."""
    if T.timegrid != v.timegrid:
        raise ValueError("state and control trajectories are inconsistent in time")
    dt = T.timegrid.dt
    n = T.timegrid.n_t

    j_alpha = 0.5 * alpha * norm_l2(deviation(T[n])) ** 2
    j_beta = 0.5 * beta * dt * sum(norm_l2(deviation(T[i])) ** 2 for i in range(1, n + 1))
    j_gamma = 0.0
    max_div = 0.0
    max_vel = 0.0
    for vel in v.velocities:
        j_gamma += grad_seminorm_sq(vel)
        max_div = max(max_div, norm_l2(divergence(vel)))
        max_vel = max(max_vel, vel_norm_l2(vel))
    j_gamma *= 0.5 * gamma * dt
    return ObjectiveBreakdown(j_alpha, j_beta, j_gamma, max_div, max_vel)


def node_dev_norm_sq(T):
    """Squared deviation norm measured on grid vertices: cell values are
    interpolated to the (nx+1)² nodes and summed with uniform weight
    hx·hy, the domain measure taken as exactly 1 for the mean."""
    g = T.grid
    f = resample_to_nodes(T)
    d = f - g.hx * g.hy * f.sum()
    return g.hx * g.hy * float((d * d).sum())


def evaluate_nodal(T, v, alpha, beta, gamma):
    """Cost measured with vertex-based norms — the convention used for
    reported summary numbers.

    Differences from ``evaluate``: deviation norms are taken over grid
    vertices (interpolated, uniform weights, unit domain measure), the time
    quadrature includes both endpoints (dt·Σ_{i=0..n_t}), and max_vel uses
    the vertex-cell energy sum (each cell counts all four of its face
    values), which equals √2 times the face-centered L² norm.  The control
    energy term, max_div, and the terminal-time part of j_alpha keep the
    face/cell-based forms.
    """
    if T.timegrid != v.timegrid:
        raise ValueError("state and control trajectories are inconsistent in time")
    dt = T.timegrid.dt
    n = T.timegrid.n_t

    j_alpha = 0.5 * alpha * node_dev_norm_sq(T[n])
    j_beta = 0.5 * beta * dt * sum(node_dev_norm_sq(T[i]) for i in range(n + 1))
    j_gamma = 0.0
    max_div = 0.0
    max_vel = 0.0
    for vel in v.velocities:
        j_gamma += grad_seminorm_sq(vel)
        max_div = max(max_div, norm_l2(divergence(vel)))
        max_vel = max(max_vel, vel_norm_l2(vel))
    j_gamma *= 0.5 * gamma * dt
    return ObjectiveBreakdown(j_alpha, j_beta, j_gamma, max_div,
                              np.sqrt(2.0) * max_vel)


def directional_derivative(v, T, q, h, gamma):
    """Gâteaux derivative of J at control v in direction h, assembled from
    the forward state T and adjoint q already computed at v:

        dt·Σ_{i=0..n_t−1} [ γ·(∇v^{i+1}, ∇h^{i+1}) − ⟨q^{i+1}∇T^i, h^{i+1}⟩ ].
    """
    tg = v.timegrid
    if T.timegrid != tg or q.timegrid != tg or h.timegrid != tg:
        raise ValueError("trajectories are inconsistent in time")
    acc = 0.0
    for i in range(tg.n_t):
        acc += gamma * grad_inner(v[i], h[i])
        acc -= vel_inner(face_force(q[i + 1], T[i]), h[i])
    return tg.dt * acc


def hessian_quadratic_form(v, T, q, h, alpha, beta, gamma, kappa):
    """Second derivative J''(v)·(h, h), using the linearized state z driven
    by h:

        α‖Dz^{n_t}‖² + β·dt·Σ‖Dz^i‖² + 2·dt·Σ_i ⟨z^i, advect(h^{i+1}, q^{i+1})⟩
        + γ·dt·Σ|h^i|²_{∇}.

    Exact for discretely divergence-free h (the cross term uses the
    skew-adjointness of advection in h to move h·∇ off the adjoint).
    """
    tg = v.timegrid
    z = linearized_solve(v, T, h, kappa)
    n = tg.n_t
    dt = tg.dt

    form = alpha * norm_l2(deviation(z[n])) ** 2
    form += beta * dt * sum(norm_l2(deviation(z[i])) ** 2 for i in range(1, n + 1))
    cross = 0.0
    for i in range(1, n):  # z^0 = 0 contributes nothing
        cross += inner(z[i], advect(h[i], q[i + 1]))
    form += 2.0 * dt * cross
    form += gamma * dt * sum(grad_seminorm_sq(h[i]) for i in range(n))
    return form
