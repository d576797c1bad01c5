"""Shared helpers: seeded random divergence-free fields and controls."""

import numpy as np

from convcool import ControlTrajectory, StaggeredVelocity
from convcool.grid import vel_norm_l2


def random_divfree(grid, rng, scale=1.0):
    """Exactly divergence-free MAC field from a random nodal stream function
    with a zero boundary ring, normalized to the given L2 size."""
    psi = np.zeros((grid.nx + 1, grid.ny + 1))
    psi[1:-1, 1:-1] = rng.standard_normal((grid.nx - 1, grid.ny - 1))
    vel = StaggeredVelocity.from_stream(grid, psi)
    return vel * (scale / max(vel_norm_l2(vel), 1e-300))


def random_divfree_control(grid, timegrid, rng, scale=1.0):
    return ControlTrajectory(timegrid, [random_divfree(grid, rng, scale)
                                        for _ in range(timegrid.n_t)])
