"""Pure-numpy stencil kernels (fallback backend).

Array layout convention used throughout the package: index [i, j] with i along
x and j along y.  Cell-centered arrays are (nx, ny); the x-velocity u lives on
vertical faces, shape (nx+1, ny); the y-velocity w lives on horizontal faces,
shape (nx, ny+1).  Boundary-normal faces (u[0], u[nx], w[:,0], w[:,ny]) hold
the no-slip normal value 0.

All kernels are pure: fresh output arrays, inputs untouched.  The compiled
Cython twin in ``_stencils`` implements the same signatures.
"""

import numpy as np

BACKEND = "numpy"


def lap_neumann(f, hx, hy):
    """5-point Laplacian of a cell-centered field with mirror ghost cells.

    Mirror ghosts (ghost = adjacent interior value) realize the homogeneous
    Neumann condition: the boundary-normal difference vanishes.
    """
    out = np.empty_like(f)
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)

    out[1:-1, :] = (f[2:, :] - 2.0 * f[1:-1, :] + f[:-2, :]) * ihx2
    out[0, :] = (f[1, :] - f[0, :]) * ihx2
    out[-1, :] = (f[-2, :] - f[-1, :]) * ihx2

    out[:, 1:-1] += (f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]) * ihy2
    out[:, 0] += (f[:, 1] - f[:, 0]) * ihy2
    out[:, -1] += (f[:, -2] - f[:, -1]) * ihy2
    return out


def divergence(u, w, hx, hy):
    """Cell-centered divergence from MAC face differences."""
    return (u[1:, :] - u[:-1, :]) / hx + (w[:, 1:] - w[:, :-1]) / hy


def advect(u, w, f, hx, hy):
    """Cell-centered v·∇f in advective form.

    The gradient of f is taken by central differences of neighboring cell
    centers, evaluated at faces; each face gradient is multiplied by the face
    velocity and the products are averaged back to centers.  Mirror ghosts
    for f make the boundary-normal gradient zero (where u is zero anyway).
    """
    nx, ny = f.shape
    pu = np.zeros((nx + 1, ny), dtype=f.dtype)
    pu[1:-1, :] = u[1:-1, :] * ((f[1:, :] - f[:-1, :]) / hx)
    out = 0.5 * (pu[:-1, :] + pu[1:, :])

    pw = np.zeros((nx, ny + 1), dtype=f.dtype)
    pw[:, 1:-1] = w[:, 1:-1] * ((f[:, 1:] - f[:, :-1]) / hy)
    out += 0.5 * (pw[:, :-1] + pw[:, 1:])
    return out


def face_force(q, t, hx, hy):
    """MAC body force q·∇t: face-central difference of t times two-cell
    average of q; boundary-normal faces are 0."""
    nx, ny = t.shape
    fu = np.zeros((nx + 1, ny), dtype=t.dtype)
    fu[1:-1, :] = ((t[1:, :] - t[:-1, :]) / hx) * (0.5 * (q[1:, :] + q[:-1, :]))
    fw = np.zeros((nx, ny + 1), dtype=t.dtype)
    fw[:, 1:-1] = ((t[:, 1:] - t[:, :-1]) / hy) * (0.5 * (q[:, 1:] + q[:, :-1]))
    return fu, fw


def grad_to_faces(p, hx, hy):
    """Cell-centered p to face gradient (zero on boundary-normal faces).

    This is minus the transpose of ``divergence`` under the uniform hx·hy
    weights, which is what the Stokes saddle-point algebra relies on.
    """
    nx, ny = p.shape
    gu = np.zeros((nx + 1, ny), dtype=p.dtype)
    gu[1:-1, :] = (p[1:, :] - p[:-1, :]) / hx
    gw = np.zeros((nx, ny + 1), dtype=p.dtype)
    gw[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / hy
    return gu, gw


def lap_u(u, hx, hy):
    """Component Laplacian of the x-velocity on interior vertical faces.

    Dirichlet in x (the stored boundary faces enter the stencil; they are 0
    for admissible fields) and no-slip tangential walls in y via reflection
    ghosts (ghost = −interior).  Output is zero on the boundary-normal rows.
    """
    out = np.zeros_like(u)
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)
    core = u[1:-1, :]
    out[1:-1, :] = (u[2:, :] - 2.0 * core + u[:-2, :]) * ihx2
    out[1:-1, 1:-1] += (core[:, 2:] - 2.0 * core[:, 1:-1] + core[:, :-2]) * ihy2
    out[1:-1, 0] += (core[:, 1] - 3.0 * core[:, 0]) * ihy2
    out[1:-1, -1] += (core[:, -2] - 3.0 * core[:, -1]) * ihy2
    return out


def lap_w(w, hx, hy):
    """Component Laplacian of the y-velocity on interior horizontal faces;
    mirror image of :func:`lap_u`."""
    out = np.zeros_like(w)
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)
    core = w[:, 1:-1]
    out[:, 1:-1] = (w[:, 2:] - 2.0 * core + w[:, :-2]) * ihy2
    out[1:-1, 1:-1] += (core[2:, :] - 2.0 * core[1:-1, :] + core[:-2, :]) * ihx2
    out[0, 1:-1] += (core[1, :] - 3.0 * core[0, :]) * ihx2
    out[-1, 1:-1] += (core[-2, :] - 3.0 * core[-1, :]) * ihx2
    return out
