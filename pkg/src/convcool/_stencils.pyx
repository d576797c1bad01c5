# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil kernels (hot per-step loops).

Same contracts as the numpy twin ``_stencils_np``; see its module docstring
for the array layout.  Loops are fused per output cell/face so each kernel
makes a single pass.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def lap_neumann(double[:, ::1] f, double hx, double hy):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1]
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    out_arr = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double fw_, fe, fs, fn, c
    for i in range(nx):
        for j in range(ny):
            c = f[i, j]
            fw_ = f[i - 1, j] if i > 0 else c
            fe = f[i + 1, j] if i < nx - 1 else c
            fs = f[i, j - 1] if j > 0 else c
            fn = f[i, j + 1] if j < ny - 1 else c
            out[i, j] = (fw_ - 2.0 * c + fe) * ihx2 + (fs - 2.0 * c + fn) * ihy2
    return out_arr


def divergence(double[:, ::1] u, double[:, ::1] w, double hx, double hy):
    cdef Py_ssize_t nx = u.shape[0] - 1, ny = u.shape[1]
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    out_arr = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny):
            out[i, j] = (u[i + 1, j] - u[i, j]) * ihx + (w[i, j + 1] - w[i, j]) * ihy
    return out_arr


def advect(double[:, ::1] u, double[:, ::1] w, double[:, ::1] f,
           double hx, double hy):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1]
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    out_arr = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double pw_, pe, ps, pn
    for i in range(nx):
        for j in range(ny):
            pw_ = u[i, j] * (f[i, j] - f[i - 1, j]) * ihx if i > 0 else 0.0
            pe = u[i + 1, j] * (f[i + 1, j] - f[i, j]) * ihx if i < nx - 1 else 0.0
            ps = w[i, j] * (f[i, j] - f[i, j - 1]) * ihy if j > 0 else 0.0
            pn = w[i, j + 1] * (f[i, j + 1] - f[i, j]) * ihy if j < ny - 1 else 0.0
            out[i, j] = 0.5 * (pw_ + pe) + 0.5 * (ps + pn)
    return out_arr


def face_force(double[:, ::1] q, double[:, ::1] t, double hx, double hy):
    cdef Py_ssize_t nx = t.shape[0], ny = t.shape[1]
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    fu_arr = np.zeros((nx + 1, ny), dtype=np.float64)
    fw_arr = np.zeros((nx, ny + 1), dtype=np.float64)
    cdef double[:, ::1] fu = fu_arr
    cdef double[:, ::1] fw = fw_arr
    cdef Py_ssize_t i, j
    for i in range(1, nx):
        for j in range(ny):
            fu[i, j] = (t[i, j] - t[i - 1, j]) * ihx * 0.5 * (q[i, j] + q[i - 1, j])
    for i in range(nx):
        for j in range(1, ny):
            fw[i, j] = (t[i, j] - t[i, j - 1]) * ihy * 0.5 * (q[i, j] + q[i, j - 1])
    return fu_arr, fw_arr


def grad_to_faces(double[:, ::1] p, double hx, double hy):
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1]
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    gu_arr = np.zeros((nx + 1, ny), dtype=np.float64)
    gw_arr = np.zeros((nx, ny + 1), dtype=np.float64)
    cdef double[:, ::1] gu = gu_arr
    cdef double[:, ::1] gw = gw_arr
    cdef Py_ssize_t i, j
    for i in range(1, nx):
        for j in range(ny):
            gu[i, j] = (p[i, j] - p[i - 1, j]) * ihx
    for i in range(nx):
        for j in range(1, ny):
            gw[i, j] = (p[i, j] - p[i, j - 1]) * ihy
    return gu_arr, gw_arr


def lap_u(double[:, ::1] u, double hx, double hy):
    cdef Py_ssize_t nxp = u.shape[0], ny = u.shape[1]
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    out_arr = np.zeros((nxp, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double c, us, un
    for i in range(1, nxp - 1):
        for j in range(ny):
            c = u[i, j]
            us = u[i, j - 1] if j > 0 else -c
            un = u[i, j + 1] if j < ny - 1 else -c
            out[i, j] = (u[i - 1, j] - 2.0 * c + u[i + 1, j]) * ihx2 \
                + (us - 2.0 * c + un) * ihy2
    return out_arr


def lap_w(double[:, ::1] w, double hx, double hy):
    cdef Py_ssize_t nx = w.shape[0], nyp = w.shape[1]
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    out_arr = np.zeros((nx, nyp), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double c, ww, we
    for j in range(1, nyp - 1):
        for i in range(nx):
            c = w[i, j]
            ww = w[i - 1, j] if i > 0 else -c
            we = w[i + 1, j] if i < nx - 1 else -c
            out[i, j] = (ww - 2.0 * c + we) * ihx2 \
                + (w[i, j - 1] - 2.0 * c + w[i, j + 1]) * ihy2
    return out_arr
