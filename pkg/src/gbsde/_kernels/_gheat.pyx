# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels.

Twin of ``_ref.py``: identical arithmetic per element, identical association
order, compiled with FMA contraction disabled so results match the numpy
backend exactly. Keep the two files in lockstep.
"""

from libc.math cimport fmax, floor

import numpy as np


cdef inline double _g(double a, double shi2, double slo2) noexcept nogil:
    return 0.5 * (shi2 * fmax(a, 0.0) - slo2 * fmax(-a, 0.0))


def second_diff(const double[:, ::1] u, double dx2):
    cdef Py_ssize_t b = u.shape[0], nx = u.shape[1]
    out_arr = np.zeros((b, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(b):
            for j in range(1, nx - 1):
                out[i, j] = ((u[i, j + 1] - u[i, j]) - (u[i, j] - u[i, j - 1])) / dx2
    return out_arr


def first_diff(const double[:, ::1] u, double dx):
    cdef Py_ssize_t b = u.shape[0], nx = u.shape[1]
    out_arr = np.empty((b, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double twodx = 2.0 * dx
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(b):
            for j in range(1, nx - 1):
                out[i, j] = (u[i, j + 1] - u[i, j - 1]) / twodx
            out[i, 0] = (u[i, 1] - u[i, 0]) / dx
            out[i, nx - 1] = (u[i, nx - 1] - u[i, nx - 2]) / dx
    return out_arr


def g_apply(const double[:, ::1] a, double shi2, double slo2):
    cdef Py_ssize_t b = a.shape[0], nx = a.shape[1]
    out_arr = np.empty((b, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(b):
            for j in range(nx):
                out[i, j] = _g(a[i, j], shi2, slo2)
    return out_arr


def step_update(const double[:, ::1] u, const double[:, ::1] a, fv, double dt,
                double shi2, double slo2):
    cdef Py_ssize_t b = u.shape[0], nx = u.shape[1]
    out_arr = np.empty((b, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef const double[:, ::1] f
    cdef Py_ssize_t i, j
    if fv is None:
        with nogil:
            for i in range(b):
                for j in range(nx):
                    out[i, j] = u[i, j] + dt * _g(a[i, j], shi2, slo2)
    else:
        f = fv
        with nogil:
            for i in range(b):
                for j in range(nx):
                    out[i, j] = u[i, j] + dt * (_g(a[i, j], shi2, slo2) + f[i, j])
    return out_arr


def steps_f0(u, Py_ssize_t nsteps, double dt, double dx2,
             double shi2, double slo2):
    cur_arr = np.array(u, dtype=np.float64, copy=True)
    cdef Py_ssize_t b = cur_arr.shape[0], nx = cur_arr.shape[1]
    nxt_arr = np.empty((b, nx), dtype=np.float64)
    cdef double[:, ::1] cur = cur_arr
    cdef double[:, ::1] nxt = nxt_arr
    cdef double[:, ::1] tmp
    cdef double a
    cdef Py_ssize_t s, i, j
    with nogil:
        for s in range(nsteps):
            for i in range(b):
                nxt[i, 0] = cur[i, 0] + dt * _g(0.0, shi2, slo2)
                for j in range(1, nx - 1):
                    a = ((cur[i, j + 1] - cur[i, j]) - (cur[i, j] - cur[i, j - 1])) / dx2
                    nxt[i, j] = cur[i, j] + dt * _g(a, shi2, slo2)
                nxt[i, nx - 1] = cur[i, nx - 1] + dt * _g(0.0, shi2, slo2)
            tmp = cur
            cur = nxt
            nxt = tmp
    if nsteps % 2 == 0:
        return cur_arr
    return nxt_arr


def interp_rows(const double[::1] row, double x_lo, double dx, const double[::1] pos):
    cdef Py_ssize_t nx = row.shape[0], n = pos.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double s, w, smax = nx - 1.0
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            s = (pos[i] - x_lo) / dx
            if s < 0.0:
                s = 0.0
            elif s > smax:
                s = smax
            j = <Py_ssize_t>floor(s)
            if j > nx - 2:
                j = nx - 2
            w = s - j
            out[i] = row[j] + w * (row[j + 1] - row[j])
    return out_arr


def k_increments(const double[:, ::1] a, const double[:, ::1] h, double dt,
                 double shi2, double slo2):
    cdef Py_ssize_t b = a.shape[0], m = a.shape[1]
    out_arr = np.empty((b, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double ha, h2, ghat
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(b):
            for j in range(m):
                ha = 0.5 * a[i, j]
                h2 = h[i, j] * h[i, j]
                ghat = shi2 if a[i, j] >= 0.0 else slo2
                out[i, j] = (ha * h2) * dt - (ha * ghat) * dt
    return out_arr
