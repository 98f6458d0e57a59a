# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
from libc.math cimport pow, sqrt

DEF FLUX_FLOOR2 = 1e-24


cdef inline double _corner(double gx, double gy, double gz, double p, double m,
                           double c, double *w) noexcept nogil:
    cdef double r2 = gx * gx + gy * gy + gz * gz
    cdef double rf = r2
    if p < 2 and rf < FLUX_FLOOR2:
        rf = FLUX_FLOOR2
    if rf > 0:
        w[0] = c * m * pow(rf, 0.5 * p - 1)
    else:
        w[0] = 0.0
    if r2 == 0:
        return 0.0
    return c * m * pow(r2, 0.5 * p) / p


def corner_energy_1d(const double[::1] u, const double[::1] p, const double[::1] mu, double h, bint want_grad):
    cdef Py_ssize_t n = u.shape[0], i
    cdef int s
    cdef double c = h / 2, e = 0.0, w, g, f, ui, up, um
    grad = np.zeros(n) if want_grad else None
    cdef double[::1] gv
    if want_grad:
        gv = grad
    for i in range(n):
        if mu[i] == 0:
            continue
        ui = u[i]
        up = u[i + 1] if i + 1 < n else 0.0
        um = u[i - 1] if i > 0 else 0.0
        for s in range(2):
            g = (up - ui) / h if s == 0 else (ui - um) / h
            e += _corner(g, 0.0, 0.0, p[i], mu[i], c, &w)
            if want_grad:
                f = w * g / h
                if s == 0:
                    gv[i] -= f
                    if i + 1 < n:
                        gv[i + 1] += f
                else:
                    gv[i] += f
                    if i > 0:
                        gv[i - 1] -= f
    return e, grad


def corner_energy_2d(const double[:, ::1] u, const double[:, ::1] p, const double[:, ::1] mu,
                     double hx, double hy, bint want_grad):
    cdef Py_ssize_t n0 = u.shape[0], n1 = u.shape[1], i, j
    cdef int sx, sy
    cdef double c = hx * hy / 4, e = 0.0, w, gx, gy, fx, fy, uij
    cdef double dxp, dxm, dyp, dym
    grad = np.zeros((n0, n1)) if want_grad else None
    cdef double[:, ::1] gv
    if want_grad:
        gv = grad
    for i in range(n0):
        for j in range(n1):
            if mu[i, j] == 0:
                continue
            uij = u[i, j]
            dxp = ((u[i + 1, j] if i + 1 < n0 else 0.0) - uij) / hx
            dxm = (uij - (u[i - 1, j] if i > 0 else 0.0)) / hx
            dyp = ((u[i, j + 1] if j + 1 < n1 else 0.0) - uij) / hy
            dym = (uij - (u[i, j - 1] if j > 0 else 0.0)) / hy
            for sx in range(2):
                gx = dxp if sx == 0 else dxm
                for sy in range(2):
                    gy = dyp if sy == 0 else dym
                    e += _corner(gx, gy, 0.0, p[i, j], mu[i, j], c, &w)
                    if not want_grad or w == 0:
                        continue
                    fx = w * gx / hx
                    fy = w * gy / hy
                    if sx == 0:
                        gv[i, j] -= fx
                        if i + 1 < n0:
                            gv[i + 1, j] += fx
                    else:
                        gv[i, j] += fx
                        if i > 0:
                            gv[i - 1, j] -= fx
                    if sy == 0:
                        gv[i, j] -= fy
                        if j + 1 < n1:
                            gv[i, j + 1] += fy
                    else:
                        gv[i, j] += fy
                        if j > 0:
                            gv[i, j - 1] -= fy
    return e, grad


def compare_exchange_blocks(double[::1] values, const long[::1] hi, const long[::1] lo, starts):
    """Sequential compare-exchange over all pairs; ``starts`` is unused here."""
    cdef Py_ssize_t k, n = hi.shape[0]
    cdef double a, b
    cdef long swaps = 0
    for k in range(n):
        a = values[hi[k]]
        b = values[lo[k]]
        if b > a:
            values[hi[k]] = b
            values[lo[k]] = a
            swaps += 1
    return swaps


def riesz_sum(const double[:, ::1] points, const double[::1] g, const double[::1] alpha,
              const double[::1] self_weight, double cell_volume):
    cdef Py_ssize_t n = g.shape[0], dim = points.shape[1], i, j, k
    cdef double acc, d2, t
    out = np.empty(n)
    cdef double[::1] ov = out
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i or g[j] == 0:
                continue
            d2 = 0.0
            for k in range(dim):
                t = points[i, k] - points[j, k]
                d2 += t * t
            acc += g[j] * pow(d2, -0.5 * alpha[i])
        ov[i] = cell_volume * acc + g[i] * self_weight[i]
    return out
