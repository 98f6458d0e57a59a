"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``PXSYM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_c = None
if os.environ.get("PXSYM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _c

        BACKEND = "cython"
    except ImportError:  # extension not built
        _c = None


def corner_energy(u, p, mu, spacing, want_grad=True, backend=None):
    backend = backend or BACKEND
    if backend == "cython" and _c is not None and u.ndim in (1, 2):
        u = np.ascontiguousarray(u, dtype=float)
        p = np.ascontiguousarray(p, dtype=float)
        mu = np.ascontiguousarray(mu, dtype=float)
        if u.ndim == 1:
            return _c.corner_energy_1d(u, p, mu, float(spacing[0]), want_grad)
        return _c.corner_energy_2d(u, p, mu, float(spacing[0]), float(spacing[1]), want_grad)
    return _pykernels.corner_energy(u, p, mu, spacing, want_grad)


def compare_exchange_blocks(values, hi, lo, starts, backend=None):
    backend = backend or BACKEND
    if backend == "cython" and _c is not None:
        return _c.compare_exchange_blocks(
            values, np.ascontiguousarray(hi, dtype=np.int_), np.ascontiguousarray(lo, dtype=np.int_), starts
        )
    return _pykernels.compare_exchange_blocks(values, hi, lo, starts)


def riesz_sum(points, g, alpha, self_weight, cell_volume, backend=None):
    backend = backend or BACKEND
    args = [np.ascontiguousarray(a, dtype=float) for a in (points, g, alpha, self_weight)]
    if backend == "cython" and _c is not None:
        return _c.riesz_sum(*args, float(cell_volume))
    return _pykernels.riesz_sum(*args, float(cell_volume))
