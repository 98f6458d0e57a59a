"""Pure numpy implementations of the hot loops.

Each function has a twin in ``_ckernels.pyx`` with the same signature and
results equal up to summation order.
"""

import itertools

import numpy as np

FLUX_FLOOR = 1e-12


def _shift_diffs(u, spacing):
    """Forward and backward differences of the zero-extended array."""
    fwd, bwd = [], []
    for k, h in enumerate(spacing):
        pad = [(0, 0)] * u.ndim
        pad[k] = (1, 1)
        up = np.pad(u, pad)
        hi = tuple(slice(2, None) if j == k else slice(None) for j in range(u.ndim))
        lo = tuple(slice(None, -2) if j == k else slice(None) for j in range(u.ndim))
        fwd.append((up[hi] - u) / h)
        bwd.append((u - up[lo]) / h)
    return fwd, bwd


def _shift(a, k, step):
    """b[i] = a[i + step*e_k] with zero fill outside the box."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[k], dst[k] = slice(step, None), slice(None, -step)
    else:
        src[k], dst[k] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def corner_energy(u, p, mu, spacing, want_grad=True):
    """Corner-averaged one-sided gradient energy.

    Returns ``(E, dE)`` with
    ``E = prod(h) 2^-N sum_nodes sum_corners mu |G_s u|^p / p`` and ``dE`` its
    gradient with respect to every node value (``None`` unless requested).
    """
    ndim = u.ndim
    c = float(np.prod(spacing)) / 2 ** ndim
    fwd, bwd = _shift_diffs(u, spacing)
    energy = 0.0
    grad = np.zeros_like(u) if want_grad else None
    low_p = p < 2
    for signs in itertools.product((0, 1), repeat=ndim):
        comps = [bwd[k] if s else fwd[k] for k, s in enumerate(signs)]
        r2 = sum(g * g for g in comps)
        energy += c * float(np.sum(mu * r2 ** (0.5 * p) / p))
        if not want_grad:
            continue
        r2f = np.where(low_p, np.maximum(r2, FLUX_FLOOR ** 2), r2)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r2f > 0, c * mu * r2f ** (0.5 * p - 1), 0.0)
        for k, s in enumerate(signs):
            f = w * comps[k] / spacing[k]
            if s:
                # backward difference touches nodes i and i-1
                grad += f
                grad -= _shift(f, k, 1)
            else:
                grad -= f
                grad += _shift(f, k, -1)
    return energy, grad


def compare_exchange(values, hi, lo):
    """For each pair, move the larger value to ``hi`` and the smaller to ``lo``.

    Pairs are processed in order; ``values`` is modified in place.
    Returns the number of pairs whose values were swapped.
    """
    # pairs must not share a node; callers pass disjoint blocks
    a = values[hi]
    b = values[lo]
    flip = b > a
    swaps = int(flip.sum())
    if swaps:
        values[hi] = np.maximum(a, b)
        values[lo] = np.minimum(a, b)
    return swaps


def compare_exchange_blocks(values, hi, lo, starts):
    """Run :func:`compare_exchange` over consecutive disjoint blocks."""
    swaps = 0
    for s, e in zip(starts[:-1], starts[1:]):
        swaps += compare_exchange(values, hi[s:e], lo[s:e])
    return swaps


def riesz_sum(points, g, alpha, self_weight, cell_volume):
    """V_i = cell_volume * sum_{j != i} g_j |x_i - x_j|^-alpha_i + g_i self_weight_i."""
    n = len(g)
    out = np.empty(n)
    chunk = max(1, 2_000_000 // max(n, 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        d2 = ((points[s:e, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        idx = np.arange(s, e)
        d2[idx - s, idx] = 1.0
        k = d2 ** (-0.5 * alpha[s:e, None])
        k[idx - s, idx] = 0.0
        out[s:e] = cell_volume * (k @ g) + g[s:e] * self_weight[s:e]
    return out
