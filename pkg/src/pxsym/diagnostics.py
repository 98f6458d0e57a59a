"""Empirical checks of the weighted estimates: summability, Riesz potentials, weighted Sobolev ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .energy import ProblemData
from .errors import ExponentBelowTwo, InvalidProblemData, MuOutOfRange, QOutOfRange, RangeError
from .grid import Grid, GridFunction, check_same_grid, gradient, integrate, random_smooth
from .spaces import ExponentField, luxemburg_norm

__all__ = [
    "SummabilityReport",
    "SobolevReport",
    "PotentialBoundReport",
    "y_samples",
    "summability_integral",
    "self_cell_weight",
    "riesz_potential",
    "potential_bound_sweep",
    "two_star",
    "t_bar",
    "weighted_sobolev_ratio",
]

GRAD_FLOOR_ABS = 1e-12
GRAD_FLOOR_REL = 0.5  # times h * max|Du|
_Y_FRACTIONS = (-0.5, -0.25, 0.0, 0.25, 0.5)


@dataclass(frozen=True)
class SummabilityReport:
    r: float
    gamma: float
    values: list = field(repr=False)
    max_value: float


@dataclass(frozen=True)
class SobolevReport:
    t_bar: float
    gamma: float
    two_star: float
    q: float
    ratios: list = field(repr=False)
    max_ratio: float


@dataclass(frozen=True)
class PotentialBoundReport:
    mu: float
    m: float
    q: float
    thetas: list = field(repr=False)
    max_theta: float
    min_theta: float


def _diameter(grid: Grid) -> float:
    if grid.is_radial:
        return 2.0 * grid.radii[1]
    return float(np.sqrt(sum((grid.spacing[k] * (grid.shape[k] - 1)) ** 2 for k in range(grid.ndim))))


def y_samples(grid: Grid) -> list:
    """Node indices of a 5^N sub-grid at offsets 0, +-1/4, +-1/2 of the half-width, kept if interior."""
    half = [0.5 * grid.spacing[k] * (grid.shape[k] - 1) for k in range(grid.ndim)]
    out = []
    for combo in np.ndindex(*([5] * grid.ndim)):
        idx = []
        for k, c in enumerate(combo):
            x = grid.center[k] + _Y_FRACTIONS[c] * half[k]
            idx.append(int(round((x - grid.origin[k]) / grid.spacing[k])))
        idx = tuple(idx)
        if grid.mask[idx]:
            out.append(idx)
    return out


@lru_cache(maxsize=None)
def _cube_factor(ndim: int, alpha: float, order: int = 32) -> float:
    # N/(N-alpha) * integral over [0,1]^(N-1) of (1+|t|^2)^(-alpha/2)
    if ndim == 1:
        return 1.0 / (1.0 - alpha)
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1), 0.5 * w
    grids = np.meshgrid(*([x] * (ndim - 1)), indexing="ij")
    wts = np.prod(np.meshgrid(*([w] * (ndim - 1)), indexing="ij"), axis=0)
    t2 = sum(g ** 2 for g in grids)
    return ndim / (ndim - alpha) * float(np.sum(wts * (1 + t2) ** (-alpha / 2)))


def self_cell_weight(grid: Grid, alpha) -> np.ndarray:
    """Exact integral of |z|^-alpha over a cubic cell centred at the origin, alpha < N."""
    h = grid.spacing
    if not np.allclose(h, h[0], rtol=1e-12, atol=0):
        raise InvalidProblemData("self-cell integral needs equal spacing on all axes")
    n = grid.ndim
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha >= n):
        raise RangeError("kernel exponent must stay below the dimension")
    out = np.empty_like(alpha)
    for a in np.unique(alpha):
        w = grid.cell_volume if a == 0 else 2 ** n * (h[0] / 2) ** (n - a) * _cube_factor(n, float(a))
        out[alpha == a] = w
    return out


def _gamma_range(ndim: int, gamma: float) -> None:
    if ndim == 1 and not gamma < 1:
        raise RangeError(f"gamma = {gamma} must be below 1 on an interval")
    if ndim == 2 and gamma != 0:
        raise RangeError(f"gamma must be 0 in two dimensions, got {gamma}")
    if ndim >= 3 and not gamma < ndim - 2:
        raise RangeError(f"gamma = {gamma} must be below N - 2 = {ndim - 2}")


def _floored_grad(u: GridFunction) -> np.ndarray:
    mag = gradient(u).magnitude
    floor = max(GRAD_FLOOR_ABS, GRAD_FLOOR_REL * u.grid.h * float(mag[u.grid.mask].max()))
    return np.maximum(mag, floor)


def summability_integral(u: GridFunction, data: ProblemData, r: float, gamma: float,
                         y_samples_idx=None) -> SummabilityReport:
    """Discrete integral of |Du|^(-(p-1) r) |x - y|^(-gamma) for each sample point y.

    Distances are divided by the domain diameter, so the kernel is at least
    one and the integral grows with gamma. The cell containing y uses the
    exact cell integral of the kernel; |Du| is floored at half a cell's
    worth of its maximum so isolated critical nodes stay integrable.
    """
    grid = check_same_grid(u, data.p)
    if not 0 <= r < 1:
        raise RangeError(f"r = {r} must lie in [0, 1)")
    _gamma_range(grid.ndim, gamma)
    ys = y_samples(grid) if y_samples_idx is None else [tuple(y) for y in y_samples_idx]
    m = grid.mask
    diam = _diameter(grid)
    weight = _floored_grad(u) ** (-(data.p.p - 1) * r)
    pts = np.stack([c[m] for c in grid.points], axis=1)
    wv = weight[m]
    dv = grid.cell_volume
    self_w = float(self_cell_weight(grid, gamma)[0]) * diam ** gamma if gamma else dv
    values = []
    for y in ys:
        yx = np.array([grid.points[k][y] for k in range(grid.ndim)])
        d = np.sqrt(((pts - yx) ** 2).sum(axis=1)) / diam
        hit = d == 0
        kern = np.ones_like(d) if gamma == 0 else np.where(hit, 1.0, d) ** (-gamma)
        total = dv * float(np.sum(wv[~hit] * kern[~hit])) + float(np.sum(wv[hit])) * self_w
        values.append((tuple(float(v) for v in yx), total))
    return SummabilityReport(float(r), float(gamma), values, max(v for _, v in values))


def riesz_potential(g: GridFunction, mu_field, backend=None) -> GridFunction:
    """V(x) = integral of g(y) |x - y|^(-N(1 - mu(x))) dy over the domain, at every interior node."""
    grid = g.grid
    mu = np.broadcast_to(np.asarray(mu_field, dtype=float), grid.shape)
    m = grid.mask
    if np.any(~(mu[m] > 0)) or np.any(mu[m] > 1):
        raise MuOutOfRange("mu must lie in (0, 1] on the domain")
    if np.any(g.values[m] < 0):
        raise InvalidProblemData("g must be nonnegative")
    alpha = grid.ndim * (1.0 - mu[m])
    pts = np.stack([c[m] for c in grid.points], axis=1)
    sw = self_cell_weight(grid, alpha)
    vals = np.zeros(grid.shape)
    vals[m] = kernels.riesz_sum(pts, g.values[m], alpha, sw, grid.cell_volume, backend=backend)
    return GridFunction(grid, vals)


def potential_bound_sweep(grid: Grid, mu: float, m: float, q: float, n_samples: int = 100,
                          seed: int = 0) -> PotentialBoundReport:
    """Ratios ||V_mu[g]||_q / ||g||_m over seeded nonnegative g; constant exponents."""
    rng = np.random.default_rng(seed)
    pm, pq = ExponentField.constant(grid, m), ExponentField.constant(grid, q)
    thetas = []
    for _ in range(n_samples):
        g = random_smooth(grid, rng)
        g = GridFunction.from_array(grid, np.abs(g.values))
        thetas.append(luxemburg_norm(riesz_potential(g, mu), pq) / luxemburg_norm(g, pm))
    return PotentialBoundReport(float(mu), float(m), float(q), thetas, max(thetas), min(thetas))


def two_star(ndim: int, tbar: float, gamma: float) -> float:
    """Critical exponent from 1/2* = 1/2 - 1/N + (1/t)(1/2 - gamma/(2N)); inf when the right side is <= 0."""
    inv = 0.5 - 1.0 / ndim + (0.0 if math.isinf(tbar) else (0.5 - gamma / (2 * ndim)) / tbar)
    return math.inf if inv <= 0 else 1.0 / inv


def t_bar(p: ExponentField, r: float) -> float:
    """inf of (p - 1) r / (p - 2) over the domain, with p = 2 nodes excluded."""
    pv = p.p[p.grid.mask]
    if pv.min() < 2:
        raise ExponentBelowTwo("t_bar needs p >= 2")
    live = pv > 2
    if not live.any():
        return math.inf
    return float(((pv[live] - 1) * r / (pv[live] - 2)).min())


def weighted_sobolev_ratio(u: GridFunction, data: ProblemData, q: float, w_samples=20,
                           r: float = 0.5, gamma: float = 0.0, seed: int = 0) -> SobolevReport:
    """Ratios ||w||_q / (integral of rho |Dw|^2)^(1/2) with rho = |Du|^(p-2).

    ``w_samples`` is a count of seeded smooth Dirichlet samples or an explicit
    list of grid functions; zero samples are skipped.
    """
    from .spectrum import weight_field

    grid = check_same_grid(u, data.p)
    if not 0 <= r < 1:
        raise RangeError(f"r = {r} must lie in [0, 1)")
    _gamma_range(grid.ndim, gamma)
    tb = t_bar(data.p, r)
    if grid.ndim >= 3 and not gamma > grid.ndim - 2 * tb:
        raise RangeError(f"gamma = {gamma} must exceed N - 2 t_bar = {grid.ndim - 2 * tb}")
    ts = two_star(grid.ndim, tb, gamma)
    if not q < ts:
        raise QOutOfRange(f"q = {q} must be below 2* = {ts}")
    rho = weight_field(u, data).rho
    if isinstance(w_samples, int):
        rng = np.random.default_rng(seed)
        w_samples = [random_smooth(grid, rng) for _ in range(w_samples)]
    pq = ExponentField.constant(grid, q)
    ratios = []
    for w in w_samples:
        check_same_grid(w, grid)
        if not np.any(w.values[grid.mask]):
            continue
        g2 = (gradient(w).components ** 2).sum(axis=0)
        ratios.append(luxemburg_norm(w, pq) / math.sqrt(integrate(rho * g2, grid)))
    if not ratios:
        raise InvalidProblemData("no nonzero w samples")
    return SobolevReport(tb, float(gamma), ts, float(q), ratios, max(ratios))
