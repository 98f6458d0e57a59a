"""Variable-exponent Lebesgue and Sobolev quantities on grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidProblemData, ZeroFunction
from .grid import Grid, GridFunction, check_same_grid, gradient, integrate, random_smooth

__all__ = [
    "ExponentField",
    "ConjugateExponentField",
    "modular",
    "luxemburg_norm",
    "check_norm_modular_relation",
    "check_holder",
    "sobolev_norm",
    "estimate_poincare_constant",
    "lp_distance",
]

ROOT_RTOL = 1e-12
PROPERTY_TOL = 1e-9
MAX_BISECTIONS = 200


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Exponent values on every node of a grid.

    Values outside the mask are kept (they enter one-sided differences at
    the boundary) but ``p_minus`` and ``p_plus`` are taken over the mask.
    """

    grid: Grid
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(np.broadcast_to(np.asarray(self.p, dtype=float), self.grid.shape))
        if not np.all(np.isfinite(p)):
            raise InvalidProblemData("exponent field has non-finite values")
        inner = p[self.grid.mask]
        if inner.min() <= 1:
            raise InvalidProblemData(f"exponent must exceed 1, got min {inner.min()}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ExponentField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ExponentField":
        return cls(grid, grid.field(func))

    @property
    def p_minus(self) -> float:
        return float(self.p[self.grid.mask].min())

    @property
    def p_plus(self) -> float:
        return float(self.p[self.grid.mask].max())

    def conjugate(self) -> "ConjugateExponentField":
        return ConjugateExponentField(self.grid, self.p / (self.p - 1))


@dataclass(frozen=True, eq=False)
class ConjugateExponentField(ExponentField):
    """Hoelder conjugate p' = p / (p - 1), itself a valid exponent field."""

    @property
    def p_prime(self) -> np.ndarray:
        return self.p


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def _modular_raw(vals, p, grid, scale=1.0):
    m = grid.mask
    return float(np.sum(np.abs(vals[m] / scale) ** p[m])) * grid.cell_volume


def modular(u: GridFunction, p: ExponentField) -> float:
    """Integral of |u|^p over the domain."""
    check_same_grid(u, p)
    return _modular_raw(u.values, p.p, p.grid)


def luxemburg_norm(u: GridFunction, p: ExponentField) -> float:
    """Smallest mu > 0 with modular(u / mu) <= 1, found by bisection."""
    check_same_grid(u, p)
    grid = p.grid
    vals = u.values
    if not np.any(vals[grid.mask]):
        return 0.0
    m1 = _modular_raw(vals, p.p, grid)
    if m1 == 1.0:
        return 1.0
    pm, pp = p.p_minus, p.p_plus
    a, b = m1 ** (1 / pp), m1 ** (1 / pm)
    lo, hi = (a, b) if m1 >= 1 else (b, a)
    # widen by a hair so round-off in the bracket cannot exclude the root
    lo, hi = lo * (1 - 1e-12), hi * (1 + 1e-12)
    for _ in range(MAX_BISECTIONS):
        mid = np.sqrt(lo * hi)
        if _modular_raw(vals, p.p, grid, mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 0.25 * ROOT_RTOL * hi:
            break
    return float(np.sqrt(lo * hi))


def lp_distance(u: GridFunction, v: GridFunction, exponent: float) -> float:
    """Discrete constant-exponent L^s distance."""
    grid = check_same_grid(u, v)
    d = np.abs(u.values - v.values)[grid.mask]
    return float((np.sum(d ** exponent) * grid.cell_volume) ** (1 / exponent))


def check_norm_modular_relation(u: GridFunction, p: ExponentField) -> dict:
    """Compare the modular with the powers of the norm at p_minus and p_plus."""
    check_same_grid(u, p)
    norm = luxemburg_norm(u, p)
    if norm == 0:
        raise ZeroFunction("norm-modular relation needs u != 0")
    lower = min(norm ** p.p_minus, norm ** p.p_plus)
    upper = max(norm ** p.p_minus, norm ** p.p_plus)
    mod = modular(u, p)
    holds = lower * (1 - PROPERTY_TOL) <= mod <= upper * (1 + PROPERTY_TOL)
    return {"lower": lower, "modular": mod, "upper": upper, "norm": norm, "holds": bool(holds)}


def check_holder(u: GridFunction, v: GridFunction, p: ExponentField) -> dict:
    """Variable-exponent Hoelder inequality with constant 1/p_- + 1/p'_-."""
    check_same_grid(u, v, p)
    q = p.conjugate()
    lhs = abs(integrate(u * v))
    const = 1 / p.p_minus + 1 / q.p_minus
    rhs = const * luxemburg_norm(u, p) * luxemburg_norm(v, q)
    return {"lhs": lhs, "rhs": rhs, "constant": const, "holds": bool(lhs <= rhs + PROPERTY_TOL)}


def sobolev_norm(u: GridFunction, p: ExponentField) -> float:
    """Luxemburg norm of |Du|."""
    mag = gradient(u).magnitude
    return luxemburg_norm(GridFunction(u.grid, mag), p)


def estimate_poincare_constant(p: ExponentField, n_samples: int = 200, seed: int = 0) -> float:
    """Largest ||u|| / ||Du|| over seeded smooth random Dirichlet functions."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        u = random_smooth(p.grid, rng)
        du = sobolev_norm(u, p)
        if du > 0:
            best = max(best, luxemburg_norm(u, p) / du)
    return best
