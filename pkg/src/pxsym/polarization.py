"""Half-space reflections, two-point rearrangement and iterated symmetrization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import map_coordinates

from . import kernels
from .errors import AsymmetricDomain, DimensionMismatch, NoConvergence, NonGridReflection
from .grid import Grid, GridFunction, check_same_grid, integrate
from .spaces import ExponentField, lp_distance

__all__ = [
    "HalfSpace",
    "HalfSpaceSequence",
    "reflect",
    "polarize",
    "polarize_set",
    "iterated_symmetrize",
    "check_contraction",
    "gradient_modular",
    "modular_invariance",
]

_SNAP_TOL = 1e-7


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space {x : normal . x <= offset}."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.ndim != 1 or n.size == 0:
            raise DimensionMismatch("normal must be a non-empty vector")
        if abs(np.linalg.norm(n) - 1) > 1e-12:
            raise ValueError(f"normal {tuple(n)} is not a unit vector")
        object.__setattr__(self, "normal", tuple(float(c) for c in n))
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_direction(cls, direction, offset: float = 0.0) -> "HalfSpace":
        d = np.asarray(direction, dtype=float)
        return cls(tuple(d / np.linalg.norm(d)), offset)

    @property
    def dim(self) -> int:
        return len(self.normal)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.tensordot(self.normal, x, axes=(0, 0)) <= self.offset


def reflect(x, H: HalfSpace) -> np.ndarray:
    """Mirror image of ``x`` (shape ``(dim,)`` or ``(dim, ...)``) across the boundary of H."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != H.dim:
        raise DimensionMismatch(f"point of dimension {x.shape[0]} vs half-space of dimension {H.dim}")
    n = np.asarray(H.normal).reshape((-1,) + (1,) * (x.ndim - 1))
    s = np.tensordot(H.normal, x, axes=(0, 0)) - H.offset
    return x - 2 * s * n


@lru_cache(maxsize=256)
def _box_map(grid: Grid, H: HalfSpace):
    """Reflected fractional indices of every node plus the exact node map.

    Returns ``(frac, target, exact, inside)`` where ``target`` is the flat
    index of the mirror node (-1 when it is not a node of the box).
    """
    if H.dim != grid.ndim:
        raise DimensionMismatch(f"half-space of dimension {H.dim} on a {grid.ndim}-d grid")
    y = reflect(grid.points, H)
    frac = np.stack([(y[k] - grid.origin[k]) / grid.spacing[k] for k in range(grid.ndim)])
    idx = np.rint(frac)
    exact = np.all(np.abs(frac - idx) <= _SNAP_TOL, axis=0)
    inside = np.all([(idx[k] >= 0) & (idx[k] < grid.shape[k]) for k in range(grid.ndim)], axis=0)
    ok = exact & inside
    target = np.full(grid.shape, -1, dtype=np.int64)
    target[ok] = np.ravel_multi_index(tuple(idx[:, ok].astype(np.int64)), grid.shape)
    in_h = H.contains(grid.points)
    for a in (frac, target, exact, inside, in_h):
        a.setflags(write=False)
    return frac, target, exact, inside, in_h


def _exact_target(grid: Grid, H: HalfSpace, domain: np.ndarray) -> np.ndarray:
    _, target, exact, inside, _ = _box_map(grid, H)
    if not np.all(exact[domain]):
        raise NonGridReflection(f"reflection across {H} does not map nodes to nodes")
    if not np.all(inside[domain]) or not np.all(domain.ravel()[target[domain]]):
        raise AsymmetricDomain(f"domain is not invariant under the reflection across {H}")
    return target


def _polarize_values(vals, grid, H, domain, mode):
    _, _, _, _, in_h = _box_map(grid, H)
    if mode == "exact":
        target = _exact_target(grid, H, domain)
        mirror = np.zeros_like(vals)
        mirror[domain] = vals.ravel()[target[domain]]
    elif mode == "interpolate":
        frac = _box_map(grid, H)[0]
        mirror = map_coordinates(vals, frac, order=1, mode="constant", cval=0.0)
    else:
        raise ValueError(f"unknown polarization mode {mode!r}")
    out = np.where(in_h, np.maximum(vals, mirror), np.minimum(vals, mirror))
    return np.where(domain, out, 0.0)


def polarize(u: GridFunction, H: HalfSpace, mode: str = "exact") -> GridFunction:
    """Two-point rearrangement: max of u and its mirror image on H, min off H.

    ``mode="exact"`` requires the reflection to map interior nodes onto
    interior nodes; ``mode="interpolate"`` samples the mirror image bilinearly.
    """
    grid = u.grid
    return GridFunction(grid, _polarize_values(u.values, grid, H, grid.mask, mode))


def polarize_set(mask, H: HalfSpace, grid: Grid) -> np.ndarray:
    """Polarization of a node set given as a boolean array on ``grid``'s box."""
    mask = np.asarray(mask, dtype=bool)
    box = np.ones(grid.shape, dtype=bool)
    vals = _polarize_values(mask.astype(float), grid, H, box, "exact")
    return vals > 0.5


@dataclass(frozen=True, eq=False)
class HalfSpaceSequence:
    """Ordered half-spaces through the origin, reproducible from ``seed``.

    Sequences built by :meth:`lattice` also carry, for every item, the node
    pairs on which the reflection is exact (``pairs``); iterated
    symmetrization then compares exactly those pairs.
    """

    seed: int
    items: tuple
    axis: tuple
    pairs: tuple | None = field(default=None, repr=False)
    grid: Grid | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def low_discrepancy(cls, dim: int, length: int, seed: int = 0, axis=None) -> "HalfSpaceSequence":
        """Quasi-uniform unit normals; oriented so that ``axis`` lies in every H."""
        rng = np.random.default_rng(seed)
        golden = (math.sqrt(5) - 1) / 2
        shift = rng.uniform()
        k = np.arange(length)
        if dim == 1:
            normals = np.ones((length, 1))
        elif dim == 2:
            th = 2 * np.pi * ((k * golden + shift) % 1.0)
            normals = np.stack([np.cos(th), np.sin(th)], axis=1)
        elif dim == 3:
            z = 1 - 2 * (((k + 0.5) / length + shift) % 1.0)
            th = 2 * np.pi * ((k * golden + shift) % 1.0)
            s = np.sqrt(1 - z ** 2)
            normals = np.stack([s * np.cos(th), s * np.sin(th), z], axis=1)
        else:
            raise DimensionMismatch("sequences implemented for dimensions 1 to 3")
        if axis is None:
            axis = np.eye(dim)[0]
        axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        sgn = np.where(normals @ axis > 0, -1.0, 1.0)
        normals = normals * sgn[:, None]
        items = tuple(HalfSpace.from_direction(n) for n in normals)
        return cls(seed, items, tuple(axis))

    @classmethod
    def lattice(cls, grid: Grid, axis=None, seed: int = 0) -> "HalfSpaceSequence":
        """All mirror planes through the center that swap two equidistant nodes.

        Each item collects the node pairs {x, y} with |x| = |y| whose
        bisecting plane has the item's normal; the node nearer ``axis``
        receives the larger value. Pairs equidistant from ``axis`` are left out.
        """
        if not grid.is_radial:
            raise AsymmetricDomain("lattice sequences need a disk, ball or annulus grid")
        axis = np.eye(grid.ndim)[0] if axis is None else np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        flat = np.flatnonzero(grid.mask.ravel())
        z = grid.centered_index.reshape(grid.ndim, -1)[:, flat].T.astype(np.int64)
        t = z @ axis
        ttol = 1e-9 * max(1.0, np.abs(t).max())
        key = (z ** 2).sum(axis=1)
        order = np.argsort(key, kind="stable")
        cuts = np.flatnonzero(np.diff(key[order])) + 1
        dirs, his, los = [], [], []
        for shell in np.split(order, cuts):
            if len(shell) < 2:
                continue
            a, b = np.triu_indices(len(shell), k=1)
            a, b = shell[a], shell[b]
            keep = np.abs(t[a] - t[b]) > ttol
            a, b = a[keep], b[keep]
            hi = np.where(t[a] > t[b], a, b)
            lo = np.where(t[a] > t[b], b, a)
            d = z[lo] - z[hi]
            g = np.gcd.reduce(np.abs(d), axis=1)
            dirs.append(d // g[:, None])
            his.append(hi)
            los.append(lo)
        if not dirs:
            return cls(seed, (), tuple(axis), (), grid)
        d = np.concatenate(dirs)
        hi = flat[np.concatenate(his)]
        lo = flat[np.concatenate(los)]
        uniq, inv = np.unique(d, axis=0, return_inverse=True)
        inv = inv.ravel()
        perm = np.random.default_rng(seed).permutation(len(uniq))
        items, pairs = [], []
        by_group = np.argsort(inv, kind="stable")
        cuts = np.flatnonzero(np.diff(inv[by_group])) + 1
        blocks = np.split(by_group, cuts)
        for gi in perm:
            sel = blocks[gi]
            items.append(HalfSpace.from_direction(uniq[gi]))
            pairs.append((hi[sel], lo[sel]))
        return cls(seed, tuple(items), tuple(axis), tuple(pairs), grid)


def _flatten_pairs(seq):
    his = [h for h, _ in seq.pairs]
    los = [lo for _, lo in seq.pairs]
    starts = np.cumsum([0] + [len(h) for h in his])
    hi = np.concatenate(his) if his else np.zeros(0, dtype=np.int64)
    lo = np.concatenate(los) if los else np.zeros(0, dtype=np.int64)
    return hi, lo, starts


def iterated_symmetrize(
    u: GridFunction,
    seq: HalfSpaceSequence,
    stop_tol: float = 1e-6,
    max_sweeps: int = 500,
    exponent: float = 2.0,
    mode: str = "interpolate",
    return_sweeps: bool = False,
):
    """Apply the polarizations of ``seq`` in full sweeps until they stop moving u.

    Sequences from :meth:`HalfSpaceSequence.lattice` are applied as exact
    compare-exchange sweeps; other sequences use :func:`polarize` in ``mode``.
    Convergence is measured by the L^exponent distance between sweeps.
    """
    grid = u.grid
    if not grid.is_radial:
        raise AsymmetricDomain("iterated symmetrization needs a disk, ball or annulus grid")
    if seq.pairs is not None:
        if seq.grid is not None and not seq.grid.same_as(grid):
            raise AsymmetricDomain("lattice sequence was built for another grid")
        hi, lo, starts = _flatten_pairs(seq)
    cur = u
    for sweep in range(1, max_sweeps + 1):
        prev = cur
        if seq.pairs is not None:
            vals = np.array(cur.values).ravel()
            kernels.compare_exchange_blocks(vals, hi, lo, starts)
            cur = GridFunction(grid, vals.reshape(grid.shape))
        else:
            for H in seq.items:
                cur = polarize(cur, H, mode=mode)
        if lp_distance(prev, cur, exponent) <= stop_tol:
            return (cur, sweep) if return_sweeps else cur
    raise NoConvergence(f"iterated symmetrization did not settle in {max_sweeps} sweeps")


def check_contraction(u: GridFunction, v: GridFunction, H: HalfSpace, exponent: float = 2.0) -> dict:
    """Non-expansiveness of polarization in the discrete L^exponent distance."""
    check_same_grid(u, v)
    before = lp_distance(u, v, exponent)
    after = lp_distance(polarize(u, H), polarize(v, H), exponent)
    return {"before": before, "after": after, "holds": bool(after <= before + 1e-12)}


def gradient_modular(u: GridFunction, p: ExponentField, mu=None) -> float:
    """Integral of mu |Du|^p using the corner-averaged one-sided gradient."""
    grid = check_same_grid(u, p)
    w = np.ones(grid.shape) if mu is None else np.broadcast_to(np.asarray(mu, dtype=float), grid.shape)
    e, _ = kernels.corner_energy(u.values, p.p, w * p.p, grid.spacing, want_grad=False)
    return e


def modular_invariance(u: GridFunction, H: HalfSpace, p: ExponentField, mu=None) -> dict:
    """Compare the gradient and zeroth-order modulars of u and its polarization."""
    grid = check_same_grid(u, p)
    uh = polarize(u, H)
    w = np.ones(grid.shape) if mu is None else np.broadcast_to(np.asarray(mu, dtype=float), grid.shape)
    g0, g1 = gradient_modular(u, p, w), gradient_modular(uh, p, w)
    z0 = integrate(w * np.abs(u.values) ** p.p, grid)
    z1 = integrate(w * np.abs(uh.values) ** p.p, grid)
    return {
        "grad_u": g0,
        "grad_uH": g1,
        "grad_rel_diff": abs(g1 - g0) / g0 if g0 > 0 else 0.0,
        "zeroth_u": z0,
        "zeroth_uH": z1,
        "zeroth_rel_diff": abs(z1 - z0) / z0 if z0 > 0 else 0.0,
    }
