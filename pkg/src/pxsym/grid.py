"""Uniform node grids on reflection-symmetric domains.

Nodes are placed uniformly and symmetrically about the domain center, so the
reflections x -> -x, coordinate flips and axis swaps map nodes onto nodes.
Dirichlet data is stored as explicit zeros on every node outside ``mask``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridMismatch, InvalidRadii, ResolutionTooSmall

__all__ = [
    "DOMAIN_KINDS",
    "Grid",
    "GridFunction",
    "GradientField",
    "build_grid",
    "gradient",
    "integrate",
    "check_same_grid",
    "write_csv",
    "read_csv",
    "random_smooth",
    "random_noise",
]

DOMAIN_KINDS = ("interval", "rectangle", "disk", "ball", "annulus")
_RADIAL_KINDS = ("disk", "ball", "annulus")
MIN_INTERIOR = 8


@dataclass(frozen=True, eq=False)
class Grid:
    shape: tuple
    spacing: tuple
    origin: tuple
    mask: np.ndarray = field(repr=False)
    domain_kind: str
    radii: tuple

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def h(self) -> float:
        """Largest spacing; the mesh parameter used in O(h) tolerances."""
        return float(max(self.spacing))

    @property
    def n_interior(self) -> int:
        return int(self.mask.sum())

    @property
    def is_radial(self) -> bool:
        return self.domain_kind in _RADIAL_KINDS

    @cached_property
    def axes(self) -> tuple:
        # offsets from the center are exactly antisymmetric in floating point
        return tuple(
            o + h * (n - 1) / 2 + h * (np.arange(n) - (n - 1) / 2)
            for o, h, n in zip(self.origin, self.spacing, self.shape)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(ndim, *shape)``."""
        pts = np.stack(np.meshgrid(*self.axes, indexing="ij"))
        pts.setflags(write=False)
        return pts

    @cached_property
    def center(self) -> np.ndarray:
        return np.array([o + h * (n - 1) / 2 for o, h, n in zip(self.origin, self.spacing, self.shape)])

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance of every node from the domain center."""
        c = self.center.reshape((-1,) + (1,) * self.ndim)
        r = np.sqrt(((self.points - c) ** 2).sum(axis=0))
        r.setflags(write=False)
        return r

    @cached_property
    def centered_index(self) -> np.ndarray:
        """Integer node offsets from the center in units of the spacing.

        Only meaningful for odd resolutions; for even ones the offsets are
        half-integers scaled by two so that they stay integral.
        """
        idx = np.indices(self.shape)
        twice = np.stack([2 * idx[k] - (n - 1) for k, n in enumerate(self.shape)])
        if all(n % 2 == 1 for n in self.shape):
            return twice // 2
        return twice

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def sample(self, func) -> "GridFunction":
        """Evaluate ``func(points)`` on all nodes and clamp to the Dirichlet set.

        ``func`` receives the coordinate array of shape ``(ndim, *shape)``.
        """
        vals = np.asarray(func(self.points), dtype=float)
        vals = np.broadcast_to(vals, self.shape)
        return GridFunction.from_array(self, vals)

    def field(self, func) -> np.ndarray:
        """Evaluate a coefficient field on *all* nodes (no Dirichlet clamp)."""
        vals = np.asarray(func(self.points), dtype=float)
        return np.array(np.broadcast_to(vals, self.shape))

    def same_as(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.shape == other.shape
            and np.allclose(self.spacing, other.spacing, rtol=0, atol=1e-15)
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-15)
            and self.domain_kind == other.domain_kind
            and np.array_equal(self.mask, other.mask)
        )

    def describe(self) -> dict:
        return {
            "domain_kind": self.domain_kind,
            "shape": self.shape,
            "spacing": self.spacing,
            "radii": self.radii,
            "n_interior": self.n_interior,
        }


def check_same_grid(*objs) -> Grid:
    grids = [o.grid if hasattr(o, "grid") else o for o in objs if o is not None]
    first = grids[0]
    for g in grids[1:]:
        if not first.same_as(g):
            raise GridMismatch("operands live on different grids")
    return first


def _check_resolution(resolution, ndim):
    if np.isscalar(resolution):
        resolution = (int(resolution),) * ndim
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != ndim:
        raise ResolutionTooSmall(f"expected {ndim} node counts, got {resolution}")
    if min(resolution) < MIN_INTERIOR:
        raise ResolutionTooSmall(f"resolution {resolution} below {MIN_INTERIOR}")
    return resolution


def build_grid(domain_kind: str, resolution, radii=None) -> Grid:
    """Build a node grid for one of the supported symmetric domains.

    Parameters
    ----------
    domain_kind
        One of ``interval``, ``rectangle``, ``disk``, ``ball``, ``annulus``.
    resolution
        Nodes per axis (int, or a tuple for rectangles).
    radii
        ``(a, b)`` end points for an interval, a sequence of ``(a, b)`` per
        axis for a rectangle, and ``(r_inner, r_outer)`` for disk, ball and
        annulus (``r_inner`` must be 0 for disk and ball).
    """
    if domain_kind not in DOMAIN_KINDS:
        raise ValueError(f"unknown domain kind {domain_kind!r}")

    if domain_kind in ("interval", "rectangle"):
        if domain_kind == "interval":
            bounds = [tuple(radii) if radii is not None else (-1.0, 1.0)]
        else:
            bounds = [tuple(b) for b in radii] if radii is not None else [(-1.0, 1.0)] * 2
        for a, b in bounds:
            if not a < b:
                raise InvalidRadii(f"empty interval ({a}, {b})")
        shape = _check_resolution(resolution, len(bounds))
        spacing = tuple((b - a) / (n - 1) for (a, b), n in zip(bounds, shape))
        origin = tuple(float(a) for a, _ in bounds)
        mask = np.zeros(shape, dtype=bool)
        mask[(slice(1, -1),) * len(shape)] = True
        stored = tuple(tuple(float(v) for v in b) for b in bounds)
        if domain_kind == "interval":
            stored = stored[0]
    else:
        ndim = 3 if domain_kind == "ball" else 2
        r_in, r_out = (0.0, 1.0) if radii is None else (float(radii[0]), float(radii[1]))
        if domain_kind == "annulus":
            if not 0 < r_in < r_out:
                raise InvalidRadii(f"annulus needs 0 < r_inner < r_outer, got {(r_in, r_out)}")
        elif r_in != 0 or r_out <= 0:
            raise InvalidRadii(f"{domain_kind} needs radii (0, R) with R > 0, got {(r_in, r_out)}")
        shape = _check_resolution(resolution, ndim)
        if len(set(shape)) != 1:
            raise ResolutionTooSmall("radial domains need the same node count on every axis")
        h = 2 * r_out / (shape[0] - 1)
        spacing = (h,) * ndim
        origin = (-r_out,) * ndim
        # symmetric construction: radius from integer offsets, not from floats
        k = np.arange(shape[0]) * 2 - (shape[0] - 1)
        r2 = sum(np.meshgrid(*([k.astype(float) ** 2] * ndim), indexing="ij")) * (h / 2) ** 2
        r = np.sqrt(r2)
        if domain_kind == "annulus":
            mask = (r > r_in) & (r < r_out)
        else:
            mask = r < r_out - h / 2
        stored = (r_in, r_out)

    mask.setflags(write=False)
    grid = Grid(tuple(shape), tuple(float(s) for s in spacing), origin, mask, domain_kind, stored)
    interior = [int(np.any(mask, axis=tuple(j for j in range(grid.ndim) if j != k)).sum())
                for k in range(grid.ndim)]
    if min(interior) < MIN_INTERIOR:
        raise ResolutionTooSmall(f"only {min(interior)} interior nodes along an axis")
    return grid


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {vals.shape} on grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite values")
        if np.any(vals[~self.grid.mask] != 0):
            raise ValueError("grid function must vanish outside the domain mask")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, grid: Grid, values) -> "GridFunction":
        vals = np.array(np.broadcast_to(np.asarray(values, dtype=float), grid.shape))
        vals[~grid.mask] = 0.0
        return cls(grid, vals)

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.grid.mask]

    def osc(self) -> float:
        v = self.interior
        return float(v.max() - v.min()) if v.size else 0.0

    def _wrap(self, vals):
        return GridFunction.from_array(self.grid, vals)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            check_same_grid(self, other)
            return self._wrap(self.values + other.values)
        return self._wrap(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            check_same_grid(self, other)
            return self._wrap(self.values - other.values)
        return self._wrap(self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            check_same_grid(self, other)
            return self._wrap(self.values * other.values)
        return self._wrap(self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._wrap(self.values / c)

    def __neg__(self):
        return self._wrap(-self.values)

    def positive_part(self) -> "GridFunction":
        return self._wrap(np.maximum(self.values, 0.0))

    def equals(self, other: "GridFunction") -> bool:
        return self.grid.same_as(other.grid) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class GradientField:
    grid: Grid
    components: np.ndarray = field(repr=False)

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt((self.components ** 2).sum(axis=0))


def gradient(u: GridFunction) -> GradientField:
    """Node-wise discrete gradient.

    Central differences where both axis neighbours are interior, a one-sided
    difference towards the interior neighbour next to the boundary, and the
    central difference of the zero extension when both neighbours are
    boundary nodes. Exact for affine data at every interior node.
    """
    grid = u.grid
    mask = grid.mask
    comps = np.zeros((grid.ndim,) + grid.shape)
    v = u.values
    for k, h in enumerate(grid.spacing):
        pad = [(0, 0)] * grid.ndim
        pad[k] = (1, 1)
        vp = np.pad(v, pad)
        mp = np.pad(mask, pad)
        sl = lambda a, b: tuple(slice(a, b) if j == k else slice(None) for j in range(grid.ndim))
        up, um = vp[sl(2, None)], vp[sl(None, -2)]
        fp, fm = mp[sl(2, None)], mp[sl(None, -2)]
        central = (up - um) / (2 * h)
        fwd = (up - v) / h
        bwd = (v - um) / h
        d = np.where(fp & fm, central, np.where(fm, bwd, np.where(fp, fwd, central)))
        comps[k] = np.where(mask, d, 0.0)
    return GradientField(grid, comps)


def integrate(f, grid: Grid | None = None) -> float:
    """Midpoint quadrature over the interior nodes.

    ``f`` may be a GridFunction, a full-shape array (requires ``grid``) or a
    scalar constant (requires ``grid``).
    """
    if isinstance(f, GridFunction):
        grid = f.grid if grid is None else check_same_grid(grid, f)
        vals = f.values
    else:
        if grid is None:
            raise TypeError("integrate needs a grid for raw arrays or constants")
        vals = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    # boolean indexing yields a contiguous 1-D array -> numpy pairwise sum
    return float(np.sum(vals[grid.mask])) * grid.cell_volume


def write_csv(u, path, grid: Grid | None = None) -> None:
    """Write interior node values as ``axis0,...,value`` rows in index order.

    ``u`` may be a GridFunction or, with ``grid``, a full-shape field array.
    """
    if isinstance(u, GridFunction):
        grid, vals = u.grid, u.values
    else:
        vals = np.asarray(u, dtype=float)
    idx = np.nonzero(grid.mask)
    coords = [grid.axes[k][idx[k]] for k in range(grid.ndim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"axis{k}" for k in range(grid.ndim)] + ["value"])
        for row in zip(*coords, vals[idx]):
            w.writerow([repr(float(x)) for x in row])


def read_csv(path, grid: Grid, *, as_field: bool = False):
    """Read a file written by :func:`write_csv` back onto ``grid``.

    Returns a GridFunction, or with ``as_field`` the raw full-shape array
    (exterior nodes zero) suitable for coefficient fields.
    """
    path = Path(path)
    vals = np.zeros(grid.shape)
    seen = np.zeros(grid.shape, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = [f"axis{k}" for k in range(grid.ndim)] + ["value"]
        if header != expected:
            raise GridMismatch(f"{path}: header {header} does not match {expected}")
        for row in reader:
            if not row:
                continue
            x = np.array([float(c) for c in row[:-1]])
            idx = np.rint((x - np.array(grid.origin)) / np.array(grid.spacing)).astype(int)
            if np.any(idx < 0) or np.any(idx >= np.array(grid.shape)):
                raise GridMismatch(f"{path}: node {x} outside grid")
            t = tuple(idx)
            if not grid.mask[t]:
                raise GridMismatch(f"{path}: node {x} is not interior")
            vals[t] = float(row[-1])
            seen[t] = True
    if not np.array_equal(seen, grid.mask):
        raise GridMismatch(f"{path}: rows do not cover the interior nodes")
    if as_field:
        return vals
    return GridFunction(grid, vals)


def _bump(grid: Grid) -> np.ndarray:
    """Smooth nonnegative profile vanishing on the domain boundary."""
    if grid.domain_kind in ("interval", "rectangle"):
        out = np.ones(grid.shape)
        for k in range(grid.ndim):
            a, b = grid.origin[k], grid.origin[k] + grid.spacing[k] * (grid.shape[k] - 1)
            x = grid.points[k]
            out = out * np.clip((x - a) * (b - x), 0, None) * 4 / (b - a) ** 2
        return out
    r_in, r_out = grid.radii
    r2 = grid.radius ** 2
    out = np.clip(r_out ** 2 - r2, 0, None) / r_out ** 2
    if grid.domain_kind == "annulus":
        out = out * np.clip(r2 - r_in ** 2, 0, None) / r_out ** 2
    return out


def random_smooth(grid: Grid, rng: np.random.Generator, modes: int = 4) -> GridFunction:
    """Random smooth Dirichlet function: a low-mode trigonometric sum times a bump.

    Coefficients decay like 1/|k|^2 so the samples stay smooth under
    refinement; the same generator state gives the same function on every
    resolution of the same domain.
    """
    span = [grid.spacing[k] * (grid.shape[k] - 1) for k in range(grid.ndim)]
    ref = [(grid.points[k] - grid.origin[k]) / span[k] for k in range(grid.ndim)]
    vals = np.zeros(grid.shape)
    for kvec in np.ndindex(*([modes] * grid.ndim)):
        kk = np.array(kvec)
        amp = rng.normal() / (1.0 + (kk ** 2).sum())
        phase = rng.uniform(0, 2 * np.pi, size=grid.ndim)
        term = np.ones(grid.shape)
        for k in range(grid.ndim):
            term = term * np.cos(np.pi * kk[k] * ref[k] + phase[k])
        vals += amp * term
    return GridFunction.from_array(grid, vals * _bump(grid))


def random_noise(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> GridFunction:
    """Independent normal values on interior nodes."""
    vals = np.zeros(grid.shape)
    vals[grid.mask] = scale * rng.normal(size=grid.n_interior)
    return GridFunction(grid, vals)
