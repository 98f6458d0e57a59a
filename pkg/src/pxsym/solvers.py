"""Critical-point solvers: descent to minimizers and a mountain-pass path method."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .energy import ProblemData, _difference_ops, energy, hessian, is_symmetric_under, residual
from .errors import (
    AsymmetricDomain,
    DegenerateMoment,
    Diverged,
    NonFiniteEncountered,
    PathCollapse,
    Unconverged,
)
from .grid import Grid, GridFunction, _bump, check_same_grid
from .polarization import HalfSpace, HalfSpaceSequence, _box_map, polarize

__all__ = [
    "SolveOptions",
    "Solution",
    "minimize_energy",
    "mountain_pass",
    "verify_solution_pair",
    "foliated_schwarz_profile",
    "angular_deviation",
    "shells",
    "write_trace",
]

DIVERGENCE_LEVEL = 1e12
ARMIJO_C1 = 1e-4


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 2000
    residual_tol: float = 1e-8
    step_rule: str = "backtracking"
    step_size: float = 1.0
    seed: int = 0
    path_points: int = 16
    apply_polarization: HalfSpace | None = None
    newton: bool = True

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.path_points < 8:
            raise ValueError("path_points must be at least 8")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True, eq=False)
class Solution:
    u: GridFunction
    energy: float
    residual_norm: float
    iterations: int
    classification: str
    trace: list = field(default_factory=list, repr=False)


def _sup(r: GridFunction) -> float:
    return float(np.abs(r.values).max())


@lru_cache(maxsize=16)
def _sobolev_factor(grid: Grid):
    """LU factors of the H^1 Gram matrix (stiffness + mass) on interior nodes."""
    fwd, bwd = _difference_ops(grid)
    dv = grid.cell_volume
    S = sp.csr_matrix((grid.n_interior, grid.n_interior))
    for D in fwd + bwd:
        S = S + D.T @ D
    P = (0.5 * dv) * S + dv * sp.identity(grid.n_interior)
    return splu(sp.csc_matrix(P)), sp.csr_matrix(P)


def _to_grid(grid: Grid, vec: np.ndarray) -> GridFunction:
    vals = np.zeros(grid.shape)
    vals[grid.mask] = vec
    return GridFunction(grid, vals)


def _check_finite(phi: float):
    if not np.isfinite(phi):
        raise NonFiniteEncountered("energy became non-finite")
    if abs(phi) > DIVERGENCE_LEVEL:
        raise Diverged(f"energy {phi:.3e} beyond divergence level")


def _newton_direction(u, data, g):
    try:
        A = hessian(u, data)
        d = splu(sp.csc_matrix(A)).solve(-g)
    except (RuntimeError, ValueError):
        return None
    if not np.all(np.isfinite(d)):
        return None
    return d


def minimize_energy(data: ProblemData, opts: SolveOptions = SolveOptions(), u0: GridFunction | None = None) -> Solution:
    """Monotone descent from ``u0`` to the nearest critical point.

    Each step uses the Newton direction when it is a descent direction and
    the H^1-preconditioned gradient otherwise, with Armijo backtracking.
    Steps that would raise the energy beyond round-off are never taken.
    """
    grid = data.grid
    u = grid.zeros() if u0 is None else u0
    check_same_grid(u, data.p)
    lu, _ = _sobolev_factor(grid)
    dv = grid.cell_volume
    use_newton = opts.newton and data.p.p[grid.mask].min() >= 2
    phi = energy(u, data)
    _check_finite(phi)
    trace = []
    for it in range(opts.max_iters + 1):
        r = residual(u, data)
        rn = _sup(r)
        trace.append((it, phi, rn, 0))
        if rn <= opts.residual_tol:
            return Solution(u, phi, rn, it, "minimizer", trace)
        if it == opts.max_iters:
            break
        g = r.values[grid.mask] * dv
        d = _newton_direction(u, data, g) if use_newton else None
        if d is None or g @ d >= 0:
            d = -lu.solve(g)
        slope = float(g @ d)
        if opts.step_rule == "fixed":
            alpha = opts.step_size
            trial = u + _to_grid(grid, alpha * d)
            phi_t = energy(trial, data)
            _check_finite(phi_t)
            if phi_t > phi:
                break
        else:
            alpha = 1.0
            accepted = False
            flat = 64 * np.finfo(float).eps * max(1.0, abs(phi))
            # below round-off the Armijo test only admits steps that make no progress
            for _ in range(60 if -slope > flat else 0):
                trial = u + _to_grid(grid, alpha * d)
                phi_t = energy(trial, data)
                _check_finite(phi_t)
                if phi_t <= phi + ARMIJO_C1 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # energy flat to round-off: accept a full step only if it
                # lowers the residual and does not raise the energy
                trial = u + _to_grid(grid, d)
                phi_t = energy(trial, data)
                if phi_t <= phi + flat and _sup(residual(trial, data)) < rn:
                    accepted = True
            if not accepted:
                break
        u, phi = trial, phi_t
    r = residual(u, data)
    return Solution(u, phi, _sup(r), len(trace) - 1, "unconverged", trace)


def _default_bump(grid: Grid) -> GridFunction:
    b = _bump(grid)
    return GridFunction.from_array(grid, b / b.max())


def _endpoint(data: ProblemData, xi0: GridFunction):
    t = 1.0
    while t <= 2.0 ** 60:
        val = energy(xi0 * t, data)
        if val < 0:
            return xi0 * t, t
        t *= 2
    raise Unconverged("no endpoint with negative energy below t = 2^60")


def _reparametrize(path):
    """Redistribute path points uniformly in discrete L^2 arc length."""
    arr = np.stack([w.values for w in path])
    seg = np.sqrt(((arr[1:] - arr[:-1]) ** 2).reshape(len(path) - 1, -1).sum(axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return path
    target = np.linspace(0, s[-1], len(path))
    out = [path[0]]
    for ti in target[1:-1]:
        j = min(np.searchsorted(s, ti, side="right") - 1, len(path) - 2)
        lam = (ti - s[j]) / seg[j] if seg[j] > 0 else 0.0
        out.append(GridFunction(path[0].grid, (1 - lam) * arr[j] + lam * arr[j + 1]))
    out.append(path[-1])
    return out


def _split_reparametrize(path, k):
    """Arc-length re-spacing of both halves of the path, keeping point k as a knot."""
    left, right = path[: k + 1], path[k:]
    if len(left) > 2:
        left = _reparametrize(left)
    if len(right) > 2:
        right = _reparametrize(right)
    return left[:-1] + right


def mountain_pass(data: ProblemData, opts: SolveOptions = SolveOptions(), xi0: GridFunction | None = None) -> Solution:
    """Discrete mountain-pass method on a path from 0 to a negative-energy endpoint.

    The endpoint is a fixed bump scaled by powers of two until its energy
    is negative. Each outer iteration moves the highest path point along
    the H^1 gradient with its component along the path tangent reversed
    (down across the ridge, up along the path), re-spaces both halves of
    the path by arc length and, if ``opts.apply_polarization`` is set,
    polarizes every path point. Stops when the residual at the highest
    point is below ``opts.residual_tol``.
    """
    grid = data.grid
    H = opts.apply_polarization
    lu, P = _sobolev_factor(grid)
    dv = grid.cell_volume
    xi0 = _default_bump(grid) if xi0 is None else xi0
    if H is not None:
        xi0 = polarize(xi0, H)
    xi, _ = _endpoint(data, xi0)
    m = opts.path_points
    path = [xi * (j / (m - 1)) for j in range(m)]
    phis = np.array([energy(w, data) for w in path])
    alpha = opts.step_size
    trace = []
    for it in range(opts.max_iters):
        k = int(np.argmax(phis))
        if k == 0 or k == m - 1:
            raise PathCollapse(f"path maximum at endpoint {k}")
        w = path[k]
        r = residual(w, data)
        rn = _sup(r)
        trace.append((it, float(phis[k]), rn, k))
        if rn <= opts.residual_tol:
            return Solution(w, float(phis[k]), rn, it, "mountain_pass", trace)
        g = r.values[grid.mask] * dv
        d = -lu.solve(g)
        dual = float(-(g @ d))
        tau = (path[k + 1].values - path[k - 1].values)[grid.mask]
        Ptau = P @ tau
        nt = float(tau @ Ptau)
        if nt > 0:
            d = d - 2 * (d @ Ptau) / nt * tau
        if opts.step_rule == "fixed":
            trial = w + _to_grid(grid, opts.step_size * d)
        else:
            # guard against blow-up only: the H^1-dual residual may not grow much
            alpha = min(1.0, 2 * alpha)
            for _ in range(40):
                trial = w + _to_grid(grid, alpha * d)
                if np.isfinite(energy(trial, data)):
                    gt = residual(trial, data).values[grid.mask] * dv
                    if float(gt @ lu.solve(gt)) <= 100 * dual:
                        break
                alpha *= 0.5
        path[k] = trial
        path = _split_reparametrize(path, k)
        if H is not None:
            path = [polarize(v, H) for v in path]
        phis = np.array([energy(v, data) for v in path])
        _check_finite(float(phis.min()))
    k = int(np.argmax(phis))
    rn = _sup(residual(path[k], data))
    return Solution(path[k], float(phis[k]), rn, opts.max_iters, "unconverged", trace)


def verify_solution_pair(u: GridFunction, data: ProblemData, H: HalfSpace) -> dict:
    """Residuals and energies of u and its polarization (report only)."""
    grid = check_same_grid(u, data.p)
    _, _, exact, inside, _ = _box_map(grid, H)
    if not np.all(exact[grid.mask] & inside[grid.mask]) or not is_symmetric_under(data, H):
        raise AsymmetricDomain("data or mask not invariant under the reflection")
    uh = polarize(u, H)
    return {
        "res_u": _sup(residual(u, data)),
        "res_uH": _sup(residual(uh, data)),
        "phi_u": energy(u, data),
        "phi_uH": energy(uh, data),
        "phi_gap": abs(energy(u, data) - energy(uh, data)),
        "uH_equals_u": bool(uh.equals(u)),
    }


def shells(grid: Grid):
    """Interior nodes grouped by exact distance from the center.

    Returns ``(flat_index, integer_offsets, groups)`` where ``groups`` is a
    list of index arrays into ``flat_index``, one per radius, in increasing
    radius order.
    """
    flat = np.flatnonzero(grid.mask.ravel())
    z = grid.centered_index.reshape(grid.ndim, -1)[:, flat].T
    key = (z.astype(np.int64) ** 2).sum(axis=1)
    order = np.argsort(key, kind="stable")
    cuts = np.flatnonzero(np.diff(key[order])) + 1
    return flat, z, np.split(order, cuts)


def angular_deviation(u: GridFunction, per_shell: bool = False):
    """Largest spread of u over a sphere |x| = r, relative to osc(u)."""
    grid = u.grid
    flat, z, groups = shells(grid)
    v = u.values.ravel()[flat]
    osc = u.osc()
    h = grid.h * (0.5 if not all(n % 2 for n in grid.shape) else 1.0)
    rows = []
    for s in groups:
        r = float(np.sqrt((z[s[0]].astype(float) ** 2).sum())) * h
        rows.append((r, float(v[s].min()), float(v[s].mean()), float(v[s].max())))
    dev = max((b[3] - b[1] for b in rows), default=0.0)
    dev = dev / osc if osc > 0 else 0.0
    return (dev, rows) if per_shell else dev


def _first_moment(u: GridFunction) -> np.ndarray:
    grid = u.grid
    c = grid.center.reshape((-1,) + (1,) * grid.ndim)
    x = grid.points - c
    return np.array([np.sum(u.values * x[k]) for k in range(grid.ndim)]) * grid.cell_volume


def foliated_schwarz_profile(u: GridFunction, seq: HalfSpaceSequence | None = None, tie_tol: float = 1e-9) -> dict:
    """Monotonicity of u in the angle to an axis, on each sphere of nodes.

    The axis is ``seq.axis`` when a sequence is given and the normalized
    first moment of u otherwise; the moment estimate is always reported.
    The violation is the largest, over spheres, total decrease of u as
    xi . x increases (nodes with equal xi . x form one level).
    """
    grid = u.grid
    if not grid.is_radial:
        raise AsymmetricDomain("foliated Schwarz profile needs a disk, ball or annulus grid")
    mom = _first_moment(u)
    scale = float(np.sum(np.abs(u.values))) * grid.cell_volume * max(grid.radii)
    radial = angular_deviation(u) <= 1e-12
    mom_ok = scale > 0 and np.linalg.norm(mom) > 1e-10 * scale
    xi_m = mom / np.linalg.norm(mom) if mom_ok else None
    if seq is not None:
        xi = np.asarray(seq.axis, dtype=float)
    elif xi_m is not None:
        xi = xi_m
    elif radial:
        xi = np.eye(grid.ndim)[0]
    else:
        raise DegenerateMoment("first moment vanishes for a non-radial function")
    if radial:
        return {"xi": tuple(xi), "xi_moment": None if xi_m is None else tuple(xi_m),
                "radial": True, "monotonicity_violation": 0.0}
    flat, z, groups = shells(grid)
    t = z @ xi
    v = u.values.ravel()[flat]
    worst = 0.0
    for s in groups:
        o = s[np.argsort(t[s], kind="stable")]
        tt, vv = t[o], v[o]
        cuts = np.flatnonzero(np.diff(tt) > tie_tol * max(1.0, abs(tt).max())) + 1
        levels = np.split(vv, cuts)
        tot = sum(max(0.0, a.max() - b.min()) for a, b in zip(levels[:-1], levels[1:]))
        worst = max(worst, tot)
    return {"xi": tuple(float(c) for c in xi), "xi_moment": None if xi_m is None else tuple(float(c) for c in xi_m),
            "radial": False, "monotonicity_violation": float(worst)}


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "phi", "residual", "max_point_index"])
        for it, phi, res, k in trace:
            w.writerow([it, repr(float(phi)), repr(float(res)), k])
