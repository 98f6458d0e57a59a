"""Second variation of the energy, its first eigenpair and radial-symmetry checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .energy import ProblemData, hessian, residual
from .errors import ExponentBelowTwo, InvalidProblemData, IterationStall, NotPlanarOrAxisymmetric, SingularMass
from .grid import Grid, GridFunction, check_same_grid, gradient, integrate, random_smooth
from .solvers import angular_deviation, shells

__all__ = [
    "WeightField",
    "LinearizedForm",
    "SpectrumResult",
    "weight_field",
    "assemble_Lu",
    "first_eigenpair",
    "angular_derivative",
    "angular_derivative_test",
    "radial_symmetry_verdict",
]

RHO_FLOOR_REL = 1e-10
DEAD_BAND = 1e-6
EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WeightField:
    grid: Grid
    rho: np.ndarray = field(repr=False)
    floor: float
    floor_applied: bool


def weight_field(u: GridFunction, data: ProblemData) -> WeightField:
    """rho = |Du|^(p-2) at the nodes, floored at 1e-10 max(rho)."""
    grid = check_same_grid(u, data.p)
    p = data.p.p
    if p[grid.mask].min() < 2:
        raise ExponentBelowTwo("weight needs p >= 2")
    mag = gradient(u).magnitude
    with np.errstate(divide="ignore"):
        rho = np.where(p == 2, 1.0, mag ** (p - 2))
    rho = np.where(grid.mask, rho, 0.0)
    peak = float(rho[grid.mask].max())
    floor = RHO_FLOOR_REL * peak
    low = grid.mask & (rho < floor)
    rho = np.where(low, floor, rho)
    return WeightField(grid, rho, floor, bool(low.any()))


@dataclass(frozen=True, eq=False)
class LinearizedForm:
    """The symmetric bilinear form L_u on interior node values.

    ``matrix`` holds L_u(e_i, e_j) for interior unit vectors, so
    ``L_u(v, w) = v_int . matrix . w_int``.
    """

    grid: Grid
    matrix: sp.csr_matrix = field(repr=False)
    rho_floor_rel: float

    def _vec(self, v) -> np.ndarray:
        if isinstance(v, GridFunction):
            check_same_grid(self.grid, v)
            return v.values[self.grid.mask]
        return np.asarray(v, dtype=float)

    def __call__(self, v, w) -> float:
        return float(self._vec(v) @ (self.matrix @ self._vec(w)))

    def apply(self, v) -> np.ndarray:
        return self.matrix @ self._vec(v)

    def rayleigh(self, v) -> float:
        x = self._vec(v)
        return float(x @ (self.matrix @ x)) / (float(x @ x) * self.grid.cell_volume)


def assemble_Lu(u: GridFunction, data: ProblemData) -> LinearizedForm:
    """Second variation of the energy at u, with the corner weights floored."""
    grid = check_same_grid(u, data.p)
    if data.p.p[grid.mask].min() < 2:
        raise ExponentBelowTwo("linearized form needs p >= 2")
    data.source_derivative(np.zeros(grid.shape))  # raises MissingDerivative
    A = hessian(u, data, rho_floor_rel=RHO_FLOOR_REL)
    return LinearizedForm(grid, A, RHO_FLOOR_REL)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    mu1: float
    phi1: GridFunction
    sign_uniform: bool
    stability: str
    rayleigh_trace: list = field(repr=False)
    non_degenerate: bool = True
    mu_near_zero: float = float("nan")
    floor_applied: bool = False
    iterations: int = 0


def _gershgorin_lower(B: sp.csr_matrix) -> float:
    d = B.diagonal()
    off = np.asarray(abs(B).sum(axis=1)).ravel() - np.abs(d)
    return float((d - off).min())


def _classify(mu1: float, near_zero: float) -> str:
    if abs(mu1) <= DEAD_BAND:
        return "degenerate_zero"
    if mu1 > DEAD_BAND:
        return "semi_stable"
    return "non_degenerate" if abs(near_zero) > DEAD_BAND else "unstable"


def first_eigenpair(u: GridFunction, data: ProblemData, form: LinearizedForm | None = None,
                    max_iters: int = 20000) -> SpectrumResult:
    """Smallest eigenvalue of L_u relative to the L^2 mass, by shifted inverse iteration.

    The shift sits one unit below a Gershgorin lower bound, so the shifted
    operator is positive definite and the iteration started from a positive
    vector converges to the first eigenpair.
    """
    grid = check_same_grid(u, data.p)
    form = assemble_Lu(u, data) if form is None else form
    dv = grid.cell_volume
    if not dv > 0:
        raise SingularMass("cell volume must be positive")
    B = sp.csr_matrix(form.matrix / dv)
    n = B.shape[0]
    shift = _gershgorin_lower(B) - 1.0
    lu = splu(sp.csc_matrix(B - shift * sp.identity(n)))
    x = np.ones(n) / np.sqrt(n)
    trace = []
    mu = float(x @ (B @ x))
    for it in range(1, max_iters + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        Bx = B @ x
        mu = float(x @ Bx)
        trace.append(mu)
        res = float(np.linalg.norm(Bx - mu * x))
        if res <= EIG_TOL * max(1.0, abs(mu)):
            break
        if len(trace) > 50 and abs(trace[-50] - mu) <= 1e-15 * max(1.0, abs(mu)) and res > 1e-6:
            raise IterationStall(f"inverse iteration stalled at residual {res:.3e}")
    else:
        raise IterationStall(f"no convergence in {max_iters} inverse iterations")
    if x.sum() < 0:
        x = -x
    vals = np.zeros(grid.shape)
    vals[grid.mask] = x / np.sqrt(dv)
    phi1 = GridFunction(grid, vals)
    inf = float(np.abs(x).max())
    sign_uniform = bool(x.min() * x.max() >= -1e-8 * inf ** 2)
    if abs(mu) <= DEAD_BAND:
        near = mu
    elif mu > DEAD_BAND:
        near = mu
    else:
        near = float(eigsh(sp.csc_matrix(B), k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0])
    w = weight_field(u, data)
    return SpectrumResult(
        mu1=mu,
        phi1=phi1,
        sign_uniform=sign_uniform,
        stability=_classify(mu, near),
        rayleigh_trace=trace,
        non_degenerate=bool(abs(near) > DEAD_BAND),
        mu_near_zero=near,
        floor_applied=w.floor_applied,
        iterations=it,
    )


def angular_derivative(u: GridFunction, plane=(0, 1)) -> GridFunction:
    """Rotational derivative x_i d_j u - x_j d_i u in the coordinate plane (i, j)."""
    grid = u.grid
    i, j = plane
    g = gradient(u).components
    c = grid.center
    xi = grid.points[i] - c[i]
    xj = grid.points[j] - c[j]
    return GridFunction.from_array(grid, xi * g[j] - xj * g[i])


def _h1_norm(v: GridFunction) -> float:
    g = gradient(v).components
    return float(np.sqrt(integrate((g ** 2).sum(axis=0), v.grid) + integrate(v.values ** 2, v.grid)))


def _interior_cutoff(grid: Grid) -> np.ndarray:
    """Smooth weight supported in the inner three quarters of the radial range.

    The stair-stepped discrete boundary is not rotation invariant, so the
    rotational derivative of a discrete solution is O(1) in a layer of
    width h there; test functions are kept clear of that layer.
    """
    r_in, r_out = grid.radii
    lo = r_in + 0.125 * (r_out - r_in) if grid.domain_kind == "annulus" else -np.inf
    hi = r_out - 0.25 * (r_out - max(r_in, 0.0))
    r = grid.radius
    if np.isfinite(lo):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = (r - mid) / half
    else:
        t = r / hi
    return np.clip(1 - t ** 2, 0, None) ** 3


def angular_derivative_test(u: GridFunction, data: ProblemData, n_tests: int = 50, seed: int = 0,
                            form: LinearizedForm | None = None) -> dict:
    """Size of L_u(u_theta, .) over seeded smooth test functions, in the H^1 dual norm.

    Test functions are random smooth functions times an interior cutoff, so
    the report measures interior consistency and shrinks under refinement.
    """
    grid = check_same_grid(u, data.p)
    if not grid.is_radial or grid.ndim not in (2, 3):
        raise NotPlanarOrAxisymmetric("needs a disk, annulus or ball grid")
    form = assemble_Lu(u, data) if form is None else form
    planes = [(0, 1)] if grid.ndim == 2 else [(0, 1), (0, 2), (1, 2)]
    rng = np.random.default_rng(seed)
    cut = _interior_cutoff(grid)
    tests = [GridFunction.from_array(grid, random_smooth(grid, rng).values * cut) for _ in range(n_tests)]
    norms = [_h1_norm(t) for t in tests]
    best, best_plane, theta_norms = 0.0, 0, []
    for idx, pl in enumerate(planes):
        ut = angular_derivative(u, pl)
        Lut = form.apply(ut)
        theta_norms.append(float(np.sqrt(integrate(ut.values ** 2, grid))))
        val = max(abs(float(Lut @ t.values[grid.mask])) / nt for t, nt in zip(tests, norms) if nt > 0)
        if val >= best:
            best, best_plane = val, idx
    return {"residual_form_norm": best, "theta_index": best_plane, "u_theta_l2": theta_norms}


def _is_radial_field(grid: Grid, arr: np.ndarray) -> bool:
    flat, _, groups = shells(grid)
    v = np.asarray(arr).ravel()[flat]
    return all(np.ptp(v[s]) <= 1e-12 * max(1.0, np.abs(v[s]).max()) for s in groups)


def radial_symmetry_verdict(u: GridFunction, data: ProblemData, residual_tol: float = 1e-6,
                            spectrum: SpectrumResult | None = None) -> dict:
    """Angular spread of u against the stability hypotheses of the radial-symmetry result.

    The hypotheses hold when mu1 >= -1e-6 (semi-stable) or when 0 is not an
    eigenvalue. Then the verdict is ``consistent_with_theorem`` if the
    spread is at most 10 h and ``contradiction`` otherwise. Functions that
    are not solutions (residual above ``residual_tol``) get ``not_applicable``.
    """
    grid = check_same_grid(u, data.p)
    if not grid.is_radial:
        raise NotPlanarOrAxisymmetric("needs a disk, annulus or ball grid")
    for name, arr in data.fields().items():
        if not _is_radial_field(grid, arr):
            raise InvalidProblemData(f"{name} is not radial")
    dev = angular_deviation(u)
    res = float(np.abs(residual(u, data).values).max())
    out = {"angular_deviation": dev, "residual": res, "tolerance": 10 * grid.h}
    if res > residual_tol:
        out.update(mu1=float("nan"), verdict="not_applicable", stability="n/a")
        return out
    spec = first_eigenpair(u, data) if spectrum is None else spectrum
    applies = spec.mu1 >= -DEAD_BAND or spec.non_degenerate
    if not applies:
        verdict = "not_applicable"
    elif dev <= 10 * grid.h:
        verdict = "consistent_with_theorem"
    else:
        verdict = "contradiction"
    out.update(mu1=spec.mu1, stability=spec.stability, verdict=verdict)
    return out
