"""Problem data, the energy functional, its gradient and its Hessian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import AsymmetricDomain, ExponentBelowTwo, InvalidProblemData, MissingDerivative
from .grid import Grid, GridFunction, check_same_grid, random_smooth
from .polarization import HalfSpace, _box_map, polarize
from .spaces import ExponentField, sobolev_norm

__all__ = [
    "Nonlinearity",
    "ProblemData",
    "ARConditionSpec",
    "energy",
    "energy_terms",
    "residual",
    "hessian",
    "check_ar_condition",
    "energy_polarization_invariance",
    "check_mountain_pass_geometry",
    "is_symmetric_under",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_NODES = 0.5 * (_GL_NODES + 1)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class Nonlinearity:
    """Source term f(x, s) with its derivative and, optionally, its primitive.

    ``kind="power"`` means f = K (s+)^q taken from the problem data; the
    callables are then unused. For ``kind="general"`` the callables take the
    node coordinate array (shape ``(N, *shape)``) and the value array.
    """

    kind: str = "power"
    f: object = None
    dfds: object = None
    F: object = None
    label: str = "power"

    @classmethod
    def general(cls, f, dfds=None, F=None, label="general") -> "Nonlinearity":
        return cls("general", f, dfds, F, label)

    @classmethod
    def constant(cls, c: float) -> "Nonlinearity":
        c = float(c)
        return cls.general(
            lambda x, s: np.full_like(s, c),
            lambda x, s: np.zeros_like(s),
            lambda x, s: c * s,
            label=f"constant:{c!r}",
        )

    @classmethod
    def truncated_cubic(cls, T: float, source: float = 0.0) -> "Nonlinearity":
        """f = source + min(s+, T)^3, a cubic capped at level T."""
        T, a = float(T), float(source)

        def f(x, s):
            return a + np.clip(s, 0, T) ** 3

        def dfds(x, s):
            return np.where((s > 0) & (s < T), 3 * s ** 2, 0.0)

        def F(x, s):
            sp_ = np.clip(s, 0, None)
            low = np.minimum(sp_, T) ** 4 / 4
            return a * s + low + T ** 3 * np.maximum(sp_ - T, 0)

        name = "truncated_cubic_source" if a else "truncated_cubic"
        return cls.general(f, dfds, F, label=f"{name}:{T!r}")


def _field(grid: Grid, value, name: str) -> np.ndarray:
    arr = np.array(np.broadcast_to(np.asarray(value, dtype=float), grid.shape))
    if not np.all(np.isfinite(arr)):
        raise InvalidProblemData(f"{name} has non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Coefficients of the Dirichlet problem on one grid.

    ``V`` must be nonnegative; the strict lower bound V >= V0 > 0 and the
    subcritical growth window are reported by :meth:`structure_report`, and
    the growth window is enforced in power mode.
    """

    p: ExponentField
    V: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    q: np.ndarray | None = field(default=None, repr=False)
    nonlinearity: Nonlinearity = Nonlinearity()

    def __post_init__(self):
        g = self.p.grid
        object.__setattr__(self, "V", _field(g, self.V, "V"))
        object.__setattr__(self, "K", _field(g, self.K, "K"))
        if self.nonlinearity.kind == "power":
            if self.q is None:
                raise InvalidProblemData("power nonlinearity needs an exponent q")
            object.__setattr__(self, "q", _field(g, self.q, "q"))
        elif self.nonlinearity.f is None:
            raise InvalidProblemData("general nonlinearity needs a callable f")
        m = g.mask
        if np.any(self.V[m] < 0):
            raise InvalidProblemData("V must be nonnegative")
        if self.nonlinearity.kind == "power":
            rep = self.structure_report()
            if rep["gap_lower"] <= 0:
                raise InvalidProblemData(f"inf(q - p + 1) = {rep['gap_lower']} must be positive")
            if rep["gap_upper"] <= 0:
                raise InvalidProblemData(f"inf(p* - q - 1) = {rep['gap_upper']} must be positive")

    @property
    def grid(self) -> Grid:
        return self.p.grid

    @property
    def dim(self) -> int:
        return self.grid.ndim

    def structure_report(self) -> dict:
        m = self.grid.mask
        p = self.p.p[m]
        N = self.dim
        with np.errstate(divide="ignore"):
            pstar = np.where(p < N, p * N / (N - p), np.inf)
        out = {"V_min": float(self.V[m].min())}
        if self.q is not None:
            q = self.q[m]
            out["gap_lower"] = float((q - p + 1).min())
            out["gap_upper"] = float((pstar - q - 1).min())
        return out

    # nonlinearity evaluated at node values
    def source(self, s: np.ndarray) -> np.ndarray:
        if self.nonlinearity.kind == "power":
            return self.K * np.maximum(s, 0) ** self.q
        return np.asarray(self.nonlinearity.f(self.grid.points, s), dtype=float)

    def source_derivative(self, s: np.ndarray) -> np.ndarray:
        if self.nonlinearity.kind == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                d = self.K * self.q * np.maximum(s, 0) ** (self.q - 1)
            return np.where(s > 0, d, 0.0)
        if self.nonlinearity.dfds is None:
            raise MissingDerivative("general nonlinearity without df/ds")
        return np.asarray(self.nonlinearity.dfds(self.grid.points, s), dtype=float)

    def primitive(self, s: np.ndarray) -> np.ndarray:
        if self.nonlinearity.kind == "power":
            return self.K * np.maximum(s, 0) ** (self.q + 1) / (self.q + 1)
        if self.nonlinearity.F is not None:
            return np.asarray(self.nonlinearity.F(self.grid.points, s), dtype=float)
        # Gauss-Legendre on [0, s]
        acc = np.zeros_like(s)
        for t, w in zip(_GL_NODES, _GL_WEIGHTS):
            acc += w * self.nonlinearity.f(self.grid.points, t * s)
        return s * acc

    def potential_derivative(self, s: np.ndarray) -> np.ndarray:
        """d/ds of f(x,s) - V |s|^(p-2) s; the zeroth-order part of the second variation."""
        p = self.p.p
        return self.source_derivative(s) - (p - 1) * self.V * np.abs(s) ** (p - 2)

    def fields(self) -> dict:
        out = {"p": self.p.p, "V": self.V, "K": self.K}
        if self.q is not None:
            out["q"] = self.q
        return out


@dataclass(frozen=True)
class ARConditionSpec:
    mu: float
    R: float


def energy_terms(u: GridFunction, data: ProblemData) -> dict:
    """The three pieces of the energy: gradient, potential and source."""
    grid = check_same_grid(u, data.p)
    v = u.values
    p = data.p.p
    e_grad, _ = kernels.corner_energy(v, p, np.ones(grid.shape), grid.spacing, want_grad=False)
    m = grid.mask
    dv = grid.cell_volume
    e_pot = float(np.sum((data.V * np.abs(v) ** p / p)[m])) * dv
    e_src = float(np.sum(data.primitive(v)[m])) * dv
    return {"gradient": e_grad, "potential": e_pot, "source": e_src}


def energy(u: GridFunction, data: ProblemData) -> float:
    t = energy_terms(u, data)
    return t["gradient"] + t["potential"] - t["source"]


def residual(u: GridFunction, data: ProblemData) -> GridFunction:
    """Node-wise gradient of the energy divided by the cell volume.

    Pairing with a direction through :func:`integrate` gives the directional
    derivative of :func:`energy` up to round-off.
    """
    grid = check_same_grid(u, data.p)
    v = u.values
    p = data.p.p
    _, dgrad = kernels.corner_energy(v, p, np.ones(grid.shape), grid.spacing, want_grad=True)
    # |v|^(p-1) sign(v) avoids 0 * inf at v = 0 when p < 2
    pot = data.V * np.abs(v) ** (p - 1) * np.sign(v)
    r = dgrad / grid.cell_volume + pot - data.source(v)
    return GridFunction(grid, np.where(grid.mask, r, 0.0))


def _difference_ops(grid: Grid):
    """Sparse forward/backward difference operators box -> box, mask columns."""
    cols = np.flatnonzero(grid.mask.ravel())
    n = int(np.prod(grid.shape))
    idx = np.arange(n).reshape(grid.shape)
    fwd, bwd = [], []
    for k, h in enumerate(grid.spacing):
        nb_p = np.full(grid.shape, -1)
        nb_m = np.full(grid.shape, -1)
        sl_hi = tuple(slice(1, None) if j == k else slice(None) for j in range(grid.ndim))
        sl_lo = tuple(slice(None, -1) if j == k else slice(None) for j in range(grid.ndim))
        nb_p[sl_lo] = idx[sl_hi]
        nb_m[sl_hi] = idx[sl_lo]
        eye = sp.identity(n, format="csr")
        ok = nb_p.ravel() >= 0
        shift_p = sp.csr_matrix((np.ones(ok.sum()), (np.arange(n)[ok], nb_p.ravel()[ok])), shape=(n, n))
        ok = nb_m.ravel() >= 0
        shift_m = sp.csr_matrix((np.ones(ok.sum()), (np.arange(n)[ok], nb_m.ravel()[ok])), shape=(n, n))
        fwd.append(((shift_p - eye) / h).tocsc()[:, cols].tocsr())
        bwd.append(((eye - shift_m) / h).tocsc()[:, cols].tocsr())
    return fwd, bwd


def hessian(u: GridFunction, data: ProblemData, rho_floor_rel: float = 0.0) -> sp.csr_matrix:
    """Second derivative of the energy with respect to the interior node values.

    The isotropic corner weight |G|^(p-2) is floored at ``rho_floor_rel``
    times its largest value, which keeps the form definite where the
    gradient vanishes. Requires p >= 2.
    """
    grid = check_same_grid(u, data.p)
    p = data.p.p
    if p[grid.mask].min() < 2:
        raise ExponentBelowTwo("second variation needs p >= 2")
    ndim = grid.ndim
    c = grid.cell_volume / 2 ** ndim
    fwd, bwd = _difference_ops(grid)
    uv = u.values[grid.mask]
    pr = p.ravel()
    corners = []
    for signs in np.ndindex(*([2] * ndim)):
        ops = [bwd[k] if s else fwd[k] for k, s in enumerate(signs)]
        G = np.stack([op @ uv for op in ops])
        r2 = (G ** 2).sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r2 > 0, r2 ** (0.5 * pr - 1), np.where(pr == 2, 1.0, 0.0))
            b = np.where(r2 > 0, (pr - 2) * r2 ** (0.5 * pr - 2), 0.0)
        corners.append((ops, G, a, b))
    floor = rho_floor_rel * max(float(a.max()) for _, _, a, _ in corners)
    nint = grid.n_interior
    A = sp.csr_matrix((nint, nint))
    for ops, G, a, b in corners:
        a = np.maximum(a, floor)
        for k in range(ndim):
            for l in range(ndim):
                w = b * G[k] * G[l]
                if k == l:
                    w = w + a
                A = A + ops[k].T @ sp.diags(c * w) @ ops[l]
    zeroth = -data.potential_derivative(u.values)[grid.mask] * grid.cell_volume
    A = A + sp.diags(zeroth)
    return sp.csr_matrix(0.5 * (A + A.T))


def check_ar_condition(data: ProblemData, spec: ARConditionSpec, s_samples: int = 64) -> dict:
    """Sampled check of mu F(x,s) <= f(x,s) s for s in [R, 1000 R]."""
    grid = data.grid
    m = grid.mask
    if not (spec.mu - data.p.p[m]).min() > 0:
        raise InvalidProblemData("AR exponent mu must exceed p everywhere")
    if data.nonlinearity.kind == "power":
        qmin = float(data.q[m].min())
        holds = spec.mu <= qmin + 1 + 1e-12
        margin = (data.q + 1 - spec.mu)
        worst = np.unravel_index(np.argmin(np.where(m, margin, np.inf)), grid.shape)
        return {"holds": bool(holds), "worst_node": tuple(int(i) for i in worst), "mode": "analytic"}
    s_vals = np.geomspace(spec.R, 1e3 * spec.R, s_samples)
    worst_val, worst_node = np.inf, None
    for s in s_vals:
        ss = np.full(grid.shape, s)
        lhs = data.source(ss) * s
        rhs = spec.mu * data.primitive(ss)
        gap = np.where(m, (lhs - rhs) / np.maximum(1.0, np.abs(lhs)), np.inf)
        i = int(np.argmin(gap))
        if gap.ravel()[i] < worst_val:
            worst_val = float(gap.ravel()[i])
            worst_node = tuple(int(j) for j in np.unravel_index(i, grid.shape))
    return {"holds": bool(worst_val >= -1e-12), "worst_node": worst_node, "mode": "sampled",
            "worst_margin": worst_val}


def is_symmetric_under(data: ProblemData, H: HalfSpace) -> bool:
    """True when every coefficient field is invariant under the reflection of H."""
    grid = data.grid
    _, target, _, _, _ = _box_map(grid, H)
    ok = target >= 0
    for arr in data.fields().values():
        if not np.allclose(arr[ok], arr.ravel()[target[ok]], rtol=1e-12, atol=1e-12):
            return False
    # general callables cannot be inspected and are taken to be invariant
    return True


def energy_polarization_invariance(u: GridFunction, data: ProblemData, H: HalfSpace) -> dict:
    """Compare the energy of u and of its polarization.

    The zeroth-order terms agree to round-off; the gradient term differs
    only through cells that straddle the switching set, so the tolerance is
    ``h * E_grad(u) + 1e-10``.
    """
    grid = check_same_grid(u, data.p)
    _, target, exact, inside, _ = _box_map(grid, H)
    if not np.all(exact[grid.mask] & inside[grid.mask]) or not is_symmetric_under(data, H):
        raise AsymmetricDomain("data or mask not invariant under the reflection")
    uh = polarize(u, H)
    t0, t1 = energy_terms(u, data), energy_terms(uh, data)
    phi_u = t0["gradient"] + t0["potential"] - t0["source"]
    phi_uh = t1["gradient"] + t1["potential"] - t1["source"]
    tol = grid.h * t0["gradient"] + 1e-10
    zeroth = max(abs(t1["potential"] - t0["potential"]), abs(t1["source"] - t0["source"]))
    return {
        "phi_u": phi_u,
        "phi_uH": phi_uh,
        "gap": abs(phi_uh - phi_u),
        "tol": tol,
        "zeroth_gap": zeroth,
        "equal": bool(abs(phi_uh - phi_u) <= tol and zeroth <= 1e-10),
    }


def check_mountain_pass_geometry(data: ProblemData, xi: GridFunction, r: float = 1e-2,
                                 n_samples: int = 50, seed: int = 0, t_max: float = 2.0 ** 60) -> dict:
    """Positive energy on a small Sobolev sphere and phi(t xi) -> -inf along a ray."""
    rng = np.random.default_rng(seed)
    sphere = []
    for _ in range(n_samples):
        v = random_smooth(data.grid, rng)
        v = v.positive_part() if rng.uniform() < 0.5 else v
        nv = sobolev_norm(v, data.p)
        if nv == 0:
            continue
        sphere.append(energy(v * (r / nv), data))
    ts, phis = [], []
    t = 1.0
    while t <= t_max:
        ts.append(t)
        phis.append(energy(xi * t, data))
        if phis[-1] < -1e6 * max(1.0, abs(phis[0])):
            break
        t *= 2
    phis_a = np.array(phis)
    return {
        "sphere_min": float(min(sphere)),
        "sphere_positive": bool(min(sphere) > 0),
        "ray_t": ts,
        "ray_phi": phis,
        "ray_to_minus_inf": bool(phis_a[-1] < 0 and np.all(np.diff(phis_a[-3:]) < 0)),
    }
