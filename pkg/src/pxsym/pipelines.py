"""Named experiment pipelines and the run manifest they fill in."""

from __future__ import annotations

import configparser
import io
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ExperimentConfig
from .diagnostics import potential_bound_sweep, riesz_potential, summability_integral, weighted_sobolev_ratio
from .energy import Nonlinearity, ProblemData, energy, energy_polarization_invariance, residual
from .errors import PxsymError
from .grid import GridFunction, build_grid, gradient, integrate, random_noise, random_smooth, write_csv
from .polarization import (
    HalfSpace,
    check_contraction,
    iterated_symmetrize,
    modular_invariance,
    polarize,
)
from .solvers import (
    foliated_schwarz_profile,
    minimize_energy,
    mountain_pass,
    verify_solution_pair,
    write_trace,
)
from .spaces import ExponentField, check_holder, check_norm_modular_relation, luxemburg_norm, modular
from .spectrum import angular_derivative_test, assemble_Lu, first_eigenpair, radial_symmetry_verdict

__all__ = ["StageError", "RunManifest", "run_experiment", "PIPELINES"]


class StageError(RuntimeError):
    """A library error raised inside a named pipeline stage."""

    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        self.original = exc
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")


@contextmanager
def stage(name: str):
    try:
        yield
    except PxsymError as exc:
        raise StageError(name, exc) from exc


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunManifest:
    config: ExperimentConfig
    results: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    wall_clock: float = 0.0

    def record(self, section: str, **values) -> None:
        self.results.setdefault(section, {}).update(values)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.assertions.append((name, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.assertions)

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        echo = configparser.ConfigParser(interpolation=None)
        echo.optionxform = str
        echo.read_string(self.config.to_ini())
        for sec in echo.sections():
            cp["config." + sec] = dict(echo[sec])
        cp["run"] = {
            "library_version": __version__,
            "backend": kernels.BACKEND,
            "experiment": self.config.experiment,
            "seed": str(self.config.seed),
            "wall_clock_s": f"{self.wall_clock:.3f}",
        }
        for sec, vals in self.results.items():
            cp["results." + sec] = {k: _fmt(v) for k, v in vals.items()}
        cp["assertions"] = {name: "PASS" if ok else "FAIL" for name, ok, _ in self.assertions}
        details = {name: d for name, _, d in self.assertions if d}
        if details:
            cp["assertion_details"] = details
        n_ok = sum(ok for _, ok, _ in self.assertions)
        cp["summary"] = {"passed": str(n_ok), "failed": str(len(self.assertions) - n_ok),
                         "status": "PASS" if self.passed else "FAIL"}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# pipelines


def _write_solution(run_dir: Path, name: str, u) -> None:
    write_csv(u, run_dir / name)


def _mp_symmetric(cfg: ExperimentConfig, man: RunManifest, run_dir: Path) -> None:
    with stage("setup"):
        grid = cfg.build_grid()
        data = cfg.build_problem(grid)
        H = cfg.build_halfspace(grid.ndim)
        opts = cfg.build_solver(H)
    with stage("mountain_pass"):
        sol = mountain_pass(data, opts)
    man.record("solve", classification=sol.classification, iterations=sol.iterations,
               phi_u=sol.energy, residual=sol.residual_norm, u_min=float(sol.u.interior.min()))
    _write_solution(run_dir, "solution.csv", sol.u)
    write_trace(sol.trace, run_dir / "trace.csv")
    with stage("verify_solution_pair"):
        pair = verify_solution_pair(sol.u, data, H)
        inv = energy_polarization_invariance(sol.u, data, H)
    _write_solution(run_dir, "solution_H.csv", polarize(sol.u, H))
    man.record("pair", res_u=pair["res_u"], res_uH=pair["res_uH"], phi_uH=pair["phi_uH"],
               phi_gap=pair["phi_gap"], phi_gap_tol=inv["tol"], uH_equals_u=pair["uH_equals_u"])
    man.check("converged", sol.classification == "mountain_pass" and sol.residual_norm <= opts.residual_tol,
              f"residual {sol.residual_norm:.3e}")
    man.check("phi_positive", sol.energy > 0, f"phi {sol.energy!r}")
    man.check("nonnegative", float(sol.u.interior.min()) >= -1e-12)
    man.check("phi_gap_within_tol", inv["equal"], f"gap {pair['phi_gap']:.3e} tol {inv['tol']:.3e}")


def _mp_foliated(cfg: ExperimentConfig, man: RunManifest, run_dir: Path) -> None:
    with stage("setup"):
        grid = cfg.build_grid()
        data = cfg.build_problem(grid)
        H = cfg.build_halfspace(grid.ndim) if cfg.has("halfspace") else None
        opts = cfg.build_solver(H)
        seq = cfg.build_sequence(grid)
    with stage("mountain_pass"):
        sol = mountain_pass(data, opts)
    man.record("solve", classification=sol.classification, iterations=sol.iterations,
               phi_u=sol.energy, residual=sol.residual_norm)
    _write_solution(run_dir, "solution.csv", sol.u)
    write_trace(sol.trace, run_dir / "trace.csv")
    with stage("iterated_symmetrize"):
        ustar, sweeps = iterated_symmetrize(sol.u, seq, return_sweeps=True)
    _write_solution(run_dir, "symmetrized.csv", ustar)
    with stage("foliated_schwarz_profile"):
        prof = foliated_schwarz_profile(ustar, seq)
        prof_u = foliated_schwarz_profile(sol.u, seq)
    osc = sol.u.osc()
    same = np.array_equal(np.sort(ustar.interior), np.sort(sol.u.interior))
    man.record("symmetrize", sweeps=sweeps, xi=prof["xi"], xi_moment=prof["xi_moment"],
               violation=prof["monotonicity_violation"], violation_solution=prof_u["monotonicity_violation"],
               osc=osc, phi_ustar=energy(ustar, data))
    man.check("converged", sol.classification == "mountain_pass" and sol.residual_norm <= opts.residual_tol,
              f"residual {sol.residual_norm:.3e}")
    man.check("phi_positive", sol.energy > 0)
    man.check("equimeasurable", same)
    man.check("foliated_monotone", prof["monotonicity_violation"] <= 5e-3 * osc,
              f"violation {prof['monotonicity_violation']:.3e} osc {osc:.3e}")


def _radial_stability(cfg: ExperimentConfig, man: RunManifest, run_dir: Path) -> None:
    with stage("setup"):
        grid = cfg.build_grid()
        data = cfg.build_problem(grid)
        opts = cfg.build_solver(None)
    with stage("minimize_energy"):
        sol = minimize_energy(data, opts)
    man.record("solve", classification=sol.classification, iterations=sol.iterations,
               phi_u=sol.energy, residual=sol.residual_norm)
    _write_solution(run_dir, "solution.csv", sol.u)
    write_trace(sol.trace, run_dir / "trace.csv")
    with stage("first_eigenpair"):
        form = assemble_Lu(sol.u, data)
        spec = first_eigenpair(sol.u, data, form=form)
    _write_solution(run_dir, "phi1.csv", spec.phi1)
    man.record("spectrum", mu1=spec.mu1, stability=spec.stability, floor_applied=spec.floor_applied,
               sign_uniform=spec.sign_uniform, eigen_iterations=spec.iterations)
    with stage("angular_derivative_test"):
        ang = angular_derivative_test(sol.u, data, seed=cfg.seed, form=form)
    with stage("radial_symmetry_verdict"):
        verdict = radial_symmetry_verdict(sol.u, data, residual_tol=max(1e-6, opts.residual_tol), spectrum=spec)
    man.record("radial", angular_deviation=verdict["angular_deviation"], tolerance=verdict["tolerance"],
               verdict=verdict["verdict"], residual_form_norm=ang["residual_form_norm"],
               u_theta_l2=ang["u_theta_l2"])
    man.check("converged", sol.classification == "minimizer")
    man.check("semi_stable", spec.mu1 >= -1e-4, f"mu1 {spec.mu1!r}")
    man.check("phi1_sign_uniform", spec.sign_uniform)
    man.check("radial_verdict", verdict["verdict"] == "consistent_with_theorem",
              f"deviation {verdict['angular_deviation']:.3e}")


def _diagnostics(cfg: ExperimentConfig, man: RunManifest, run_dir: Path) -> None:
    d = "diagnostics"
    r = cfg._num(d, "r", float, 0.5)
    gamma = cfg._num(d, "gamma", float, 0.0)
    q = cfg._num(d, "q", float, 1.5)
    w_samples = cfg._num(d, "w_samples", int, 20)
    theta_samples = cfg._num(d, "theta_samples", int, 100)
    mu = cfg._num(d, "mu", float, 0.5)
    theta_m = cfg._num(d, "theta_m", float, 2.0)
    theta_q = cfg._num(d, "theta_q", float, 4.0)
    with stage("setup"):
        grid = cfg.build_grid()
        data = cfg.build_problem(grid)
        opts = cfg.build_solver(None)
    with stage("minimize_energy"):
        sol = minimize_energy(data, opts)
    _write_solution(run_dir, "solution.csv", sol.u)
    write_trace(sol.trace, run_dir / "trace.csv")
    man.record("solve", classification=sol.classification, residual=sol.residual_norm, phi_u=sol.energy)
    with stage("summability_integral"):
        summ = summability_integral(sol.u, data, r, gamma)
    with open(run_dir / "summability.csv", "w") as fh:
        fh.write(",".join([f"y{k}" for k in range(grid.ndim)] + ["integral"]) + "\n")
        for y, val in summ.values:
            fh.write(",".join(repr(c) for c in y) + "," + repr(val) + "\n")
    with stage("weighted_sobolev_ratio"):
        sob = weighted_sobolev_ratio(sol.u, data, q, w_samples, r=r, gamma=gamma, seed=cfg.seed)
    with open(run_dir / "sobolev.csv", "w") as fh:
        fh.write("sample,ratio\n")
        for i, v in enumerate(sob.ratios):
            fh.write(f"{i},{v!r}\n")
    with stage("riesz_potential"):
        g = random_smooth(grid, np.random.default_rng(cfg.seed))
        g = GridFunction.from_array(grid, np.abs(g.values))
        V1 = riesz_potential(g, 1.0)
        tot = integrate(g)
        err = float(np.abs(V1.interior - tot).max()) / tot
        theta = potential_bound_sweep(grid, mu, theta_m, theta_q, n_samples=theta_samples, seed=cfg.seed)
    with open(run_dir / "theta.csv", "w") as fh:
        fh.write("sample,theta\n")
        for i, v in enumerate(theta.thetas):
            fh.write(f"{i},{v!r}\n")
    man.record("summability", r=r, gamma=gamma, max_value=summ.max_value, n_y=len(summ.values))
    man.record("sobolev", t_bar=sob.t_bar, two_star=sob.two_star, q=q, max_ratio=sob.max_ratio)
    man.record("riesz", mu1_rel_error=err, theta_mu=mu, theta_m=theta.m, theta_q=theta.q,
               theta_max=theta.max_theta, theta_min=theta.min_theta)
    man.check("converged", sol.classification == "minimizer")
    man.check("summability_finite", math.isfinite(summ.max_value))
    man.check("sobolev_finite", math.isfinite(sob.max_ratio))
    man.check("riesz_mu1_exact", err <= 1e-12, f"relative error {err:.3e}")
    man.check("theta_finite", math.isfinite(theta.max_theta) and theta.min_theta > 0)


# ---------------------------------------------------------------------------
# property suite: each group returns (passed, detail)


def _suite_groups(seed: int, samples: int):
    rng = np.random.default_rng(seed)
    heavy = max(10, samples // 10)
    disk = build_grid("disk", 33)
    interval = build_grid("interval", 65)
    annulus = build_grid("annulus", 33, (0.4, 1.0))
    p_int = ExponentField.from_function(interval, lambda x: 2 + x[0])
    p_disk = ExponentField.from_function(disk, lambda x: 2 + np.sqrt((x ** 2).sum(0)))
    H = HalfSpace((-1.0, 0.0))
    Hd = HalfSpace.from_direction((-1.0, -1.0))

    def grid_symmetry():
        ok = True
        for g in (disk, annulus):
            m = g.mask
            ok &= np.array_equal(m, m[::-1, :]) and np.array_equal(m, m[:, ::-1]) and np.array_equal(m, m.T)
        rect = build_grid("rectangle", 17)
        u = rect.sample(lambda x: 0.3 + 2 * x[0] - x[1])
        gr = gradient(u).components
        inner = np.zeros(rect.shape, bool)
        inner[2:-2, 2:-2] = True
        ok &= np.allclose(gr[0][inner], 2, atol=1e-12, rtol=0) and np.allclose(gr[1][inner], -1, atol=1e-12, rtol=0)
        return ok, ""

    def integrate_linearity():
        worst = 0.0
        for _ in range(samples):
            f, g = random_noise(disk, rng), random_noise(disk, rng)
            a, b = rng.normal(size=2)
            lhs = integrate(a * f + b * g)
            rhs = a * integrate(f) + b * integrate(g)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        return worst <= 1e-12, f"worst {worst:.2e}"

    def reflection_invariance():
        ok = True
        for _ in range(samples):
            f = random_noise(disk, rng)
            ok &= math.isclose(integrate(f), integrate(f.values[::-1, :], disk), rel_tol=1e-12, abs_tol=1e-14)
        return ok, ""

    def luxemburg_unit_modular():
        worst = 0.0
        for _ in range(samples):
            u = random_noise(interval, rng, scale=rng.uniform(0.1, 10))
            n = luxemburg_norm(u, p_int)
            worst = max(worst, abs(modular(u / n, p_int) - 1))
        return worst <= 1e-9, f"worst {worst:.2e}"

    def luxemburg_homogeneity():
        worst = 0.0
        for _ in range(samples // 3 + 1):
            u = random_noise(interval, rng)
            n = luxemburg_norm(u, p_int)
            for c in (0.1, 1.0, 7.0):
                worst = max(worst, abs(luxemburg_norm(c * u, p_int) - c * n) / (c * n))
        return worst <= 1e-10, f"worst {worst:.2e}"

    def norm_modular_sandwich():
        fails = sum(not check_norm_modular_relation(random_noise(interval, rng, rng.uniform(0.1, 5)), p_int)["holds"]
                    for _ in range(samples))
        return fails == 0, f"{fails} violations"

    def holder():
        fails = sum(not check_holder(random_noise(disk, rng), random_noise(disk, rng), p_disk)["holds"]
                    for _ in range(samples))
        return fails == 0, f"{fails} violations"

    def polarization_idempotence():
        ok = True
        for _ in range(samples):
            u = random_noise(disk, rng)
            for h in (H, Hd):
                uh = polarize(u, h)
                ok &= polarize(uh, h).equals(uh)
        return ok, ""

    def polarization_equimeasurable():
        ok = True
        for _ in range(samples):
            u = random_noise(disk, rng)
            ok &= np.array_equal(np.sort(polarize(u, Hd).interior), np.sort(u.interior))
        return ok, ""

    def polarization_contraction():
        fails = sum(not check_contraction(random_noise(disk, rng), random_noise(disk, rng), H)["holds"]
                    for _ in range(samples))
        return fails == 0, f"{fails} violations"

    def radial_fixed_point():
        u = disk.sample(lambda x: np.exp(-(x ** 2).sum(0)))
        return all(polarize(u, h).equals(u) for h in (H, Hd, HalfSpace((0.0, 1.0)))), ""

    def modular_invariance_zeroth():
        worst = 0.0
        for _ in range(heavy):
            u = random_noise(disk, rng)
            worst = max(worst, modular_invariance(u, H, p_disk)["zeroth_rel_diff"])
        return worst <= 1e-10, f"worst {worst:.2e}"

    def residual_consistency():
        g = build_grid("interval", 33, (0.0, 1.0))
        data = ProblemData(ExponentField.from_function(g, lambda x: 2.2 + 0.3 * x[0]), 1.0, 1.0, 3.0)
        worst = 0.0
        for _ in range(heavy):
            u, z = random_smooth(g, rng), random_smooth(g, rng)
            eps = 1e-5
            fd = (energy(u + eps * z, data) - energy(u - eps * z, data)) / (2 * eps)
            an = integrate(residual(u, data) * z)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-3))
        return worst <= 1e-5, f"worst {worst:.2e}"

    def second_variation():
        g = build_grid("disk", 17)
        data = ProblemData(ExponentField.from_function(g, lambda x: 2.5 + 0.2 * (x ** 2).sum(0)), 1.0, 1.0, 3.0)
        worst_sym, worst_fd = 0.0, 0.0
        for _ in range(heavy):
            # a flat patch of u (Du = 0 on a set) would make the energy only C^(p-2) there
            u = random_smooth(g, rng)
            form = assemble_Lu(u, data)
            v, w, z = (random_smooth(g, rng) for _ in range(3))
            a, b = form(v, w), form(w, v)
            worst_sym = max(worst_sym, abs(a - b) / max(abs(a), 1e-300))
            eps = 1e-4
            fd = (energy(u + eps * z, data) - 2 * energy(u, data) + energy(u - eps * z, data)) / eps ** 2
            an = form(z, z)
            worst_fd = max(worst_fd, abs(fd - an) / abs(an))
        return worst_sym <= 1e-12 and worst_fd <= 1e-3, f"sym {worst_sym:.2e} fd {worst_fd:.2e}"

    def eigen_shift():
        g = build_grid("interval", 65, (0.0, 1.0))
        p2 = ExponentField.constant(g, 2.0)
        base = first_eigenpair(g.zeros(), ProblemData(p2, 0.0, 0.0, nonlinearity=Nonlinearity.constant(0.0)))
        c = 3.0
        shifted = ProblemData(p2, 0.0, 0.0, nonlinearity=Nonlinearity.general(
            lambda x, s: c * s, lambda x, s: np.full_like(s, c), lambda x, s: 0.5 * c * s ** 2))
        sh = first_eigenpair(g.zeros(), shifted)
        return abs((base.mu1 - sh.mu1) - c) <= 1e-9 and base.sign_uniform, f"shift {base.mu1 - sh.mu1!r}"

    def riesz_monotone_linear():
        g = build_grid("disk", 17)
        ok = True
        for _ in range(heavy):
            a = GridFunction.from_array(g, np.abs(random_noise(g, rng).values))
            b = a + GridFunction.from_array(g, np.abs(random_noise(g, rng).values))
            va, vb = riesz_potential(a, 0.6), riesz_potential(b, 0.6)
            ok &= bool(np.all(va.values <= vb.values))
            lin = riesz_potential(2 * a + b, 0.6).values
            ok &= np.allclose(lin, 2 * va.values + vb.values, rtol=1e-12, atol=0)
        return ok, ""

    return [
        ("grid_symmetry", grid_symmetry),
        ("integrate_linearity", integrate_linearity),
        ("reflection_invariance", reflection_invariance),
        ("luxemburg_unit_modular", luxemburg_unit_modular),
        ("luxemburg_homogeneity", luxemburg_homogeneity),
        ("norm_modular_sandwich", norm_modular_sandwich),
        ("holder", holder),
        ("polarization_idempotence", polarization_idempotence),
        ("polarization_equimeasurable", polarization_equimeasurable),
        ("polarization_contraction", polarization_contraction),
        ("radial_fixed_point", radial_fixed_point),
        ("modular_invariance_zeroth", modular_invariance_zeroth),
        ("residual_consistency", residual_consistency),
        ("second_variation", second_variation),
        ("eigen_shift", eigen_shift),
        ("riesz_monotone_linear", riesz_monotone_linear),
    ]


def _property_suite(cfg: ExperimentConfig, man: RunManifest, run_dir: Path) -> None:
    samples = cfg._num("suite", "samples", int, 200)
    for name, fn in _suite_groups(cfg.seed, samples):
        with stage(name):
            ok, detail = fn()
        man.check(name, bool(ok), detail)
    man.record("suite", groups=len(man.assertions), samples=samples)


PIPELINES = {
    "mp_symmetric": _mp_symmetric,
    "mp_foliated": _mp_foliated,
    "radial_stability": _radial_stability,
    "property_suite": _property_suite,
    "diagnostics": _diagnostics,
}


def run_experiment(cfg: ExperimentConfig, run_dir: Path) -> RunManifest:
    """Execute the configured pipeline, writing outputs and the manifest into ``run_dir``."""
    man = RunManifest(cfg)
    t0 = time.perf_counter()
    try:
        PIPELINES[cfg.experiment](cfg, man, run_dir)
    finally:
        man.wall_clock = time.perf_counter() - t0
        (run_dir / "manifest.txt").write_text(man.to_text())
    return man
