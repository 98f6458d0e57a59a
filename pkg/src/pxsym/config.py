"""Experiment configuration: INI text, field presets and conversion to library objects.

Grammar (``configparser`` INI; ``#`` and ``;`` start comments)::

    [experiment]
    name = mp_symmetric | mp_foliated | radial_stability | property_suite | diagnostics
    seed = 0
    output_dir = runs

    [grid]
    kind = interval | rectangle | disk | ball | annulus
    resolution = 65
    radii = -1, 1            # interval; rectangle: "-1, 1; -1, 1"; radial kinds: "r_in, r_out"

    [problem]
    p = constant:2.1         # presets below, or a path to a GridFunction CSV
    q = constant:3
    V = constant:1
    K = constant:1
    nonlinearity = power     # power | constant:c | truncated_cubic:T | truncated_cubic_source:T

    [solver]
    max_iters = 2000
    residual_tol = 1e-8
    step_rule = backtracking
    step_size = 1.0
    path_points = 16
    newton = true
    polarize = true          # mountain pass: polarize path points with [halfspace]

    [halfspace]
    row = -1, 0              # normal components..., then offset (optional; defaults to 0)

    [sequence]
    kind = lattice           # lattice | low_discrepancy
    seed = 0
    axis = 1, 0
    length = 64              # low_discrepancy only

    [diagnostics]            # diagnostics pipeline parameters
    r = 0.5
    gamma = 0
    q = 1.5
    w_samples = 20
    theta_samples = 100
    mu = 0.5                 # Riesz potential sweep: mu, and exponents m -> q
    theta_m = 2
    theta_q = 4

    [suite]
    samples = 200

Field presets:

* ``constant:c``
* ``affine:a,b1,...,bN`` for a + b . x (absolute coordinates)
* ``radial:quadratic,a,b`` for a + b|x|^2 and ``radial:linear,a,b`` for a + b|x|
* anything else is read as a GridFunction CSV path (relative to the config file)
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import Nonlinearity, ProblemData
from .errors import ConfigError, InvalidProblemData
from .grid import DOMAIN_KINDS, Grid, build_grid, read_csv
from .polarization import HalfSpace, HalfSpaceSequence
from .solvers import SolveOptions
from .spaces import ExponentField

__all__ = ["EXPERIMENTS", "ExperimentConfig", "parse_config", "load_config", "field_from_spec"]

EXPERIMENTS = ("mp_symmetric", "mp_foliated", "radial_stability", "property_suite", "diagnostics")

_SECTIONS = ("experiment", "grid", "problem", "solver", "halfspace", "sequence", "diagnostics", "suite")

_REQUIRED = {
    "mp_symmetric": ("grid", "problem", "halfspace"),
    "mp_foliated": ("grid", "problem", "sequence"),
    "radial_stability": ("grid", "problem"),
    "property_suite": (),
    "diagnostics": ("grid", "problem"),
}


@dataclass
class ExperimentConfig:
    """Parsed configuration; every value is kept as its normalized string."""

    sections: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    # access helpers -------------------------------------------------------
    def get(self, section: str, key: str, default=None):
        val = self.sections.get(section, {}).get(key)
        if val is None:
            if default is None:
                raise ConfigError(f"{section}.{key}", f"missing config key {section}.{key}")
            return default
        return val

    def has(self, section: str) -> bool:
        return section in self.sections

    def _num(self, section, key, cast, default=None):
        raw = self.get(section, key, None if default is None else str(default))
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"{section}.{key}: cannot read {raw!r} as {cast.__name__}") from None

    def _bool(self, section, key, default: bool) -> bool:
        raw = self.get(section, key, "true" if default else "false").lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}", f"{section}.{key}: expected a boolean, got {raw!r}")

    def _floats(self, section, key, default=None) -> list:
        raw = self.get(section, key, default)
        try:
            return [float(t) for t in raw.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"{section}.{key}: expected numbers, got {raw!r}") from None

    @property
    def experiment(self) -> str:
        return self.get("experiment", "name")

    @property
    def seed(self) -> int:
        return self._num("experiment", "seed", int, 0)

    @property
    def output_dir(self) -> Path:
        p = Path(self.get("experiment", "output_dir", "runs"))
        return p if p.is_absolute() else self.base_dir / p

    # overrides ------------------------------------------------------------
    def with_overrides(self, seed: int | None = None, resolution: int | None = None) -> "ExperimentConfig":
        secs = {k: dict(v) for k, v in self.sections.items()}
        if seed is not None:
            secs.setdefault("experiment", {})["seed"] = str(int(seed))
        if resolution is not None:
            secs.setdefault("grid", {})["resolution"] = str(int(resolution))
        return ExperimentConfig(secs, self.base_dir)

    # builders -------------------------------------------------------------
    def build_grid(self) -> Grid:
        if not self.has("grid"):
            raise ConfigError("grid", "missing [grid] section")
        kind = self.get("grid", "kind")
        if kind not in DOMAIN_KINDS:
            raise ConfigError("grid.kind", f"grid.kind: unknown domain kind {kind!r}")
        res_raw = self.get("grid", "resolution")
        try:
            res = tuple(int(t) for t in res_raw.split(","))
        except ValueError:
            raise ConfigError("grid.resolution", f"grid.resolution: bad value {res_raw!r}") from None
        res = res[0] if len(res) == 1 else res
        radii_raw = self.sections["grid"].get("radii")
        radii = None
        if radii_raw is not None:
            try:
                parts = [[float(t) for t in chunk.split(",")] for chunk in radii_raw.split(";")]
            except ValueError:
                raise ConfigError("grid.radii", f"grid.radii: bad value {radii_raw!r}") from None
            radii = parts if kind == "rectangle" else parts[0]
        try:
            return build_grid(kind, res, radii)
        except ValueError as exc:
            raise ConfigError("grid", f"grid: {exc}") from None

    def build_problem(self, grid: Grid) -> ProblemData:
        if not self.has("problem"):
            raise ConfigError("problem", "missing [problem] section")
        try:
            p = ExponentField(grid, field_from_spec(self.get("problem", "p"), grid, self.base_dir, "problem.p"))
        except InvalidProblemData as exc:
            raise ConfigError("problem.p", f"problem.p: {exc}") from None
        V = field_from_spec(self.get("problem", "V", "constant:1"), grid, self.base_dir, "problem.V")
        K = field_from_spec(self.get("problem", "K", "constant:1"), grid, self.base_dir, "problem.K")
        nl = _nonlinearity(self.get("problem", "nonlinearity", "power"))
        q = None
        if nl.kind == "power":
            q = field_from_spec(self.get("problem", "q"), grid, self.base_dir, "problem.q")
        try:
            return ProblemData(p, V, K, q, nl)
        except InvalidProblemData as exc:
            raise ConfigError("problem", f"problem: {exc}") from None

    def build_solver(self, halfspace: HalfSpace | None = None) -> SolveOptions:
        s = "solver"
        kw = dict(
            max_iters=self._num(s, "max_iters", int, 2000),
            residual_tol=self._num(s, "residual_tol", float, 1e-8),
            step_rule=self.get(s, "step_rule", "backtracking"),
            step_size=self._num(s, "step_size", float, 1.0),
            seed=self.seed,
            path_points=self._num(s, "path_points", int, 16),
            newton=self._bool(s, "newton", True),
            apply_polarization=halfspace if self._bool(s, "polarize", True) else None,
        )
        try:
            return SolveOptions(**kw)
        except ValueError as exc:
            raise ConfigError("solver", f"solver: {exc}") from None

    def build_halfspace(self, dim: int) -> HalfSpace:
        if not self.has("halfspace"):
            raise ConfigError("halfspace", "missing [halfspace] section")
        row = self._floats("halfspace", "row")
        if len(row) == dim:
            normal, offset = row, 0.0
        elif len(row) == dim + 1:
            normal, offset = row[:-1], row[-1]
        else:
            raise ConfigError("halfspace.row", f"halfspace.row: need {dim} normal components and an optional offset")
        try:
            return HalfSpace(tuple(normal), offset)
        except ValueError as exc:
            raise ConfigError("halfspace.row", f"halfspace.row: {exc}") from None

    def build_sequence(self, grid: Grid) -> HalfSpaceSequence:
        if not self.has("sequence"):
            raise ConfigError("sequence", "missing [sequence] section")
        kind = self.get("sequence", "kind", "lattice")
        seed = self._num("sequence", "seed", int, self.seed)
        axis = tuple(self._floats("sequence", "axis", ",".join(["1"] + ["0"] * (grid.ndim - 1))))
        if len(axis) != grid.ndim:
            raise ConfigError("sequence.axis", f"sequence.axis: need {grid.ndim} components")
        if kind == "lattice":
            return HalfSpaceSequence.lattice(grid, axis=axis, seed=seed)
        if kind == "low_discrepancy":
            length = self._num("sequence", "length", int, 64)
            return HalfSpaceSequence.low_discrepancy(grid.ndim, length, seed=seed, axis=axis)
        raise ConfigError("sequence.kind", f"sequence.kind: unknown kind {kind!r}")

    # text form ------------------------------------------------------------
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec in _SECTIONS:
            if sec in self.sections:
                cp[sec] = dict(sorted(self.sections[sec].items()))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def validate(self) -> None:
        name = self.experiment
        if name not in EXPERIMENTS:
            raise ConfigError("experiment.name", f"experiment.name: unknown experiment {name!r}")
        for sec in _REQUIRED[name]:
            if not self.has(sec):
                raise ConfigError(sec, f"experiment {name} needs a [{sec}] section")
        for sec in ("problem",):
            if not self.has(sec):
                continue
            for key in ("p", "q", "V", "K"):
                spec = self.sections[sec].get(key)
                if spec is not None and not _is_preset(spec):
                    if not (self.base_dir / spec).is_file() and not Path(spec).is_file():
                        raise ConfigError(f"problem.{key}", f"problem.{key}: file {spec!r} not found")


def _is_preset(spec: str) -> bool:
    return spec.split(":", 1)[0].strip() in ("constant", "affine", "radial")


def field_from_spec(spec: str, grid: Grid, base_dir: Path, key: str) -> np.ndarray:
    """Turn a preset string or CSV path into a node array on ``grid``."""
    spec = spec.strip()
    head, _, rest = spec.partition(":")
    try:
        if head == "constant":
            return np.full(grid.shape, float(rest))
        if head == "affine":
            c = [float(t) for t in rest.split(",")]
            if len(c) != grid.ndim + 1:
                raise ConfigError(key, f"{key}: affine needs {grid.ndim + 1} coefficients")
            x = grid.points
            return c[0] + sum(c[k + 1] * x[k] for k in range(grid.ndim))
        if head == "radial":
            parts = [t.strip() for t in rest.split(",")]
            kind, a, b = parts[0], float(parts[1]), float(parts[2])
            r = np.sqrt(sum((grid.points[k] - grid.center[k]) ** 2 for k in range(grid.ndim)))
            if kind == "quadratic":
                return a + b * r ** 2
            if kind == "linear":
                return a + b * r
            raise ConfigError(key, f"{key}: unknown radial profile {kind!r}")
    except (ValueError, IndexError):
        raise ConfigError(key, f"{key}: malformed preset {spec!r}") from None
    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ConfigError(key, f"{key}: file {spec!r} not found")
    return read_csv(path, grid, as_field=True)


def _nonlinearity(spec: str) -> Nonlinearity:
    head, _, rest = spec.strip().partition(":")
    try:
        if head == "power":
            return Nonlinearity()
        if head == "constant":
            return Nonlinearity.constant(float(rest))
        if head == "truncated_cubic":
            return Nonlinearity.truncated_cubic(float(rest or 1.0))
        if head == "truncated_cubic_source":
            return Nonlinearity.truncated_cubic(float(rest or 1.0), source=1.0)
    except ValueError:
        pass
    raise ConfigError("problem.nonlinearity", f"problem.nonlinearity: unknown or malformed {spec!r}")


def parse_config(text: str, base_dir: Path | str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("syntax", f"config syntax error: {exc}") from None
    unknown = [s for s in cp.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(unknown[0], f"unknown section [{unknown[0]}]")
    if not cp.has_section("experiment"):
        raise ConfigError("experiment", "missing [experiment] section")
    secs = {s: {k: " ".join(v.split()) for k, v in cp[s].items()} for s in cp.sections()}
    cfg = ExperimentConfig(secs, Path(base_dir) if base_dir is not None else Path.cwd())
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"config file {str(path)!r} not found")
    return parse_config(path.read_text(), path.parent)
