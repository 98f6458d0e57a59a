import numpy as np
import pytest
from scipy.special import jn_zeros

from pxsym.energy import Nonlinearity, ProblemData, energy
from pxsym.errors import ExponentBelowTwo, InvalidProblemData, MissingDerivative, NotPlanarOrAxisymmetric
from pxsym.grid import GridFunction, build_grid, gradient, integrate, random_smooth
from pxsym.solvers import SolveOptions, minimize_energy
from pxsym.spaces import ExponentField
from pxsym.spectrum import (
    angular_derivative,
    angular_derivative_test,
    assemble_Lu,
    first_eigenpair,
    radial_symmetry_verdict,
    weight_field,
)


def _laplace(grid):
    return ProblemData(ExponentField.constant(grid, 2.0), 0.0, 0.0, nonlinearity=Nonlinearity.constant(0.0))


def test_interval_dirichlet_eigenvalue():
    g = build_grid("interval", 257, (0, 1))
    res = first_eigenpair(g.zeros(), _laplace(g))
    assert res.mu1 == pytest.approx(np.pi ** 2, abs=1e-2)
    assert res.sign_uniform and res.stability == "semi_stable"
    # normalization and Rayleigh quotient
    assert integrate(res.phi1 * res.phi1) == pytest.approx(1.0, abs=1e-10)
    form = assemble_Lu(g.zeros(), _laplace(g))
    assert form.rayleigh(res.phi1) == pytest.approx(res.mu1, abs=1e-8 * (1 + res.mu1))
    tr = res.rayleigh_trace
    assert all(b <= a + 1e-12 for a, b in zip(tr, tr[1:]))


def test_disk_eigenvalue_relative_error_shrinks():
    target = jn_zeros(0, 1)[0] ** 2
    errs = []
    for n in (33, 65):
        g = build_grid("disk", n)
        res = first_eigenpair(g.zeros(), _laplace(g))
        assert res.sign_uniform
        errs.append(abs(res.mu1 - target) / target)
    assert errs[1] < errs[0] and errs[1] < 1e-2


def test_constant_shift_moves_eigenvalue():
    g = build_grid("interval", 65, (0, 1))
    c = 2.5
    shifted = ProblemData(ExponentField.constant(g, 2.0), 0.0, 0.0, nonlinearity=Nonlinearity.general(
        lambda x, s: c * s, lambda x, s: np.full_like(s, c), lambda x, s: 0.5 * c * s ** 2))
    a = first_eigenpair(g.zeros(), _laplace(g)).mu1
    b = first_eigenpair(g.zeros(), shifted).mu1
    assert a - b == pytest.approx(c, abs=1e-9)


def test_unstable_classification():
    g = build_grid("interval", 65, (0, 1))
    c = 20.0  # above pi^2 so mu1 < 0
    d = ProblemData(ExponentField.constant(g, 2.0), 0.0, 0.0, nonlinearity=Nonlinearity.general(
        lambda x, s: c * s, lambda x, s: np.full_like(s, c), lambda x, s: 0.5 * c * s ** 2))
    res = first_eigenpair(g.zeros(), d)
    assert res.mu1 < 0 and res.stability in ("unstable", "non_degenerate")
    assert res.sign_uniform


def test_form_properties(rng):
    g = build_grid("disk", 17)
    d = ProblemData(ExponentField.from_function(g, lambda x: 2.4 + 0.3 * (x ** 2).sum(0)), 1.0, 1.0, 3.0)
    u = random_smooth(g, rng)
    form = assemble_Lu(u, d)
    v, w = random_smooth(g, rng), random_smooth(g, rng)
    assert form(v, w) == pytest.approx(form(w, v), rel=1e-12)
    # disjoint supports with a gap of two cells
    a = GridFunction.from_array(g, np.where(g.points[0] < -0.3, v.values, 0))
    b = GridFunction.from_array(g, np.where(g.points[0] > 0.3, w.values, 0))
    assert form(a, b) == 0.0
    z = random_smooth(g, rng)
    eps = 1e-4
    fd = (energy(u + eps * z, d) - 2 * energy(u, d) + energy(u - eps * z, d)) / eps ** 2
    assert form(z, z) == pytest.approx(fd, rel=1e-3)


def test_p_two_form_is_dirichlet_minus_mass():
    g = build_grid("interval", 33, (0, 1))
    form = assemble_Lu(g.zeros(), _laplace(g))
    v = g.sample(lambda x: np.sin(np.pi * x[0]))
    w = g.sample(lambda x: x[0] * (1 - x[0]))
    # discrete Dirichlet form: sum of forward differences over all cells
    dv = np.diff(np.concatenate([[0], v.values[g.mask], [0]])) / g.h
    dw = np.diff(np.concatenate([[0], w.values[g.mask], [0]])) / g.h
    assert form(v, w) == pytest.approx(np.sum(dv * dw) * g.h, rel=1e-12)


def test_errors():
    g = build_grid("disk", 17)
    with pytest.raises(ExponentBelowTwo):
        assemble_Lu(g.zeros(), ProblemData(ExponentField.constant(g, 1.5), 1.0, 1.0, 1.5))
    no_deriv = ProblemData(ExponentField.constant(g, 2.0), 1.0, 0.0,
                           nonlinearity=Nonlinearity.general(lambda x, s: s ** 2))
    with pytest.raises(MissingDerivative):
        assemble_Lu(g.zeros(), no_deriv)
    gi = build_grid("interval", 33)
    with pytest.raises(NotPlanarOrAxisymmetric):
        angular_derivative_test(gi.zeros(), _laplace(gi))


def test_weight_field_floor():
    g = build_grid("disk", 33)
    d = ProblemData(ExponentField.constant(g, 3.0), 1.0, 1.0, 3.0)
    u = g.sample(lambda x: 1 - (x ** 2).sum(0))  # Du = 0 at the center
    w = weight_field(u, d)
    assert w.floor_applied and np.all(w.rho[g.mask] >= w.floor)
    assert w.floor == pytest.approx(1e-10 * w.rho[g.mask].max())


def test_angular_derivative_of_ramp_and_radial():
    g = build_grid("disk", 33)
    inner = g.radius < 0.8
    # central differences of a radial function leave an O(h^2) rotational part
    errs = []
    for n in (33, 65):
        gn = build_grid("disk", n)
        radial = gn.sample(lambda x: np.cos((x ** 2).sum(0)))
        errs.append(np.abs(angular_derivative(radial).values[gn.radius < 0.8]).max())
    assert errs[0] < gn.h and errs[1] < errs[0] / 3.5
    # x0 d1 u - x1 d0 u = -x1 for u = x0, away from the rim
    ramp = g.sample(lambda x: x[0])
    inner = g.radius < 0.8
    assert np.allclose(angular_derivative(ramp).values[inner], -g.points[1][inner], atol=1e-12)


def test_radial_verdict_cases():
    g = build_grid("disk", 33)
    d = ProblemData(ExponentField.from_function(g, lambda x: 2 + (x ** 2).sum(0)), 1.0, 0.0,
                    nonlinearity=Nonlinearity.truncated_cubic(1.0, source=1.0))
    bump = g.sample(lambda x: 1 - (x ** 2).sum(0))
    assert radial_symmetry_verdict(bump, d)["verdict"] == "not_applicable"
    s = minimize_energy(d, SolveOptions(residual_tol=1e-9))
    rep = radial_symmetry_verdict(s.u, d)
    assert rep["verdict"] == "consistent_with_theorem" and rep["mu1"] >= -1e-4
    tilted = ProblemData(d.p, 1.0, g.field(lambda x: 1 + x[0]), nonlinearity=d.nonlinearity)
    with pytest.raises(InvalidProblemData):
        radial_symmetry_verdict(s.u, tilted)


def test_angular_test_report_shape():
    g = build_grid("disk", 33)
    d = ProblemData(ExponentField.from_function(g, lambda x: 2 + (x ** 2).sum(0)), 1.0, 0.0,
                    nonlinearity=Nonlinearity.truncated_cubic(1.0, source=1.0))
    s = minimize_energy(d, SolveOptions(residual_tol=1e-9))
    rep = angular_derivative_test(s.u, d, n_tests=10)
    assert rep["theta_index"] == 0 and len(rep["u_theta_l2"]) == 1
    assert rep["residual_form_norm"] < 1e-4
    assert angular_derivative_test(s.u, d, n_tests=10) == rep


@pytest.mark.parametrize("n", [33, 65])
def test_form_comparable_to_weighted_dirichlet_norm(n, rng):
    # with V = K = f = 0 the form is the pure gradient part; its ratio to the
    # rho-weighted Dirichlet integral stays in a fixed positive band
    g = build_grid("disk", n)
    d = ProblemData(ExponentField.from_function(g, lambda x: 2 + (x ** 2).sum(0)), 0.0, 0.0,
                    nonlinearity=Nonlinearity.constant(0.0))
    u = g.sample(lambda x: (1 - (x ** 2).sum(0)) * (1 + 0.3 * x[0]))
    form, rho = assemble_Lu(u, d), weight_field(u, d).rho
    ratios = []
    for _ in range(100):
        z = random_smooth(g, rng)
        ratios.append(form(z, z) / integrate(rho * (gradient(z).components ** 2).sum(0), g))
    assert 1.0 < min(ratios) and max(ratios) < 6.0
