import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pxsym import kernels
from pxsym.errors import AsymmetricDomain, DimensionMismatch, NoConvergence, NonGridReflection
from pxsym.grid import GridFunction, build_grid, random_noise, random_smooth
from pxsym.polarization import (
    HalfSpace,
    HalfSpaceSequence,
    _flatten_pairs,
    check_contraction,
    iterated_symmetrize,
    modular_invariance,
    polarize,
    polarize_set,
    reflect,
)
from pxsym.solvers import angular_deviation, foliated_schwarz_profile
from pxsym.spaces import ExponentField, lp_distance

DISK = build_grid("disk", 33)
DIRECTIONS = [(1, 0), (0, 1), (-1, 0), (1, 1), (1, -1), (-1, -1)]


def test_halfspace_validation():
    with pytest.raises(ValueError):
        HalfSpace((1.0, 1.0))
    with pytest.raises(DimensionMismatch):
        HalfSpace(())
    H = HalfSpace.from_direction((3, 4))
    assert H.normal == pytest.approx((0.6, 0.8))


def test_reflect_examples():
    H = HalfSpace((1.0, 0.0))
    assert np.array_equal(reflect(np.array([1.0, 0.0]), H), [-1.0, 0.0])
    assert np.array_equal(reflect(np.array([0.0, 0.7]), H), [0.0, 0.7])
    with pytest.raises(DimensionMismatch):
        reflect(np.zeros(3), H)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.floats(-2, 2))
def test_reflect_is_involution(x, n, c):
    H = HalfSpace.from_direction(n, c)
    x = np.array(x)
    assert np.allclose(reflect(reflect(x, H), H), x, atol=1e-12)


def test_one_dimensional_example():
    g = build_grid("interval", 33)
    u = g.sample(lambda x: x[0])
    uh = polarize(u, HalfSpace((1.0,)))
    assert np.allclose(uh.values, -u.values)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), d=st.sampled_from(DIRECTIONS))
def test_idempotent_equimeasurable_contracting(seed, d):
    rng = np.random.default_rng(seed)
    H = HalfSpace.from_direction(d)
    u, v = random_noise(DISK, rng), random_noise(DISK, rng)
    uh = polarize(u, H)
    assert polarize(uh, H).equals(uh)
    assert np.array_equal(np.sort(uh.interior), np.sort(u.interior))
    assert check_contraction(u, v, H)["holds"]
    assert check_contraction(u, v, H, exponent=1.3)["holds"]
    assert check_contraction(u, u, H)["after"] == 0.0


def test_already_ordered_function_is_fixed():
    u = DISK.sample(lambda x: np.exp(-x[0]) * (1 - (x ** 2).sum(0)))
    assert polarize(u, HalfSpace((1.0, 0.0))).equals(u)


def test_radial_functions_fixed_by_every_exact_halfspace():
    u = DISK.sample(lambda x: 1 - (x ** 2).sum(0))
    for d in DIRECTIONS:
        assert polarize(u, HalfSpace.from_direction(d)).equals(u)


def test_non_grid_reflection_and_asymmetric_domain():
    with pytest.raises(NonGridReflection):
        polarize(DISK.zeros(), HalfSpace.from_direction((1, 2)))
    rect = build_grid("rectangle", 17, [(0, 1), (-1, 1)])
    with pytest.raises(AsymmetricDomain):
        polarize(rect.zeros(), HalfSpace((1.0, 0.0)))
    with pytest.raises(DimensionMismatch):
        polarize(DISK.zeros(), HalfSpace((1.0, 0.0, 0.0)))


def test_interpolation_mode_is_close_to_exact_on_grid_planes(rng):
    u = random_smooth(DISK, rng)
    H = HalfSpace((1.0, 0.0))
    assert np.allclose(polarize(u, H, mode="interpolate").values, polarize(u, H).values, atol=1e-12)
    with pytest.raises(ValueError):
        polarize(u, H, mode="nearest")


def test_polarize_set_examples():
    box = build_grid("rectangle", 11)
    H = HalfSpace((1.0, 0.0))
    # symmetric set is unchanged
    assert np.array_equal(polarize_set(box.mask, H, box), box.mask)
    # set inside H is unchanged
    inside = np.zeros(box.shape, bool)
    inside[1:3, 2:6] = True
    assert np.array_equal(polarize_set(inside, H, box), inside)
    # half disk in the complement of H lands on its mirror image; enumeration oracle
    x, y = box.points
    half = (x ** 2 + y ** 2 < 0.8) & (x > 0)
    expected = np.zeros(box.shape, bool)
    for i in range(11):
        for j in range(11):
            if half[10 - i, j]:
                expected[i, j] = True
    assert np.array_equal(polarize_set(half, H, box), expected)


def test_low_discrepancy_sequence():
    seq = HalfSpaceSequence.low_discrepancy(2, 32, seed=3, axis=(0, 1))
    again = HalfSpaceSequence.low_discrepancy(2, 32, seed=3, axis=(0, 1))
    assert seq.items == again.items
    assert len(seq) == 32
    assert all(H.offset == 0 and np.dot(H.normal, (0, 1)) <= 0 for H in seq.items)
    seq3 = HalfSpaceSequence.low_discrepancy(3, 16)
    assert all(abs(np.linalg.norm(H.normal) - 1) < 1e-12 for H in seq3.items)


def test_lattice_symmetrization_is_foliated_and_equimeasurable(rng):
    seq = HalfSpaceSequence.lattice(DISK, axis=(1.0, 0.0))
    u = random_noise(DISK, rng)
    us, sweeps = iterated_symmetrize(u, seq, return_sweeps=True)
    assert sweeps >= 1
    assert np.array_equal(np.sort(us.interior), np.sort(u.interior))
    assert foliated_schwarz_profile(us, seq)["monotonicity_violation"] == 0.0
    # fixed point: one more sweep changes nothing
    assert iterated_symmetrize(us, seq).equals(us)


def test_lattice_radial_and_axis_fixed_points():
    seq = HalfSpaceSequence.lattice(DISK, axis=(1.0, 0.0))
    radial = DISK.sample(lambda x: np.cos((x ** 2).sum(0)))
    assert iterated_symmetrize(radial, seq).equals(radial)
    ramp = DISK.sample(lambda x: x[0])
    assert iterated_symmetrize(ramp, seq).equals(ramp)


def test_interpolated_sequence_on_disk(rng):
    seq = HalfSpaceSequence.low_discrepancy(2, 24, seed=0, axis=(1.0, 0.0))
    u = DISK.sample(lambda x: np.exp(-((x[0] + 0.3) ** 2 + x[1] ** 2) * 4) * (1 - (x ** 2).sum(0)))
    us = iterated_symmetrize(u, seq, stop_tol=1e-6, max_sweeps=500)
    # mass drift of bilinear steps stays small
    assert abs(us.interior.sum() - u.interior.sum()) / u.interior.sum() < 5e-2
    with pytest.raises(NoConvergence):
        iterated_symmetrize(random_noise(DISK, rng), seq, stop_tol=1e-300, max_sweeps=1)


def test_lattice_needs_radial_grid():
    with pytest.raises(AsymmetricDomain):
        HalfSpaceSequence.lattice(build_grid("rectangle", 17))
    other = build_grid("disk", 35)
    with pytest.raises(AsymmetricDomain):
        iterated_symmetrize(other.zeros(), HalfSpaceSequence.lattice(DISK))


def test_compare_exchange_backends_agree(backend, rng):
    seq = HalfSpaceSequence.lattice(DISK, axis=(0.0, 1.0), seed=5)
    hi, lo, starts = _flatten_pairs(seq)
    base = random_noise(DISK, rng).values.ravel().copy()
    ref = base.copy()
    kernels.compare_exchange_blocks(ref, hi, lo, starts, backend="python")
    got = base.copy()
    kernels.compare_exchange_blocks(got, hi, lo, starts, backend=backend)
    assert np.array_equal(got, ref)


def test_modular_invariance_zeroth_exact_gradient_small():
    g = build_grid("disk", 65)
    u = g.sample(lambda x: (np.exp(-((x[0] - 0.3) ** 2 + (x[1] + 0.2) ** 2) / 0.1)
                            + 0.8 * np.exp(-((x[0] + 0.4) ** 2 + (x[1] - 0.5) ** 2) / 0.05)) * (1 - (x ** 2).sum(0)))
    p = ExponentField.from_function(g, lambda x: 2 + 0.5 * (x ** 2).sum(0))
    mu = g.field(lambda x: 1 + (x ** 2).sum(0))
    rep = modular_invariance(u, HalfSpace((1.0, 0.0)), p, mu)
    assert rep["zeroth_rel_diff"] <= 1e-10
    assert 0 < rep["grad_rel_diff"] <= 5e-2


def test_foliated_profile_detects_violation():
    u = DISK.sample(lambda x: np.exp(-x[0]) * (1 - (x ** 2).sum(0)))
    seq = HalfSpaceSequence.lattice(DISK, axis=(1.0, 0.0))
    assert foliated_schwarz_profile(u, seq)["monotonicity_violation"] > 0.1
    assert foliated_schwarz_profile(u)["xi"][0] < 0  # the moment points toward -e1
    assert angular_deviation(u) > 0


def test_polarization_is_continuous_along_converging_normals():
    g = build_grid("disk", 65)
    u = g.sample(lambda x: np.exp(-3 * ((x[0] - 0.3) ** 2 + (x[1] - 0.2) ** 2)) * (1 - (x ** 2).sum(0)))
    limit = polarize(u, HalfSpace((1.0, 0.0)))
    dists = []
    for k in range(6):
        t = 0.4 * 2.0 ** -k
        uk = polarize(u, HalfSpace((np.cos(t), np.sin(t))), mode="interpolate")
        dists.append(lp_distance(uk, limit, 2.0))
    # distance roughly halves with the angle
    assert all(b < 0.6 * a for a, b in zip(dists, dists[1:]))
    assert dists[-1] < 0.05 * dists[0]
