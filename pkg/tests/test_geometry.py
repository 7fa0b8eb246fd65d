import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypdense.errors import DimensionError, InvalidPointError
from hypdense.geometry import (
    clamp_curvature,
    constraint_residual,
    exp_map_origin,
    exp_map_origin_space,
    geodesic_distance,
    log_map_origin,
    lorentz_inner,
    origin,
    pairwise_distance,
    project_to_hyperboloid,
    tangent_norm,
)

SQ2 = math.sqrt(2.0)


def tangent(space):
    space = np.asarray(space, dtype=np.float64)
    return np.concatenate([np.zeros(space.shape[:-1] + (1,)), space], axis=-1)


def test_inner_of_origin_is_minus_one():
    assert lorentz_inner([1, 0, 0], [1, 0, 0]) == -1.0


def test_inner_hand_expansion():
    assert lorentz_inner([SQ2, 1, 0], [SQ2, 0, 1]) == pytest.approx(-2.0, abs=1e-15)


def test_inner_matches_naive_sum(rng):
    a, b = rng.normal(size=5), rng.normal(size=5)
    naive = -a[0] * b[0]
    for i in range(1, 5):
        naive += a[i] * b[i]
    assert abs(lorentz_inner(a, b) - naive) < 1e-12


def test_inner_rejects_mismatched_dims():
    with pytest.raises(DimensionError):
        lorentz_inner([1, 0, 0], [1, 0])


def test_distance_to_self_is_zero():
    z = exp_map_origin(tangent([0.3, -1.2]))
    assert geodesic_distance(z, z) == 0.0


def test_distance_closed_form():
    d = geodesic_distance([SQ2, 1, 0], [SQ2, 0, 1], 1.0)
    assert d == pytest.approx(math.log(2 + math.sqrt(3)), abs=1e-12)
    assert d == pytest.approx(1.3169579, abs=1e-7)


def test_distance_rejects_off_manifold_points():
    with pytest.raises(InvalidPointError):
        geodesic_distance([1.0, 1.0, 0.0], [1.0, 0.0, 0.0])


def test_radial_isometry_random(rng):
    for _ in range(100):
        u = tangent(rng.normal(size=3) * rng.uniform(0, 3))
        d = geodesic_distance(exp_map_origin(u), origin(3), 1.0)
        assert abs(d - np.linalg.norm(u)) < 1e-9


def test_exp_of_zero_is_origin():
    np.testing.assert_array_equal(exp_map_origin([0.0, 0.0, 0.0]), [1.0, 0.0, 0.0])


def test_exp_known_point():
    z = exp_map_origin([0.0, 1.0, 0.0])
    # cosh(1), sinh(1) to 16 digits
    np.testing.assert_allclose(z, [1.5430806348152437, 1.1752011936438014, 0.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_exp_stays_on_manifold(rng, c):
    u = np.concatenate([np.zeros((200, 1)), rng.normal(size=(200, 4))], axis=1)
    assert np.max(constraint_residual(exp_map_origin(u, c), c)) < 1e-9


def test_exp_rejects_nonzero_time_coordinate():
    with pytest.raises(InvalidPointError):
        exp_map_origin([0.1, 1.0, 0.0])


def test_log_of_origin_is_zero():
    np.testing.assert_array_equal(log_map_origin(origin(3)), np.zeros(4))


def test_log_inverts_exp_example():
    np.testing.assert_allclose(log_map_origin(exp_map_origin([0.0, 1.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-9)


def test_round_trip_many_points(rng):
    for c in (0.1, 0.5, 1.0, 3.0, 10.0):
        space = rng.normal(size=(200, 3)) * rng.uniform(0, 4, size=(200, 1))
        u = np.concatenate([np.zeros((200, 1)), space], axis=1)
        back = log_map_origin(exp_map_origin(u, c), c)
        assert np.max(np.abs(back - u)) < 1e-7
        assert np.all(back[:, 0] == 0.0)


def test_project_examples():
    np.testing.assert_array_equal(project_to_hyperboloid([0.9, 0.0, 0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(project_to_hyperboloid([5.0, 1.0, 1.0]), [math.sqrt(3), 1.0, 1.0], rtol=0, atol=1e-15)


def test_project_repairs_accumulated_drift(rng):
    c = 1.0
    z = exp_map_origin(tangent(rng.normal(size=(8, 3)) * 0.5), c)
    # 1e5 first-order exp-map steps z + eps*v (v tangent at z) drift off the sheet
    for w in rng.normal(size=(100_000, 8, 4)) * 1e-3:
        v = w + c * lorentz_inner(z, w)[:, None] * z
        z = z + v
    assert np.max(constraint_residual(z, c)) > 1e-3
    fixed = project_to_hyperboloid(z, c)
    assert np.max(constraint_residual(fixed, c)) < 1e-9
    np.testing.assert_array_equal(fixed[:, 1:], z[:, 1:])


def test_tangent_norm_equals_euclidean_space_norm(rng):
    u = tangent(rng.normal(size=5))
    assert tangent_norm(u) == pytest.approx(np.linalg.norm(u[1:]), abs=1e-12)


def test_clamp_curvature():
    assert clamp_curvature(0.01) == 0.1
    assert clamp_curvature(50.0) == 10.0
    assert clamp_curvature(2.5) == 2.5


def test_pairwise_matches_elementwise(rng):
    a = exp_map_origin_space(rng.normal(size=(4, 3)), 0.7)
    b = exp_map_origin_space(rng.normal(size=(5, 3)), 0.7)
    table = pairwise_distance(a, b, 0.7)
    for i in range(4):
        for j in range(5):
            assert table[i, j] == pytest.approx(geodesic_distance(a[i], b[j], 0.7), abs=1e-12)


def test_distance_axioms_on_random_triples(rng):
    space = rng.normal(size=(1000, 3, 3)) * 1.5
    pts = exp_map_origin_space(space, 1.0)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    dxy, dyx = geodesic_distance(x, y), geodesic_distance(y, x)
    dyz, dxz = geodesic_distance(y, z), geodesic_distance(x, z)
    assert np.all(dxy >= 0)
    np.testing.assert_allclose(dxy, dyx, rtol=0, atol=1e-12)
    assert np.all(dxz <= dxy + dyz + 1e-9)


space_vectors = arrays(np.float64, st.integers(1, 5), elements=st.floats(-4, 4))
curvatures = st.floats(0.1, 10.0)


@settings(max_examples=200, deadline=None)
@given(space_vectors, curvatures)
def test_property_constraint_and_isometry(v, c):
    z = exp_map_origin(tangent(v), c)
    # c<z,z> is a difference of squares of size c*z0^2; rounding scales with it
    assert constraint_residual(z, c) < 1e-9 * max(1.0, c * z[0] ** 2)
    if math.sqrt(c) * np.linalg.norm(v) <= 6.0:
        assert constraint_residual(z, c) < 1e-9
    assert z[0] >= 1.0 / math.sqrt(c) - 1e-15
    assert abs(geodesic_distance(z, origin(len(v), c), c) - np.linalg.norm(v)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(space_vectors, curvatures)
def test_property_round_trip(v, c):
    back = log_map_origin(exp_map_origin(tangent(v), c), c)
    assert np.max(np.abs(back[1:] - v)) < 1e-7


def test_distance_matches_high_precision_oracle(rng):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    for _ in range(200):
        c = float(rng.uniform(0.1, 10.0))
        # radii up to sqrt(c) r = 5, partners at a range of separations straddling the branch switch
        ua = rng.normal(size=3)
        ua *= rng.uniform(0, 5) / (math.sqrt(c) * np.linalg.norm(ua))
        a = exp_map_origin_space(ua, c)
        b = exp_map_origin_space(ua + rng.normal(size=3) * 10 ** rng.uniform(-6, -0.5) / math.sqrt(c), c)
        # the stored points are slightly off the sheet; project each onto it in high precision first
        def on_sheet(p):
            return [mpmath.sqrt(1 / mpmath.mpf(c) + mpmath.fsum(mpmath.mpf(x) ** 2 for x in p[1:]))] + [mpmath.mpf(x) for x in p[1:]]
        pa, pb = on_sheet(a), on_sheet(b)
        inner = -pa[0] * pb[0] + mpmath.fsum(x * y for x, y in zip(pa[1:], pb[1:]))
        exact = mpmath.acosh(-mpmath.mpf(c) * inner) / mpmath.sqrt(c)
        got = geodesic_distance(a, b, c)
        assert abs(got - float(exact)) <= 1e-12 + 1e-9 * float(exact)


def test_distance_continuous_across_branch_switch():
    c = 1.0
    r = math.acosh(2.0)
    for eps in (-1e-12, 0.0, 1e-12):
        z = exp_map_origin([0.0, r + eps, 0.0], c)
        assert abs(geodesic_distance(z, origin(2), c) - (r + eps)) < 1e-12
