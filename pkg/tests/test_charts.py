import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aflows.charts import (
    ChartedPoint,
    CylinderPoint,
    EmbeddedSpherePoint,
    MappingTorusPoint,
    SphereQuotientPoint,
    TorusPoint2,
    cartesian_to_tube,
    chart_transition,
    inverse_stereo_from_north,
    inverse_stereo_from_north_jacobian,
    quotient_canonical,
    quotient_distance,
    sigma,
    stereo_from_north,
    stereo_from_north_jacobian,
    torus_reduce,
    tube_to_cartesian,
)
from aflows.errors import InvalidInputError, OutOfDomainError

coords = st.floats(-50, 50, allow_nan=False)
pairs = arrays(float, 2, elements=coords)


@given(pairs)
def test_torus_reduce_range_and_idempotent(v):
    r = torus_reduce(v)
    assert np.all((r >= 0) & (r < 1))
    assert np.array_equal(torus_reduce(r), r)


@given(pairs)
def test_sigma_is_an_exact_involution(v):
    p = torus_reduce(v)
    assert np.array_equal(sigma(sigma(p)), p)


@given(pairs)
def test_canonical_representative_is_shared_by_the_pair(v):
    p = torus_reduce(v)
    assert np.array_equal(quotient_canonical(p), quotient_canonical(sigma(p)))
    assert quotient_distance(p, sigma(p)) == 0.0


def test_torus_reduce_rejects_nan():
    with pytest.raises(InvalidInputError):
        torus_reduce([np.nan, 0.0])


def test_point_types():
    assert TorusPoint2.of((1.25, -0.5)).array.tolist() == [0.25, 0.5]
    with pytest.raises(InvalidInputError):
        TorusPoint2(1.0, 0.0)
    q = SphereQuotientPoint.of((0.75, 0.5))
    assert q == SphereQuotientPoint.of((0.25, 0.5))
    with pytest.raises(InvalidInputError):
        CylinderPoint.of(-1.0, 0.0, 0.0)
    e = EmbeddedSpherePoint.of((3.0, 4.0, 0.0))
    assert np.isclose(np.linalg.norm(e.coords), 1.0) and e.dim == 2
    with pytest.raises(InvalidInputError):
        MappingTorusPoint((0.1, 0.2), 1.0)


def test_mapping_torus_seam_applies_the_map():
    f = lambda q: torus_reduce(np.array(q) * 2.0)
    p = MappingTorusPoint((0.1, 0.2), 0.5).advance(1.75, f)
    assert p.base == pytest.approx((0.4, 0.8)) and p.s == pytest.approx(0.25)


sphere_pts = arrays(float, 4, elements=st.floats(-1, 1)).filter(lambda v: 0.1 < np.linalg.norm(v))


@given(sphere_pts)
def test_stereographic_round_trip(v):
    x = v / np.linalg.norm(v)
    if x[-1] > 0.99:
        return
    assert np.allclose(inverse_stereo_from_north(stereo_from_north(x)), x, atol=1e-10)


@settings(max_examples=30)
@given(arrays(float, 3, elements=st.floats(-3, 3)))
def test_inverse_stereo_jacobian_matches_differences(w):
    J = inverse_stereo_from_north_jacobian(w)
    eps = 1e-6
    num = np.stack([(inverse_stereo_from_north(w + eps * e) - inverse_stereo_from_north(w - eps * e)) / (2 * eps)
                    for e in np.eye(3)], axis=1)
    assert np.allclose(J, num, atol=1e-7)
    x = inverse_stereo_from_north(w)
    # the two Jacobians are inverse on the tangent space
    assert np.allclose(stereo_from_north_jacobian(x) @ J, np.eye(3), atol=1e-9)


@given(st.floats(0.0, 0.29), st.floats(0, 6.28), st.floats(0, 6.28))
def test_tube_coordinates_round_trip(d, psi, phi):
    v = tube_to_cartesian((d, psi, phi))
    assert np.allclose(tube_to_cartesian(cartesian_to_tube(v)), v, atol=1e-12)


def test_chart_transitions():
    p = ChartedPoint.of("S3", (0.0, 0.0, 0.0, -1.0))
    assert chart_transition(p, "S3_north").local == (0.0, 0.0, 0.0)
    with pytest.raises(OutOfDomainError):
        chart_transition(ChartedPoint.of("S3", (0.0, 0.0, 0.0, 1.0)), "S3_north")
    with pytest.raises(OutOfDomainError):
        chart_transition(ChartedPoint.of("lemma1_cart", (0.0, 0.0, 2.0)), "lemma1_tube")
    t = chart_transition(ChartedPoint.of("lemma1_cart", (1.1, 0.0, 0.1)), "lemma1_tube")
    assert t.local[0] == pytest.approx(np.hypot(0.1, 0.1))
    assert chart_transition(ChartedPoint.of("T2", (0.75, 0.5)), "S2q").local == (0.25, 0.5)
