import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aflows.charts import ChartedPoint, torus_distance
from aflows.errors import EscapeError, InvalidInputError, NoReturnError
from aflows.models import AnosovMap, GradientSphereField, Lemma1Field, PlykinMap
from aflows.orbits import (
    FiberSection,
    HyperplaneSection,
    find_equilibria,
    find_periodic_orbit,
    flow_map,
    integrate,
    integrate_with_tangent,
    propagate,
)
from aflows.surgery import DomainRestriction
from aflows.systems import SuspensionFlow

ANOSOV = SuspensionFlow(AnosovMap(1))
PLYKIN = SuspensionFlow(PlykinMap(), chart="S2qxS1")
LEMMA1 = Lemma1Field()
PHI0 = HyperplaneSection((0.0, 0.0, 0.0), (0.0, 1.0, 0.0))


def test_anosov_time_one_is_the_map():
    x = flow_map(ANOSOV, np.array([0.3, 0.7, 0.0]), 1.0)
    assert torus_distance(x.array[:2], AnosovMap(1).evaluate(np.array([0.3, 0.7]))) < 1e-8
    half = flow_map(ANOSOV, np.array([0.3, 0.7, 0.0]), 0.5)
    assert half.local == pytest.approx((0.3, 0.7, 0.5))


@settings(max_examples=20, deadline=None)
@given(arrays(float, 2, elements=st.floats(0, 1, exclude_max=True)), st.integers(1, 10))
def test_seam_consistency(q, k):
    m = PLYKIN.base
    x = flow_map(PLYKIN, np.append(q, 0.0), float(k))
    y = q
    for _ in range(k):
        y = m.evaluate(y)
    assert torus_distance(x.array[:2], y) < 1e-8 and x.array[2] == pytest.approx(0.0, abs=1e-12)


def test_record_times_and_events():
    rec = integrate(ANOSOV, np.array([0.1, 0.2, 0.0]), 3.0)
    assert np.all(np.diff(rec.times) > 0) and rec.times[-1] == pytest.approx(3.0)
    assert len(rec.events) == 3


def test_lemma1_closed_orbit_and_order():
    rec = integrate(LEMMA1, np.array([1.0, 0.0, 0.0]), 2 * np.pi)
    assert np.allclose(rec.final.array, [1.0, 0.0, 0.0], atol=1e-8)
    x0 = np.array([0.4, 0.3, 0.5])
    exact = Lemma1Field.exact_solution(x0, 2.0)
    e1 = np.linalg.norm(flow_map(LEMMA1, x0, 2.0, step=0.02).array - exact)
    e2 = np.linalg.norm(flow_map(LEMMA1, x0, 2.0, step=0.01).array - exact)
    assert 12 <= e1 / e2 <= 20


def test_gradient_flow_reaches_the_sink():
    g = GradientSphereField(3)
    x0 = np.array([0.3, -0.2, 0.5, 0.6])
    x = flow_map(g, x0 / np.linalg.norm(x0), 50.0, step=1e-2)
    assert np.linalg.norm(x.array - g.south) < 1e-6


def test_escape_error():
    g = GradientSphereField(3)
    north_cap = DomainRestriction(g, lambda x: x[..., -1] > 0.5)
    with pytest.raises(EscapeError) as err:
        integrate(north_cap, np.array([0.6, 0.0, 0.0, 0.8]), 10.0, step=1e-2)
    assert err.value.last_state is not None


def test_tangent_rates():
    _, hist = integrate_with_tangent(ANOSOV, np.array([0.3, 0.7, 0.0]), 100.0)
    rates = hist.log_growth.sum(axis=0) / hist.total_time
    assert rates[0] == pytest.approx(np.log((3 + np.sqrt(5)) / 2), rel=0.01)
    assert sorted(np.abs(rates))[0] < 0.01
    for Q in hist.frames[::10]:
        assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-10)
    E, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))
    _, hist = integrate_with_tangent(LEMMA1, np.array([1.0, 0.0, 0.0]), 30.0, step=1e-2, initial_frame_matrix=E)
    rates = np.sort(hist.log_growth[5:].sum(axis=0) / (hist.times[-1] - hist.times[4]))
    assert rates[:2] == pytest.approx([-1.0, -1.0], rel=0.01)


def test_flow_derivative_matches_differences():
    x0 = np.array([0.7, 0.4, -0.3])
    _, hist = integrate_with_tangent(LEMMA1, x0, 1.0, renorm_interval=10.0)
    # one renormalisation at T: the QR factors of the flow derivative
    eps = 1e-6
    num = np.stack([(flow_map(LEMMA1, x0 + eps * e, 1.0).array - flow_map(LEMMA1, x0 - eps * e, 1.0).array) / (2 * eps)
                    for e in np.eye(3)], axis=1)
    Q, R = np.linalg.qr(num)
    s = np.sign(np.diag(R))
    assert np.allclose(np.abs(np.diag(R)), np.exp(hist.log_growth[-1]), rtol=1e-4)
    assert np.allclose(Q * s, hist.frames[-1], atol=1e-4)


def test_equilibria_examples():
    g = GradientSphereField(3)
    seeds = [np.array([0.05, 0.0, 0.0, 1.0]), np.array([0.0, 0.05, 0.0, -1.0]), np.array([0.0, 0.0, 0.04, 1.0])]
    res = find_equilibria(g, [s / np.linalg.norm(s) for s in seeds])
    assert len(res) == 2
    assert {r.tag for r in res} == {"source", "sink"}
    for r in res:
        assert np.allclose(np.abs(r.eigenvalues), 1.0)
    (e,) = find_equilibria(LEMMA1, [np.array([0.01, -0.02, 0.01])]).roots
    assert np.allclose(e.point.array, 0.0, atol=1e-12)
    re = np.sort(np.real(e.eigenvalues))
    assert re == pytest.approx([-1.0, 1.0, 1.0], abs=1e-8)
    assert len(find_equilibria(ANOSOV, [np.array([0.1, 0.2, 0.3])])) == 0


def test_lemma1_periodic_orbit_and_reversal():
    res = find_periodic_orbit(LEMMA1, PHI0, np.array([1.1, 0.0, 0.1]))
    assert res.converged and res.stability_tag == "attracting"
    assert res.period == pytest.approx(2 * np.pi, abs=1e-6)
    assert np.abs(res.floquet_multipliers) == pytest.approx([np.exp(-2 * np.pi)] * 2, rel=1e-4)
    assert len(res.floquet_multipliers) == 2
    rev = find_periodic_orbit(LEMMA1.reversed(), HyperplaneSection((0.0, 0.0, 0.0), (0.0, -1.0, 0.0)),
                              np.array([1.0001, 0.0, 0.0001]))
    assert rev.stability_tag == "repelling"
    prod = np.sort(np.abs(rev.floquet_multipliers)) * np.sort(np.abs(res.floquet_multipliers))
    assert prod == pytest.approx([1.0, 1.0], rel=1e-6)


def test_plykin_source_orbit_is_repelling():
    res = find_periodic_orbit(PLYKIN, FiberSection(0.0), ChartedPoint.of("S2qxS1", (0.5, 0.0, 0.0)))
    assert res.stability_tag == "repelling" and res.period == 1.0
    ev = np.linalg.eigvals(PLYKIN.base.jacobian(np.array([0.5, 0.0])))
    assert np.sort(np.abs(res.floquet_multipliers)) == pytest.approx(np.sort(np.abs(ev)))


def test_no_return_and_bad_inputs():
    with pytest.raises(NoReturnError):
        find_periodic_orbit(LEMMA1, HyperplaneSection((0.0, 0.0, 5.0), (0.0, 0.0, 1.0)),
                            np.array([1.0, 0.0, 0.1]), max_time=5.0)
    with pytest.raises(InvalidInputError):
        integrate(LEMMA1, np.zeros(3), 1.0, step=-1.0)
    with pytest.raises(InvalidInputError):
        integrate(LEMMA1, np.zeros(2), 1.0)


def test_propagate_matches_single_integrations():
    starts = [np.array([0.5, 0.5, 0.2]), np.array([1.3, -0.2, 0.0])]
    res = propagate(LEMMA1, starts, 1.0)
    for s, x in zip(starts, res.coords):
        assert np.allclose(x, flow_map(LEMMA1, s, 1.0).array, atol=1e-13)
