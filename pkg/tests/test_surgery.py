import numpy as np
import pytest

from aflows.errors import ExcisionError, GluingError, InvalidInputError
from aflows.models import DaConfig, DaMap, Lemma1Field, PlykinMap
from aflows.orbits import flow_map
from aflows.surgery import (
    BlendedField,
    GlueDescriptor,
    RadialSink,
    TrapSurface,
    boundary_flux,
    excise_repelling_orbit,
    glue_flows,
    lemma1_tube_surface,
    sphere_surface,
    surgery_compatibility,
    theorem1_assembly,
)
from aflows.systems import SuspensionFlow

PLYKIN = SuspensionFlow(PlykinMap(), chart="S2qxS1")


@pytest.fixture(scope="module")
def excised():
    return excise_repelling_orbit(PLYKIN, (0.0, 0.0))


def test_excision_boundary_is_transversal(excised):
    P, surface = excised
    flux = boundary_flux(PLYKIN, surface)
    assert len(surface) == 10000 and np.all(flux < 0)
    assert np.allclose(np.linalg.norm(surface.normals, axis=1), 1.0)
    assert surface.topology_tag == "torus"


def test_points_near_the_orbit_move_away(excised):
    P, _ = excised
    tube = P.tube
    x = np.array([0.0005, 0.0003, 0.0])
    assert tube.inside(x[None])[0]
    d0 = np.linalg.norm(x[:2])
    y = flow_map(PLYKIN, x, 2.0).array
    assert PLYKIN.base_distance(y[:2], np.zeros(2)) > d0


def test_excision_rejects_oversized_tubes_and_non_sources():
    with pytest.raises(ExcisionError) as err:
        excise_repelling_orbit(PLYKIN, (0.0, 0.0), tube_radius=0.05)
    assert err.value.sample is not None
    with pytest.raises(InvalidInputError):
        excise_repelling_orbit(PLYKIN, (0.1, 0.1))
    da = SuspensionFlow(DaMap(DaConfig()))
    P, surf = excise_repelling_orbit(da, (0.0, 0.0))
    assert np.all(boundary_flux(da, surf) < 0)


def test_compatibility_examples(excised):
    _, P_surface = excised
    tube = lemma1_tube_surface("ball", 0.3)
    good = GlueDescriptor(tube, P_surface, outer_system=Lemma1Field(), inner_system=PLYKIN, mode="identify")
    rep = surgery_compatibility(good)
    assert rep.passes and rep.outer_margin > 0 and rep.inner_margin > 0
    bad = GlueDescriptor(tube, P_surface, outer_system=Lemma1Field(time_reversed=True), inner_system=PLYKIN,
                         mode="identify")
    rep = surgery_compatibility(bad)
    assert not rep.passes and rep.outer_measured == "outward"
    sph = sphere_surface("ball", 0.3)
    rep = surgery_compatibility(GlueDescriptor(sph, P_surface))
    assert not rep.passes and "topology" in rep.reasons[0]


def test_blend_and_gluing_error():
    inner, outer = sphere_surface("ball", 1.5), sphere_surface("ball", 1.6)
    desc = GlueDescriptor(outer, inner, collar_width=0.1)
    res = glue_flows(RadialSink(), Lemma1Field(), desc, chart="ball")
    assert res.collar_min_norm > 0
    F = res.system
    rng = np.random.default_rng(0)
    u = rng.normal(size=(500, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    far, near = u * 2.0, u * 1.2
    assert np.array_equal(F.evaluate(far), RadialSink().evaluate(far))
    assert np.array_equal(F.evaluate(near), Lemma1Field().evaluate(near))
    with pytest.raises(GluingError):
        glue_flows(RadialSink().reversed(), Lemma1Field(), GlueDescriptor(outer, inner))


def test_descriptor_validation():
    s = sphere_surface("ball", 1.0)
    with pytest.raises(InvalidInputError):
        GlueDescriptor(s, s, collar_width=0.0)
    with pytest.raises(InvalidInputError):
        GlueDescriptor(s, s, outer_crossing="sideways")
    with pytest.raises(InvalidInputError):
        TrapSurface("x", np.zeros((2, 3)), np.ones((2, 3)), "sphere")
    with pytest.raises(InvalidInputError):
        BlendedField(Lemma1Field(), RadialSink(), lambda x: x, lambda x: x, 0.0)


def test_flipped_surface_fails_everywhere(excised):
    _, surface = excised
    assert np.all(boundary_flux(PLYKIN, surface.flipped()) > 0)


def test_theorem1_descriptors_pass():
    flow = theorem1_assembly()
    assert [surgery_compatibility(d).passes for d in flow.descriptors] == [True, True]
    assert flow.collar_min_norm > 0
    assert set(flow.components) == {"s3", "ball", "plykin"}
