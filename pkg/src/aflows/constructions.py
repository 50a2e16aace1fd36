"""Registry of the named constructions with their samplers, traps and seeds."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .charts import ChartedPoint
from .errors import ConfigurationError
from .models import (
    TWO_TORSION,
    AnosovMap,
    DaConfig,
    DaMap,
    GradientSphereField,
    Lemma1Field,
    PlykinMap,
    extend_to_next_sphere,
    plykin_config,
)
from .orbits import FiberSection, HyperplaneSection
from .surgery import (
    AssemblyParameters,
    TrapSurface,
    excise_repelling_orbit,
    fibonacci_sphere,
    lemma1_tube_surface,
    sample_assembly,
    theorem1_assembly,
)
from .systems import SuspensionFlow


@dataclass
class Built:
    """A constructed system plus everything the analyses need to exercise it."""

    name: str
    system: object
    start: ChartedPoint
    sampler: Callable  # (n, rng) -> list of ChartedPoint over the whole phase space
    traps: list = field(default_factory=list)
    interior_sampler: Callable | None = None  # (n, rng) -> points inside traps[0]
    equilibrium_seeds: list = field(default_factory=list)
    section: object = None
    orbit_seeds: list = field(default_factory=list)
    cloud: Callable | None = None  # (rng, **kw) -> (chart, points) on the attractor
    transient: float = 0.0
    step: float | None = None
    inventory: dict = field(default_factory=dict)  # "kind:tag" -> expected count of isolated pieces
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Construction:
    name: str
    anchor: str
    description: str
    defaults: dict
    builder: Callable

    def build(self, **overrides) -> Built:
        unknown = set(overrides) - set(self.defaults)
        if unknown:
            raise ConfigurationError(f"unknown parameter(s) for {self.name}: {', '.join(sorted(unknown))}",
                                     sorted(unknown))
        params = dict(self.defaults)
        params.update(overrides)
        return self.builder(params)


# ---------------------------------------------------------------------------
# helpers


def _torus_sampler(chart, exclude=None):
    def sample(n, rng):
        out = []
        while len(out) < n:
            X = rng.random((n, 3))
            if exclude is not None:
                X = X[~exclude(X)]
            out.extend(ChartedPoint.of(chart, x) for x in X)
        return out[:n]

    return sample


def _map_cloud(m, chart):
    def cloud(rng, orbits: int = 1000, transient: int = 1000, iterates: int = 1000, fiber: bool = True):
        q = rng.random((orbits, 2))
        for _ in range(transient):
            q = m.evaluate(q)
        pts = np.empty((iterates, orbits, 2))
        for k in range(iterates):
            q = m.evaluate(q)
            pts[k] = q
        pts = pts.reshape(-1, 2)
        if not fiber:
            return chart, pts
        # the suspension flow at time k + s sits at (f^k q, s)
        s = rng.random((len(pts), 1))
        return chart, np.concatenate([pts, s], axis=1)

    return cloud


def _grid_seeds(chart, n=12):
    g = (np.arange(n) + 0.5) / n
    return [ChartedPoint.of(chart, (a, b, 0.0)) for a in g for b in g]


def _da_cfg(params, base_cfg: DaConfig) -> DaConfig:
    kw = {k: params[k] for k in ("radius", "core", "plateau", "stable_target", "strength") if k in params}
    return base_cfg.with_updates(**kw)


# ---------------------------------------------------------------------------
# builders


def _build_anosov(p):
    chart = "T2xS1"
    susp = SuspensionFlow(AnosovMap(int(p["power"])), chart=chart)
    seeds = [ChartedPoint.of(chart, (0.0, 0.0, 0.0))] + _grid_seeds(chart, 6)
    return Built("anosov_susp", susp, ChartedPoint.of(chart, (0.3, 0.7, 0.0)), _torus_sampler(chart),
                 section=FiberSection(0.0, chart), orbit_seeds=seeds, cloud=_map_cloud(susp.base, chart),
                 extra={"map": susp.base})


def _suspension_with_trap(name, m, chart, tube_radius, expansion, transient):
    susp = SuspensionFlow(m, chart=chart)
    P, surface = excise_repelling_orbit(susp, (0.0, 0.0), tube_radius, expansion, chart=chart)
    tube = P.tube
    seeds = [ChartedPoint.of(chart, (c[0], c[1], 0.0)) for c in m.centers] + _grid_seeds(chart)
    return Built(name, susp, ChartedPoint.of(chart, (0.3, 0.7, 0.0)), _torus_sampler(chart),
                 traps=[surface], interior_sampler=_torus_sampler(chart, exclude=tube.inside),
                 section=FiberSection(0.0, chart), orbit_seeds=seeds, cloud=_map_cloud(m, chart),
                 transient=transient, inventory={"trap:attractor": 1, "periodic_orbit:repelling": len(m.centers)},
                 extra={"map": m, "restricted": P, "tube": tube})


def _build_da(p):
    cfg = _da_cfg(p, DaConfig())
    m = DaMap(cfg)
    m.centers = cfg.centers
    return _suspension_with_trap("da_susp", m, "T2xS1", p["tube_radius"], p["expansion"], p["transient"])


def _build_plykin(p):
    cfg = _da_cfg(p, plykin_config())
    m = PlykinMap(cfg)
    m.centers = m.da.centers
    return _suspension_with_trap("plykin_susp", m, "S2qxS1", p["tube_radius"], p["expansion"], p["transient"])


def _ball_sampler(chart, radius):
    def sample(n, rng):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        r = radius * rng.random(n) ** (1.0 / 3.0)
        return [ChartedPoint.of(chart, x) for x in v * r[:, None]]

    return sample


def _build_lemma1(p):
    field_ = Lemma1Field(time_reversed=bool(p["time_reversed"]))
    chart = field_.chart
    r = float(p["trap_radius"])
    trap = lemma1_tube_surface(chart, r, name="orbit_tube")

    def interior(n, rng):
        from .charts import tube_to_cartesian

        d = r * np.sqrt(rng.random(n)) * 0.999
        t = np.stack([d, 2 * np.pi * rng.random(n), 2 * np.pi * rng.random(n)], axis=-1)
        return [ChartedPoint.of(chart, x) for x in tube_to_cartesian(t)]

    normal = (0.0, -1.0, 0.0) if p["time_reversed"] else (0.0, 1.0, 0.0)
    return Built("lemma1", field_, ChartedPoint.of(chart, (1.1, 0.0, 0.1)), _ball_sampler(chart, 1.5),
                 traps=[trap], interior_sampler=interior,
                 equilibrium_seeds=[ChartedPoint.of(chart, (0.01, -0.02, 0.01))],
                 section=HyperplaneSection((0.0, 0.0, 0.0), normal, chart),
                 orbit_seeds=[ChartedPoint.of(chart, (1.1, 0.0, 0.1))], step=1e-3,
                 inventory={"trap:attractor": 1, "equilibrium:saddle": 1,
                            "periodic_orbit:" + ("repelling" if p["time_reversed"] else "attracting"): 1})


def sphere_cap_surface(n: int, pole, angle: float, samples: int = 4000, chart: str | None = None) -> TrapSurface:
    """Boundary of the geodesic cap of the given angular radius about ``pole`` on S^n (n = 3 only for sampling)."""
    pole = np.asarray(pole, dtype=float)
    dim = n + 1
    Q, _ = np.linalg.qr(np.concatenate([pole[:, None], np.eye(dim)], axis=1))
    B = Q[:, 1:dim]
    if n != 3:
        raise ConfigurationError("cap surfaces are sampled on S^3 only", ["n"])
    v = fibonacci_sphere(samples) @ B.T
    pts = np.cos(angle) * pole + np.sin(angle) * v
    normals = -np.sin(angle) * pole + np.cos(angle) * v
    cosang = np.cos(angle)

    def defining(X):
        return cosang - np.asarray(X) @ pole

    return TrapSurface(chart or f"S{n}", pts, normals, "sphere", defining, None, "sink_cap")


def _sphere_sampler(chart, dim):
    def sample(n, rng):
        x = rng.normal(size=(n, dim))
        x /= np.linalg.norm(x, axis=-1, keepdims=True)
        return [ChartedPoint.of(chart, v) for v in x]

    return sample


def _build_gradient(p):
    n = int(p["n"])
    f = GradientSphereField(n)
    chart = f.chart
    e = np.zeros(n + 1)
    e[-1] = 1.0
    seeds = [ChartedPoint.of(chart, (e + 0.05 * np.eye(n + 1)[0]) / np.linalg.norm(e + 0.05 * np.eye(n + 1)[0])),
             ChartedPoint.of(chart, (-e + 0.05 * np.eye(n + 1)[0]) / np.linalg.norm(-e + 0.05 * np.eye(n + 1)[0]))]
    traps = []
    interior = None
    if n == 3:
        cap = sphere_cap_surface(3, -e, float(p["cap_angle"]), chart=chart)
        traps = [cap]

        def interior(k, rng, cap_angle=float(p["cap_angle"])):
            out = []
            while len(out) < k:
                for x in _sphere_sampler(chart, n + 1)(4 * k, rng):
                    if cap.inside(x.array[None])[0]:
                        out.append(x)
            return out[:k]

    start = np.ones(n + 1) / np.sqrt(n + 1)
    return Built(f"gradient_sphere({n})", f, ChartedPoint.of(chart, start), _sphere_sampler(chart, n + 1),
                 traps=traps, interior_sampler=interior, equilibrium_seeds=seeds, step=1e-2,
                 inventory=dict({"equilibrium:source": 1, "equilibrium:sink": 1}, **({"trap:attractor": 1} if traps else {})))


def _assembly_params(p):
    return AssemblyParameters(inner_radius=float(p["inner_radius"]), collar_width=float(p["collar_width"]),
                              lemma1_tube=float(p["lemma1_tube"]),
                              plykin_tube=None if p["tube_radius"] is None else float(p["tube_radius"]),
                              expansion=float(p["expansion"]))


def _build_theorem1(p):
    flow = theorem1_assembly(_assembly_params(p))
    trap = flow.trap

    def sampler(n, rng):
        return sample_assembly(flow, n, rng)

    def interior(n, rng):
        return _torus_sampler("plykin", exclude=flow.tube.inside)(n, rng)

    north = np.array([0.0, 0.03, 0.0, 1.0])
    seeds = [ChartedPoint.of("s3", north / np.linalg.norm(north)), ChartedPoint.of("ball", (0.02, -0.01, 0.03))]
    orbit_seeds = [ChartedPoint.of("plykin", (c[0], c[1], 0.0)) for c in TWO_TORSION[1:]] + _grid_seeds("plykin", 8)
    return Built("theorem1_s3", flow, ChartedPoint.of("plykin", (0.3, 0.7, 0.0)), sampler, traps=[trap],
                 interior_sampler=interior, equilibrium_seeds=seeds, section=FiberSection(0.0, "plykin"),
                 orbit_seeds=orbit_seeds, cloud=_map_cloud(flow.plykin_map, "plykin"), transient=0.0,
                 inventory={"trap:attractor": 1, "equilibrium:source": 1, "equilibrium:saddle": 1,
                            "periodic_orbit:repelling": 3},
                 extra={"assembly": flow})


def lift_point(kind: str, x: ChartedPoint, theta: float) -> ChartedPoint:
    """Embed a point of the equatorial S^3 system into the lifted system at latitude theta."""
    a = x.array
    if kind == "ambient":
        return ChartedPoint.of(x.chart_id + "+", np.append(np.cos(theta) * a, np.sin(theta)))
    return ChartedPoint.of(x.chart_id + "+", np.append(a, theta))


def _build_extension(p):
    n = int(p["n"])
    if n < 2:
        raise ConfigurationError("extend_sphere needs n >= 2", ["n"])
    if n != 4:
        return _build_gradient_extension(n)
    base = _build_theorem1(p)
    flow = extend_to_next_sphere(base.system)
    kinds = {k[:-1]: v for k, v in flow.kinds.items()}

    def equatorial(n_, rng):
        return [lift_point(kinds[x.chart_id], x, 0.0) for x in base.sampler(n_, rng)]

    def sampler(n_, rng):
        pts = base.sampler(n_, rng)
        th = np.arcsin(2.0 * rng.random(n_) - 1.0) * 0.98
        return [lift_point(kinds[x.chart_id], x, t) for x, t in zip(pts, th)]

    trap = base.traps[0]
    lifted_trap = TrapSurface("plykin+", np.concatenate([trap.points, np.zeros((len(trap), 1))], axis=1),
                              np.concatenate([trap.normals, np.zeros((len(trap), 1))], axis=1), "torus",
                              lambda X, f=trap.defining: f(np.asarray(X)[..., :-1]), None, "boundary_P+")
    poles = [ChartedPoint.of("s3+", (0.0, 0.02, 0.0, 0.0, 1.0)), ChartedPoint.of("s3+", (0.0, 0.02, 0.0, 0.0, -1.0))]
    return Built("extend_sphere(4)", flow, lift_point("suspension", base.start, 0.0), sampler, traps=[lifted_trap],
                 equilibrium_seeds=poles, inventory={"trap:attractor": 1, "equilibrium:source": 2},
                 extra={"base": base, "equatorial_sampler": equatorial, "kinds": flow.kinds})


def _build_gradient_extension(n):
    base = _build_gradient({"n": n - 1, "cap_angle": 0.5})
    flow = extend_to_next_sphere(base.system)
    chart = flow.chart
    e = np.zeros(n + 1)
    e[-1] = 1.0
    off = np.zeros(n + 1)
    off[0] = 0.02
    poles = [ChartedPoint.of(chart, (e + off) / np.linalg.norm(e + off)),
             ChartedPoint.of(chart, (-e + off) / np.linalg.norm(-e + off))]

    def equatorial(k, rng):
        return [ChartedPoint.of(chart, np.append(x.array, 0.0)) for x in base.sampler(k, rng)]

    start = np.append(base.start.array, 0.0)
    return Built(f"extend_sphere({n})", flow, ChartedPoint.of(chart, start), _sphere_sampler(chart, n + 1),
                 equilibrium_seeds=poles + [ChartedPoint.of(chart, np.append(x.array, 0.0)) for x in base.equilibrium_seeds],
                 step=1e-2, extra={"base": base, "equatorial_sampler": equatorial, "kinds": {chart: "ambient"}})


_ANCHORS = {
    "anosov_susp": "Theorem 2 (hyperbolic automorphism of T^2)",
    "da_susp": "Theorem 2 (DA map on T^2, mapping torus)",
    "plykin_susp": "Lemma 2 (sphere map with four sources, suspension on S^2 x S^1)",
    "lemma1": "Lemma 1 (local model rho' = rho(1 - rho), phi' = 1, z' = -z)",
    "gradient_sphere(n)": "Theorem 1 (ambient north-south gradient flow on S^n)",
    "extend_sphere(n)": "Theorem 3 (extension from S^3 to S^4)",
    "theorem1_s3": "Theorem 1 (assembly on S^3)",
}

_DA_DEFAULTS = {"radius": 0.45, "core": 0.025, "plateau": 0.1, "stable_target": 1.8, "strength": None,
                "tube_radius": None, "expansion": 1.2, "transient": 100.0}
_PLYKIN_DEFAULTS = dict(_DA_DEFAULTS, radius=0.24, core=0.0015)
_ASSEMBLY_DEFAULTS = {"inner_radius": 1.5, "collar_width": 0.1, "lemma1_tube": 0.3, "tube_radius": None,
                      "expansion": 1.2}

REGISTRY = {
    "anosov_susp": Construction("anosov_susp", _ANCHORS["anosov_susp"], "suspension of A = [[2,1],[1,1]]",
                                {"power": 1}, _build_anosov),
    "da_susp": Construction("da_susp", _ANCHORS["da_susp"], "suspension of the DA map with a source at 0",
                            _DA_DEFAULTS, _build_da),
    "plykin_susp": Construction("plykin_susp", _ANCHORS["plykin_susp"],
                                "suspension of the sigma-quotient of an equivariant DA map on A^3",
                                _PLYKIN_DEFAULTS, _build_plykin),
    "lemma1": Construction("lemma1", _ANCHORS["lemma1"], "local model with an attracting circle and an axis saddle",
                           {"time_reversed": False, "trap_radius": 0.3}, _build_lemma1),
    "gradient_sphere(n)": Construction("gradient_sphere(n)", _ANCHORS["gradient_sphere(n)"],
                                       "north-south flow on S^n", {"n": 3, "cap_angle": 0.5}, _build_gradient),
    "extend_sphere(n)": Construction("extend_sphere(n)", _ANCHORS["extend_sphere(n)"],
                                     "the S^3 assembly extended to S^4 with sources at both poles",
                                     dict(_ASSEMBLY_DEFAULTS, n=4), _build_extension),
    "theorem1_s3": Construction("theorem1_s3", _ANCHORS["theorem1_s3"],
                                "gradient flow on S^3 with the sink replaced by the local model and its orbit by P",
                                _ASSEMBLY_DEFAULTS, _build_theorem1),
}

_PARAM_NAME = re.compile(r"^([a-z0-9_]+)(?:\((\d+)\))?$")


def resolve(name: str):
    """Map 'gradient_sphere(4)' to (registry entry, {'n': 4})."""
    m = _PARAM_NAME.match(name.strip())
    if not m:
        raise ConfigurationError(f"malformed system name {name!r}", ["system"])
    base, arg = m.group(1), m.group(2)
    key = base + "(n)" if arg is not None or base + "(n)" in REGISTRY else base
    if key not in REGISTRY:
        raise ConfigurationError(f"unknown system {name!r}", ["system"])
    extra = {"n": int(arg)} if arg is not None else {}
    return REGISTRY[key], extra


def build(name: str, **overrides) -> Built:
    entry, extra = resolve(name)
    extra.update(overrides)
    return entry.build(**extra)
