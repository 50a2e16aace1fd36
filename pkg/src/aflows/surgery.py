"""Trap surfaces, excision of repelling orbits, gluing and the assembly on S^3.

The assembly chain on S^3:

1. north-south flow on S^3; in the stereographic chart from the north pole
   it is exactly u' = -u, a sink at the origin;
2. inside |u| < 1.5 the sink is replaced by the local periodic-orbit model
   (attracting circle rho = 1, z = 0 and a saddle at the origin), blended
   over a quintic collar;
3. the tube of radius 0.3 about the attracting circle is cut out and its
   boundary torus is identified with the boundary of P, the complement of a
   tube about one repelling orbit in the suspension of the sphere map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .charts import (
    Atlas,
    Chart,
    TWO_PI,
    cartesian_to_tube,
    inverse_stereo_from_north,
    inverse_stereo_from_north_jacobian,
    stereo_from_north,
    stereo_from_north_jacobian,
    torus_delta,
    torus_reduce,
    tube_to_cartesian,
)
from .errors import ExcisionError, GluingError, InvalidInputError
from .models import (
    STABLE_DIR,
    UNSTABLE_DIR,
    GradientSphereField,
    Lemma1Field,
    PlykinMap,
    _smoothstep5,
    _smoothstep5_slope,
)
from .systems import HybridSystem, SuspensionFlow, Transition, VectorField


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class TrapSurface:
    """Sampled closed hypersurface in one chart with unit normals pointing out of its region.

    ``defining(X)`` is negative inside the region and positive outside; it
    is used for membership tests and, when it is a distance-like function,
    as the collar coordinate of a blend.
    """

    chart: str
    points: np.ndarray
    normals: np.ndarray
    topology_tag: str
    defining: object = None
    defining_gradient: object = None
    name: str = ""
    density_bound: float = np.inf

    def __post_init__(self):
        if self.topology_tag not in ("sphere", "torus"):
            raise InvalidInputError(f"unknown topology tag {self.topology_tag!r}")
        n = np.linalg.norm(self.normals, axis=-1)
        if np.any(np.abs(n - 1.0) > 1e-9):
            raise InvalidInputError("trap surface normals must be unit length")
        if self.max_gap() > self.density_bound:
            raise InvalidInputError(
                f"samples too sparse: nearest-neighbour gap {self.max_gap():.3g} exceeds {self.density_bound:.3g}"
            )

    def __len__(self):
        return len(self.points)

    def max_gap(self) -> float:
        if len(self.points) < 2:
            return np.inf
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return float(np.max(d[:, 1]))

    def flipped(self) -> "TrapSurface":
        neg = None if self.defining is None else (lambda X, f=self.defining: -f(X))
        negg = None if self.defining_gradient is None else (lambda X, f=self.defining_gradient: -f(X))
        return TrapSurface(self.chart, self.points, -self.normals, self.topology_tag, neg, negg,
                           self.name + "_flipped", self.density_bound)

    def inside(self, X):
        if self.defining is None:
            raise InvalidInputError(f"surface {self.name!r} has no defining function")
        return np.asarray(self.defining(np.asarray(X, dtype=float))) < 0


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def sphere_surface(chart: str, radius: float, center=(0.0, 0.0, 0.0), n: int = 4000, name: str = "sphere") -> TrapSurface:
    """Round 2-sphere in a 3-dimensional chart, normals pointing away from ``center``."""
    c = np.asarray(center, dtype=float)
    u = fibonacci_sphere(n)

    def defining(X):
        return np.linalg.norm(np.asarray(X) - c, axis=-1) - radius

    def gradient(X):
        d = np.asarray(X) - c
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    return TrapSurface(chart, c + radius * u, u, "sphere", defining, gradient, name)


def lemma1_tube_surface(chart: str, radius: float, n_psi: int = 80, n_phi: int = 125, name: str = "lemma1_tube") -> TrapSurface:
    """Torus of points at distance ``radius`` from the circle rho = 1, z = 0; normals leave the tube."""
    psi, phi = np.meshgrid(np.linspace(0, TWO_PI, n_psi, endpoint=False),
                           np.linspace(0, TWO_PI, n_phi, endpoint=False), indexing="ij")
    psi, phi = psi.ravel(), phi.ravel()
    pts = tube_to_cartesian(np.stack([np.full_like(psi, radius), psi, phi], axis=-1))
    nrm = np.stack([np.cos(psi) * np.cos(phi), np.cos(psi) * np.sin(phi), np.sin(psi)], axis=-1)

    def defining(X):
        return cartesian_to_tube(X)[..., 0] - radius

    return TrapSurface(chart, pts, nrm, "torus", defining, None, name)


def component_of(system, chart: str):
    if isinstance(system, HybridSystem):
        return system.component(chart)
    return system


def boundary_flux(system, surface: TrapSurface) -> np.ndarray:
    """Field . normal at every sample of ``surface``."""
    comp = component_of(system, surface.chart)
    F = np.asarray(comp.evaluate(surface.points), dtype=float)
    return np.einsum("ij,ij->i", F, surface.normals)


# ---------------------------------------------------------------------------
# simple fields used by the assembly


class RadialSink(VectorField):
    """u' = -u: the north-south flow of S^3 read in the stereographic chart from the north pole."""

    dim = manifold_dim = 3
    default_step = 1e-2

    def __init__(self, chart: str = "ball"):
        self.chart = chart
        self.name = "radial_sink"

    def evaluate(self, x):
        return -np.asarray(x, dtype=float)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-np.eye(3), x.shape + (3,)).copy()


class DomainRestriction(VectorField):
    """A field used only on part of its chart (``domain`` is a membership predicate)."""

    def __init__(self, field: VectorField, domain, chart: str | None = None):
        self.field = field
        self.domain = domain
        self.dim = field.dim
        self.manifold_dim = field.manifold_dim
        self.chart = chart or field.chart
        self.default_step = field.default_step
        self.name = getattr(field, "name", "field")

    def evaluate(self, x):
        return self.field.evaluate(x)

    def jacobian(self, x):
        return self.field.jacobian(x)

    def project(self, x):
        return self.field.project(x)

    def tangent_basis(self, x):
        return self.field.tangent_basis(x)

    def contains(self, x):
        return self.field.contains(x) & self.domain(np.asarray(x, dtype=float))

    def reversed(self):
        return DomainRestriction(self.field.reversed(), self.domain, self.chart)


class BlendedField(VectorField):
    """inner where the collar coordinate ell <= 0, outer where ell >= width, quintic blend between."""

    def __init__(self, inner: VectorField, outer: VectorField, ell, ell_gradient, width: float,
                 chart: str | None = None, domain=None):
        if not width > 0:
            raise InvalidInputError("collar width must be positive")
        self.inner, self.outer = inner, outer
        self.ell, self.ell_gradient, self.width = ell, ell_gradient, width
        self.dim = inner.dim
        self.manifold_dim = inner.manifold_dim
        self.chart = chart or inner.chart
        self.default_step = min(inner.default_step, outer.default_step)
        self.name = f"blend({getattr(inner, 'name', 'inner')},{getattr(outer, 'name', 'outer')})"
        self.domain = domain

    def weight(self, x):
        return 1.0 - _smoothstep5(self.ell(x) / self.width)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        lam = self.weight(x)[..., None]
        Fi, Fo = self.inner.evaluate(x), self.outer.evaluate(x)
        out = lam * Fi + (1.0 - lam) * Fo
        out = np.where(lam == 1.0, Fi, out)
        return np.where(lam == 0.0, Fo, out)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        lam = self.weight(x)[..., None, None]
        dlam = -_smoothstep5_slope(self.ell(x) / self.width)[..., None] * self.ell_gradient(x) / self.width
        Fi, Fo = self.inner.evaluate(x), self.outer.evaluate(x)
        return lam * self.inner.jacobian(x) + (1.0 - lam) * self.outer.jacobian(x) + (Fi - Fo)[..., :, None] * dlam[..., None, :]

    def contains(self, x):
        ok = np.all(np.isfinite(x), axis=-1)
        return ok if self.domain is None else ok & self.domain(np.asarray(x, dtype=float))

    def reversed(self):
        return BlendedField(self.inner.reversed(), self.outer.reversed(), self.ell, self.ell_gradient,
                            self.width, self.chart, self.domain)


# ---------------------------------------------------------------------------
# tubes about repelling orbits of suspensions


class SourceTube:
    """Tube about the suspension of a fixed source c of a torus (or sphere) map.

    With V(q) = |q - c|^2 and a constant K > 1 such that V(f(q)) >= K V(q)
    near c, the function

        G(q, s) = (1 - beta(s)) V(q) K^s + beta(s) V(f(q)) K^(s-1),

    beta the quintic smoothstep, is continuous across the seam and strictly
    increasing along the flow.  The tube is {G < r^2}; the flow leaves it
    transversally, so its complement is a trapping region.  Angular
    coordinates on the boundary interpolate the angle of q - c and of
    f(q) - c, which makes them continuous across the seam as well.
    """

    def __init__(self, susp: SuspensionFlow, center, radius: float, expansion: float = 1.2):
        self.susp = susp
        self.map = susp.base
        self.c = np.asarray(center, dtype=float)
        self.r = float(radius)
        self.K = float(expansion)
        self.reach = 1.5 * self.r
        self.quotient = bool(getattr(self.map, "quotient", False))
        self.period = np.pi if self.quotient else TWO_PI
        da = getattr(self.map, "da", self.map)
        self._local = da if hasattr(da, "local_image") else None

    def _image(self, q):
        """Displacements q - c and f(q) - c, plus Df(q)."""
        d = torus_delta(q, self.c)
        if self._local is not None:
            return d, self._local.local_image(d), lambda: self._local.local_jacobian(d)
        return d, torus_delta(self.map.evaluate(q), self.c), lambda: self.map.jacobian(q)

    def _V(self, q):
        d = torus_delta(q, self.c)
        return np.sum(d * d, axis=-1), d

    def near(self, X):
        d = torus_delta(np.asarray(X, dtype=float)[..., :2], self.c)
        return np.linalg.norm(d, axis=-1) < self.reach

    def G(self, X):
        X = np.asarray(X, dtype=float)
        q, s = X[..., :2], X[..., 2]
        dq, df, _ = self._image(q)
        Vq, Vf = np.sum(dq * dq, axis=-1), np.sum(df * df, axis=-1)
        b = _smoothstep5(s)
        return (1.0 - b) * Vq * self.K**s + b * Vf * self.K ** (s - 1.0)

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        q, s = X[..., :2], X[..., 2]
        dq, df, jac = self._image(q)
        Vq, Vf = np.sum(dq * dq, axis=-1), np.sum(df * df, axis=-1)
        D = jac()
        b = _smoothstep5(s)
        db = _smoothstep5_slope(s)
        Ks, Ks1 = self.K**s, self.K ** (s - 1.0)
        gq = ((1.0 - b) * Ks)[..., None] * 2.0 * dq + (b * Ks1)[..., None] * 2.0 * np.einsum("...ji,...j->...i", D, df)
        lnK = np.log(self.K)
        gs = db * (Vf * Ks1 - Vq * Ks) + lnK * ((1.0 - b) * Vq * Ks + b * Vf * Ks1)
        return np.concatenate([gq, gs[..., None]], axis=-1)

    def inside(self, X, rel_tol: float = 1e-9):
        X = np.asarray(X, dtype=float)
        near = self.near(X)
        out = np.zeros(X.shape[:-1], dtype=bool)
        if np.any(near):
            out[near] = self.G(X[near]) < self.r**2 * (1.0 - rel_tol)
        return out

    def defining(self, X):
        """Negative in the complement of the tube, positive inside it."""
        X = np.asarray(X, dtype=float)
        out = -np.ones(X.shape[:-1])
        near = self.near(X)
        if np.any(near):
            out[near] = (self.r**2 - self.G(X[near])) / self.r**2
        return out

    # boundary parametrisation -------------------------------------------
    def _eig(self, d):
        return d @ UNSTABLE_DIR, d @ STABLE_DIR

    def angle(self, X):
        X = np.asarray(X, dtype=float)
        q, s = X[..., :2], X[..., 2]
        dq, df, _ = self._image(q)
        a, b = self._eig(dq)
        af, bf = self._eig(df)
        th = np.arctan2(b, a)
        dth = np.mod(np.arctan2(bf, af) - th + np.pi, TWO_PI) - np.pi
        return np.mod(th + _smoothstep5(s) * dth, self.period)

    def radial_point(self, theta, s, iters: int = 60):
        """Point of the boundary {G = r^2} on the ray of angle theta in the fiber s.

        G increases along each ray, so Newton steps are kept inside a
        shrinking bracket.
        """
        theta = np.asarray(theta, dtype=float)
        s = np.broadcast_to(np.asarray(s, dtype=float), theta.shape)
        direction = np.cos(theta)[..., None] * UNSTABLE_DIR + np.sin(theta)[..., None] * STABLE_DIR
        lo = np.zeros(theta.shape)
        hi = np.full(theta.shape, self.reach)
        rho = np.full(theta.shape, self.r)
        target = self.r**2
        for _ in range(iters):
            X = np.concatenate([self.c + rho[..., None] * direction, s[..., None]], axis=-1)
            g = self.G(X) - target
            big = g >= 0
            hi = np.where(big, np.minimum(hi, rho), hi)
            lo = np.where(big, lo, np.maximum(lo, rho))
            slope = np.einsum("...i,...i->...", self.gradient(X)[..., :2], direction)
            with np.errstate(divide="ignore", invalid="ignore"):
                nxt = rho - g / slope
            bad = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
            nxt = np.where(bad, 0.5 * (lo + hi), nxt)
            done = np.abs(nxt - rho) <= 1e-15 * self.r
            rho = nxt
            if np.all(done):
                break
        q = torus_reduce(self.c + rho[..., None] * direction)
        return np.concatenate([q, s[..., None]], axis=-1)

    def _angle_offset(self, X):
        dq, df, _ = self._image(X[..., :2])
        a, b = self._eig(dq)
        af, bf = self._eig(df)
        return np.mod(np.arctan2(bf, af) - np.arctan2(b, a) + np.pi, TWO_PI) - np.pi

    def boundary_point(self, Theta, s, iters: int = 60):
        """Boundary point with angle coordinate Theta in the fiber s (safeguarded secant in the ray angle)."""
        Theta = np.asarray(Theta, dtype=float)
        s = np.broadcast_to(np.asarray(s, dtype=float), Theta.shape)
        beta = _smoothstep5(s)
        lo = Theta - np.pi / 2
        hi = Theta + np.pi / 2

        def resid(th):
            return th + beta * self._angle_offset(self.radial_point(th, s)) - Theta

        x0, f0 = Theta.copy(), resid(Theta)
        x1 = x0 - f0
        for _ in range(iters):
            f1 = resid(x1)
            pos = f1 >= 0
            hi = np.where(pos, np.minimum(hi, x1), hi)
            lo = np.where(pos, lo, np.maximum(lo, x1))
            with np.errstate(divide="ignore", invalid="ignore"):
                x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            bad = ~np.isfinite(x2) | (x2 < lo) | (x2 > hi)
            x2 = np.where(bad, 0.5 * (lo + hi), x2)
            done = np.abs(x2 - x1) < 1e-14
            x0, f0, x1 = x1, f1, x2
            if np.all(done):
                break
        return self.radial_point(x1, s)

    def sample_boundary(self, n_theta: int = 100, n_s: int = 100):
        th, s = np.meshgrid(np.linspace(0, TWO_PI, n_theta, endpoint=False),
                            np.linspace(0, 1, n_s, endpoint=False), indexing="ij")
        return self.radial_point(th.ravel(), s.ravel())

    def outward_normals(self, X):
        """Unit normals pointing out of the complement P, i.e. into the tube."""
        g = self.gradient(X)
        return -g / np.linalg.norm(g, axis=-1, keepdims=True)

    def closure_margin(self, n: int = 4000):
        """min of G / r^2 - 1 on the annulus r <= |q - c| <= reach over all fibers (must be positive)."""
        rng = np.random.default_rng(3)
        rho = self.r + (self.reach - self.r) * rng.random(n)
        th = TWO_PI * rng.random(n)
        d = (rho * np.cos(th))[:, None] * UNSTABLE_DIR + (rho * np.sin(th))[:, None] * STABLE_DIR
        X = np.concatenate([torus_reduce(self.c + d), rng.random((n, 1))], axis=-1)
        m = self.G(X) / self.r**2 - 1.0
        k = int(np.argmin(m))
        return float(m[k]), X[k]

    def max_expansion_deficit(self, n: int = 4000):
        """min over a disk about c of V(f q) / (K V(q)) - 1 (must be positive)."""
        rho = np.linspace(1e-3, 1.0, 40)[:, None] * self.r
        th = np.linspace(0, TWO_PI, n // 40, endpoint=False)[None, :]
        d = (rho * np.cos(th))[..., None] * UNSTABLE_DIR + (rho * np.sin(th))[..., None] * STABLE_DIR
        q = torus_reduce(self.c + d.reshape(-1, 2))
        Vq, _ = self._V(q)
        Vf, _ = self._V(self.map.evaluate(q))
        ratio = Vf / (self.K * Vq) - 1.0
        k = int(np.argmin(ratio))
        return float(ratio[k]), q[k]


class RestrictedSuspension(SuspensionFlow):
    """A suspension flow restricted to the complement of a source tube."""

    def __init__(self, susp: SuspensionFlow, tube: SourceTube, chart: str | None = None):
        super().__init__(susp.base, chart=chart or susp.chart, direction=susp.direction, name=susp.name + "|P")
        self.tube = tube
        self.parent = susp

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1) & ~self.tube.inside(x)

    def reversed(self):
        return RestrictedSuspension(self.parent.reversed(), self.tube, self.chart)


def _attractor_sample(m, n_orbits=200, transient=200, keep=20, seed=7):
    rng = np.random.default_rng(seed)
    x = rng.random((n_orbits, 2))
    for _ in range(transient):
        x = m.evaluate(x)
    pts = []
    for _ in range(keep):
        x = m.evaluate(x)
        pts.append(x)
    return np.concatenate(pts)


def excise_repelling_orbit(susp: SuspensionFlow, orbit, tube_radius: float | None = None, expansion: float = 1.2,
                           n_theta: int = 100, n_s: int = 100, chart: str | None = None):
    """Remove a tube about the suspension of a fixed source; returns (system on P, boundary of P).

    ``orbit`` is a periodic-orbit result, a charted point or base coordinates
    of the source.  The default tube radius is the saturation scale of the
    DA push, below which the expansion bound V(f q) >= K V(q) holds.
    """
    pt = getattr(orbit, "point", orbit)
    c = np.asarray(getattr(pt, "array", pt), dtype=float)[:2]
    base = susp.base
    c = torus_reduce(c)
    if np.linalg.norm(torus_delta(base.evaluate(c), c)) > 1e-9:
        raise InvalidInputError(f"{tuple(c)} is not a fixed point of the suspended map")
    ev = np.linalg.eigvals(base.jacobian(c))
    if not np.all(np.abs(ev) > 1.0):
        raise InvalidInputError(f"orbit through {tuple(c)} is not repelling (multipliers {ev})")
    if tube_radius is None:
        da = getattr(base, "da", base)
        tube_radius = float(da.cfg.core) if hasattr(da, "cfg") else 0.05
    tube = SourceTube(susp, c, tube_radius, expansion)
    deficit, where = tube.max_expansion_deficit()
    if deficit <= 0:
        raise ExcisionError(
            f"tube radius {tube_radius} too large: expansion bound fails at {tuple(float(v) for v in where)}",
            sample=tuple(float(v) for v in where), margin=deficit)
    closure, where = tube.closure_margin()
    if closure <= 0:
        raise ExcisionError(
            f"tube radius {tube_radius} too large: the tube does not close up at {tuple(float(v) for v in where)}",
            sample=tuple(float(v) for v in where), margin=closure)
    X = tube.sample_boundary(n_theta, n_s)
    normals = tube.outward_normals(X)
    flux = np.einsum("ij,ij->i", susp.evaluate(X), normals)
    k = int(np.argmax(flux))
    if not flux[k] < 0:
        raise ExcisionError(f"boundary not transversal at {tuple(float(v) for v in X[k])}", sample=tuple(float(v) for v in X[k]), margin=-flux[k])
    attr = _attractor_sample(base)
    pts = np.concatenate([attr, np.zeros((len(attr), 1))], axis=-1)
    hit = tube.inside(pts)
    if np.any(hit):
        w = tuple(float(v) for v in pts[np.argmax(hit)])
        raise ExcisionError(f"tube radius {tube_radius} meets the attractor at {w}", sample=w, margin=0.0)
    restricted = RestrictedSuspension(susp, tube, chart)
    surface = TrapSurface(restricted.chart, X, normals, "torus", tube.defining,
                          lambda Y: tube.gradient(Y) * -1.0, name="boundary_P")
    return restricted, surface


# ---------------------------------------------------------------------------
# gluing


@dataclass(frozen=True)
class GlueDescriptor:
    """Boundaries to be matched by a surgery.

    ``outer_boundary`` bounds the region cut out of the outer system (normals
    leave that region); ``inner_boundary`` bounds the region inserted from
    the inner system (normals leave it).  Crossing directions are declared
    relative to those regions: "inward" means the flow enters the region.
    ``mode`` is "blend" (same chart, collar of width ``collar_width``) or
    "identify" (boundaries identified by ``identification``).
    """

    outer_boundary: TrapSurface
    inner_boundary: TrapSurface
    outer_crossing: str = "inward"
    inner_crossing: str = "inward"
    collar_width: float = 0.1
    outer_system: object = None
    inner_system: object = None
    mode: str = "blend"
    identification: object = None
    name: str = "glue"

    def __post_init__(self):
        if not self.collar_width > 0:
            raise InvalidInputError("collar_width must be positive")
        for d in (self.outer_crossing, self.inner_crossing):
            if d not in ("inward", "outward"):
                raise InvalidInputError(f"crossing direction must be inward or outward, got {d!r}")
        if self.mode not in ("blend", "identify"):
            raise InvalidInputError(f"unknown gluing mode {self.mode!r}")


@dataclass
class CompatibilityReport:
    name: str
    passes: bool
    reasons: list
    outer_margin: float | None
    inner_margin: float | None
    outer_measured: str | None
    inner_measured: str | None

    def to_dict(self):
        return {
            "name": self.name,
            "passes": self.passes,
            "reasons": list(self.reasons),
            "outer_margin": self.outer_margin,
            "inner_margin": self.inner_margin,
            "outer_measured": self.outer_measured,
            "inner_measured": self.inner_measured,
        }


def _measured_direction(flux):
    if np.all(flux < 0):
        return "inward", float(np.min(-flux))
    if np.all(flux > 0):
        return "outward", float(np.min(flux))
    return "tangent", float(-np.min(np.abs(flux)))


def surgery_compatibility(desc: GlueDescriptor) -> CompatibilityReport:
    """Passes iff both boundaries are transversal and the flow enters both regions.

    Flow entering the cut-out region leaves what remains of the outer
    manifold; flow entering the inserted region is then consistent with it.
    """
    reasons = []
    if desc.outer_boundary.topology_tag != desc.inner_boundary.topology_tag:
        reasons.append(f"topology mismatch: {desc.outer_boundary.topology_tag} vs {desc.inner_boundary.topology_tag}")
    measured = {}
    margins = {}
    for side, surf, system, declared in (
        ("outer", desc.outer_boundary, desc.outer_system, desc.outer_crossing),
        ("inner", desc.inner_boundary, desc.inner_system, desc.inner_crossing),
    ):
        if system is None:
            measured[side], margins[side] = None, None
            direction = declared
        else:
            direction, margins[side] = _measured_direction(boundary_flux(system, surf))
            measured[side] = direction
            if direction == "tangent":
                reasons.append(f"{side} boundary is not transversal (flux changes sign)")
            elif direction != declared:
                reasons.append(f"{side} boundary declared {declared} but the flow crosses {direction}")
        if direction != "inward" and direction != "tangent":
            reasons.append(f"{side} crossing is {direction}; the surgery needs the flow to enter")
    return CompatibilityReport(desc.name, not reasons, reasons, margins["outer"], margins["inner"],
                               measured["outer"], measured["inner"])


@dataclass
class GlueResult:
    system: object
    report: CompatibilityReport
    collar_min_norm: float | None = None


def glue_flows(outer, inner, desc: GlueDescriptor, chart: str | None = None, collar_samples: int = 10000,
               seed: int = 0) -> GlueResult:
    """Glue ``inner`` into ``outer`` across the boundaries of ``desc``."""
    desc = _with_systems(desc, outer, inner)
    rep = surgery_compatibility(desc)
    if not rep.passes:
        raise GluingError("incompatible gluing: " + "; ".join(rep.reasons), rep)
    if desc.mode == "identify":
        if desc.identification is None:
            raise InvalidInputError("identify mode needs an identification transition")
        return GlueResult(desc.identification, rep)
    surf = desc.inner_boundary
    if surf.defining is None or surf.defining_gradient is None:
        raise InvalidInputError("blend mode needs a distance-like defining function on the inner boundary")
    blended = BlendedField(inner, outer, surf.defining, surf.defining_gradient, desc.collar_width, chart=chart)
    # sampled minimum of |F| over the collar
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(surf.points), collar_samples)
    depth = rng.random(collar_samples) * desc.collar_width
    P = surf.points[idx] + depth[:, None] * surf.normals[idx]
    mn = float(np.min(np.linalg.norm(blended.evaluate(P), axis=-1)))
    if not mn > 0:
        raise GluingError(f"blend vanishes in the collar (min |F| = {mn})", rep)
    return GlueResult(blended, rep, mn)


def _with_systems(desc, outer, inner):
    from dataclasses import replace

    kw = {}
    if desc.outer_system is None:
        kw["outer_system"] = outer
    if desc.inner_system is None:
        kw["inner_system"] = inner
    return replace(desc, **kw) if kw else desc


# ---------------------------------------------------------------------------
# the assembly on S^3


@dataclass
class AssemblyParameters:
    inner_radius: float = 1.5  # the local model is used unchanged inside this ball
    collar_width: float = 0.1
    to_ball: float = 2.5  # switch from the S^3 chart once |u| drops below this
    to_sphere: float = 3.0  # switch back once |u| exceeds this
    lemma1_tube: float = 0.3
    plykin_tube: float | None = None
    expansion: float = 1.2
    reversed_lemma1: bool = False


class AssembledFlow(HybridSystem):
    pass


def _lemma1_identification(tube: SourceTube, r_t: float):
    def to_p(U):
        t = cartesian_to_tube(U)
        Theta = t[..., 1] / 2.0 if tube.quotient else t[..., 1]
        return tube.boundary_point(Theta, t[..., 2] / TWO_PI)

    def to_ball(X):
        X = np.asarray(X, dtype=float)
        Theta = tube.angle(X)
        psi = 2.0 * Theta if tube.quotient else Theta
        return tube_to_cartesian(np.stack([np.full(psi.shape, r_t), psi, TWO_PI * X[..., 2]], axis=-1))

    return to_p, to_ball


def theorem1_assembly(params: AssemblyParameters | None = None, plykin_cfg=None) -> AssembledFlow:
    """Chart-glued flow on S^3 with a non-orientable expanding attractor.

    Charts: "s3" (ambient unit sphere, used away from the southern cap),
    "ball" (stereographic coordinates u from the north pole) and "plykin"
    (the suspension coordinates (q, s) of the region P).
    """
    p = params or AssemblyParameters()
    lemma = Lemma1Field(time_reversed=p.reversed_lemma1)
    sink = RadialSink("ball")
    r_in, r_t = p.inner_radius, p.lemma1_tube

    inner_sphere = sphere_surface("ball", r_in, name="model_ball")
    outer_sphere = sphere_surface("ball", r_in + p.collar_width, name="collar_outer")
    sink_desc = GlueDescriptor(outer_sphere, inner_sphere, collar_width=p.collar_width, name="sink_ball")
    ball_glue = glue_flows(sink, lemma, sink_desc, chart="ball")
    ball = ball_glue.system
    ball.domain = lambda U: np.linalg.norm(U, axis=-1) < p.to_sphere + 0.5

    pmap = PlykinMap(plykin_cfg)
    susp = SuspensionFlow(pmap, chart="plykin")
    src = np.zeros(2)
    P_system, P_surface = excise_repelling_orbit(susp, src, p.plykin_tube, p.expansion, chart="plykin")
    tube = P_system.tube
    to_p, to_ball = _lemma1_identification(tube, r_t)

    tube_surface = lemma1_tube_surface("ball", r_t)
    ident = Transition("ball", "plykin", guard=lambda U: cartesian_to_tube(U)[..., 0] - r_t,
                       apply=to_p, jacobian=None, locate=True, tag="enter_P")
    trap_desc = GlueDescriptor(tube_surface, P_surface, collar_width=p.collar_width, mode="identify",
                               identification=ident, name="trap_P")
    glue_flows(ball, P_system, trap_desc)

    s3 = DomainRestriction(GradientSphereField(3), lambda X: _north_norm(X) > p.to_ball - 0.5, chart="s3")
    transitions = [
        Transition("s3", "ball", guard=lambda X: _north_norm(X) - p.to_ball, apply=stereo_from_north,
                   jacobian=stereo_from_north_jacobian, tag="s3->ball"),
        Transition("ball", "s3", guard=lambda U: p.to_sphere - np.linalg.norm(U, axis=-1),
                   apply=inverse_stereo_from_north, jacobian=inverse_stereo_from_north_jacobian, tag="ball->s3"),
        ident,
    ]
    flow = AssembledFlow({"s3": s3, "ball": ball, "plykin": P_system}, transitions, name="theorem1_s3",
                         default_step=1e-2)
    flow.params = p
    flow.descriptors = [_with_systems(sink_desc, sink, lemma), _with_systems(trap_desc, ball, P_system)]
    flow.collar_min_norm = ball_glue.collar_min_norm
    flow.trap = P_surface
    flow.tube = tube
    flow.lemma1_tube_surface = tube_surface
    flow.plykin_map = pmap
    flow.to_ball = to_ball
    flow.atlas = _assembly_atlas(p, tube, to_p, to_ball)
    return flow


def _north_norm(X):
    X = np.asarray(X, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = np.linalg.norm(X[..., :-1], axis=-1) / (1.0 - X[..., -1])
    return np.where(np.isfinite(n), n, np.inf)


def _assembly_atlas(p, tube, to_p, to_ball) -> Atlas:
    at = Atlas()
    at.add_chart(Chart("s3", 4, contains=lambda x: abs(np.linalg.norm(x) - 1.0) < 1e-9 and x[-1] < 1.0))
    at.add_chart(Chart("ball", 3, contains=lambda u: cartesian_to_tube(u)[0] >= p.lemma1_tube * (1 - 1e-12)))
    at.add_chart(Chart("plykin", 3, contains=lambda x: not tube.inside(x)))
    at.add_transition("s3", "ball", stereo_from_north)
    at.add_transition("ball", "s3", inverse_stereo_from_north)
    at.add_transition("ball", "plykin", to_p,
                      overlap=lambda u: abs(cartesian_to_tube(u)[0] - p.lemma1_tube) < 1e-9)
    at.add_transition("plykin", "ball", to_ball,
                      overlap=lambda x: tube.near(x) and abs(tube.G(x) - tube.r**2) < 1e-9 * tube.r**2)
    return at


def sample_assembly(flow: AssembledFlow, n: int, rng) -> list:
    """Uniform points of S^3; points falling in the removed tube are replaced by uniform points of P."""
    from .charts import ChartedPoint

    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    out = []
    u = stereo_from_north(x)
    for i in range(n):
        if np.linalg.norm(u[i]) < flow.params.to_ball:
            if cartesian_to_tube(u[i])[0] < flow.params.lemma1_tube:
                while True:
                    y = rng.random(3)
                    if not flow.tube.inside(y):
                        break
                out.append(ChartedPoint.of("plykin", y))
            else:
                out.append(ChartedPoint.of("ball", u[i]))
        else:
            out.append(ChartedPoint.of("s3", x[i]))
    return out
