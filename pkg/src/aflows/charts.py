"""Coordinate models of the manifolds used by the constructions.

The torus T^2 = R^2/Z^2 is stored as coordinates in [0, 1).  The sphere S^2 is
never given smooth coordinates of its own: it is the quotient of T^2 by the
involution sigma(p) = -p, and points are compared through a canonical
representative of each sigma-pair.  Spheres S^n live in R^{n+1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, OutOfDomainError

TWO_PI = 2.0 * np.pi

# Reduced torus coordinates are snapped to this dyadic grid.  On the grid
# 1 - x is exact, so sigma is an exact involution and canonicalisation of a
# sigma-pair never depends on which member it started from.
_GRID = 2.0**52

ROUND_TRIP_TOL = 1e-10
NORM_TOL = 1e-12


def torus_reduce(v) -> np.ndarray:
    """Reduce coordinates into [0, 1), elementwise."""
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"non-finite torus coordinates: {v!r}")
    r = np.mod(arr, 1.0)
    r = np.round(r * _GRID) / _GRID
    return np.where(r >= 1.0, 0.0, r)


def torus_delta(p, q) -> np.ndarray:
    """Shortest displacement from q to p on the torus, componentwise in [-1/2, 1/2]."""
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return d - np.round(d)


def torus_distance(p, q) -> np.ndarray:
    return np.linalg.norm(torus_delta(p, q), axis=-1)


def sigma(p) -> np.ndarray:
    return torus_reduce(-np.asarray(p, dtype=float))


def quotient_canonical(p) -> np.ndarray:
    """Canonical representative of {p, -p}: the lexicographically smaller one.

    Works on a single point (shape ``(2,)``) or on rows of points.
    """
    p = torus_reduce(p)
    m = sigma(p)
    swap = (m[..., 0] < p[..., 0]) | ((m[..., 0] == p[..., 0]) & (m[..., 1] < p[..., 1]))
    return np.where(swap[..., None], m, p)


def quotient_distance(p, q) -> np.ndarray:
    """Distance on T^2/sigma computed on the double cover."""
    return np.minimum(torus_distance(p, q), torus_distance(p, sigma(q)))


# ---------------------------------------------------------------------------
# point types


@dataclass(frozen=True)
class TorusPoint2:
    x: float
    y: float

    @classmethod
    def of(cls, v) -> "TorusPoint2":
        x, y = torus_reduce(np.asarray(v, dtype=float).reshape(2))
        return cls(float(x), float(y))

    def __post_init__(self):
        if not (0.0 <= self.x < 1.0 and 0.0 <= self.y < 1.0):
            raise InvalidInputError(f"torus point not reduced: ({self.x}, {self.y})")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def __neg__(self) -> "TorusPoint2":
        return TorusPoint2.of(-self.array)


@dataclass(frozen=True)
class SphereQuotientPoint:
    rep: TorusPoint2

    @classmethod
    def of(cls, p) -> "SphereQuotientPoint":
        arr = p.array if isinstance(p, TorusPoint2) else np.asarray(p, dtype=float)
        x, y = quotient_canonical(arr)
        return cls(TorusPoint2(float(x), float(y)))

    @property
    def array(self) -> np.ndarray:
        return self.rep.array


@dataclass(frozen=True)
class MappingTorusPoint:
    """Point of the mapping torus of a base map: (base, s) with (q, 1) ~ (f(q), 0)."""

    base: tuple
    s: float

    def __post_init__(self):
        if not 0.0 <= self.s < 1.0:
            raise InvalidInputError(f"fiber coordinate outside [0, 1): {self.s}")

    def advance(self, ds: float, base_map, inverse_map=None) -> "MappingTorusPoint":
        """Move along the fiber by ``ds``, applying the map at every seam crossed."""
        q = np.asarray(self.base, dtype=float)
        s = self.s + ds
        while s >= 1.0:
            q = base_map(q)
            s -= 1.0
        while s < 0.0:
            if inverse_map is None:
                raise InvalidInputError("crossing the seam backwards needs the inverse map")
            q = inverse_map(q)
            s += 1.0
        return MappingTorusPoint(tuple(float(c) for c in q), float(s))


@dataclass(frozen=True)
class CylinderPoint:
    rho: float
    phi: float
    z: float

    @classmethod
    def of(cls, rho, phi, z) -> "CylinderPoint":
        if rho < 0:
            raise InvalidInputError(f"negative radius {rho}")
        return cls(float(rho), float(np.mod(phi, TWO_PI)), float(z))

    @classmethod
    def from_cartesian(cls, v) -> "CylinderPoint":
        x, y, z = np.asarray(v, dtype=float)
        return cls.of(np.hypot(x, y), np.arctan2(y, x), z)

    def to_cartesian(self) -> np.ndarray:
        return np.array([self.rho * np.cos(self.phi), self.rho * np.sin(self.phi), self.z])


@dataclass(frozen=True)
class EmbeddedSpherePoint:
    coords: tuple

    @classmethod
    def of(cls, v) -> "EmbeddedSpherePoint":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0.0:
            raise InvalidInputError(f"cannot normalise {v!r} onto the sphere")
        return cls(tuple(float(c) for c in v / n))

    @property
    def dim(self) -> int:
        return len(self.coords) - 1


@dataclass(frozen=True)
class ChartedPoint:
    chart_id: str
    local: tuple

    @classmethod
    def of(cls, chart_id: str, coords) -> "ChartedPoint":
        return cls(chart_id, tuple(float(c) for c in np.asarray(coords, dtype=float).ravel()))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.local, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.local)


@dataclass(frozen=True)
class TangentVector:
    at: ChartedPoint
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.at.dim:
            raise InvalidInputError("tangent vector dimension differs from its chart")


# ---------------------------------------------------------------------------
# elementary chart maps


def stereo_from_north(x):
    """S^n -> R^n, projecting from (0, ..., 0, 1); the south pole goes to 0."""
    x = np.asarray(x, dtype=float)
    return x[..., :-1] / (1.0 - x[..., -1:])


def stereo_from_south(x):
    x = np.asarray(x, dtype=float)
    return x[..., :-1] / (1.0 + x[..., -1:])


def inverse_stereo_from_north(w):
    w = np.asarray(w, dtype=float)
    r2 = np.sum(w * w, axis=-1, keepdims=True)
    return np.concatenate([2.0 * w, r2 - 1.0], axis=-1) / (r2 + 1.0)


def inverse_stereo_from_south(w):
    w = np.asarray(w, dtype=float)
    r2 = np.sum(w * w, axis=-1, keepdims=True)
    return np.concatenate([2.0 * w, 1.0 - r2], axis=-1) / (r2 + 1.0)


def stereo_from_north_jacobian(x):
    """Derivative of :func:`stereo_from_north` as an (n, n+1) matrix per point."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] - 1
    d = 1.0 - x[..., -1]
    J = np.zeros(x.shape[:-1] + (n, n + 1))
    J[..., :, :n] = np.eye(n) / d[..., None, None]
    J[..., :, n] = x[..., :n] / (d * d)[..., None]
    return J


def inverse_stereo_from_north_jacobian(w):
    w = np.asarray(w, dtype=float)
    n = w.shape[-1]
    r2 = np.sum(w * w, axis=-1)
    den = r2 + 1.0
    J = np.zeros(w.shape[:-1] + (n + 1, n))
    eye = np.eye(n)
    J[..., :n, :] = 2.0 * eye / den[..., None, None] - 4.0 * w[..., :, None] * w[..., None, :] / (den * den)[..., None, None]
    J[..., n, :] = 4.0 * w / (den * den)[..., None]
    return J


def cylinder_to_cartesian(c):
    c = np.asarray(c, dtype=float)
    rho, phi, z = c[..., 0], c[..., 1], c[..., 2]
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def cartesian_to_cylinder(v):
    v = np.asarray(v, dtype=float)
    return np.stack([np.hypot(v[..., 0], v[..., 1]), np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI), v[..., 2]], axis=-1)


def cartesian_to_tube(v):
    """(x, y, z) -> (d, psi, phi): distance to the circle rho=1, z=0 and the two angles."""
    v = np.asarray(v, dtype=float)
    rho = np.hypot(v[..., 0], v[..., 1])
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
    dr, z = rho - 1.0, v[..., 2]
    return np.stack([np.hypot(dr, z), np.mod(np.arctan2(z, dr), TWO_PI), phi], axis=-1)


def tube_to_cartesian(t):
    t = np.asarray(t, dtype=float)
    d, psi, phi = t[..., 0], t[..., 1], t[..., 2]
    rho = 1.0 + d * np.cos(psi)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), d * np.sin(psi)], axis=-1)


# ---------------------------------------------------------------------------
# atlas


@dataclass
class Chart:
    name: str
    dim: int
    contains: Callable[[np.ndarray], bool] = lambda x: True
    reduce: Callable[[np.ndarray], np.ndarray] = lambda x: x


@dataclass
class Atlas:
    charts: dict = field(default_factory=dict)
    transitions: dict = field(default_factory=dict)

    def add_chart(self, chart: Chart) -> None:
        self.charts[chart.name] = chart

    def add_transition(self, source: str, target: str, fn, overlap=None) -> None:
        self.transitions[(source, target)] = (fn, overlap)

    def chart_transition(self, p: ChartedPoint, target: str) -> ChartedPoint:
        if p.chart_id not in self.charts or target not in self.charts:
            raise OutOfDomainError(f"unknown chart in {p.chart_id!r} -> {target!r}", p.chart_id, target)
        if p.chart_id == target:
            return p
        try:
            fn, overlap = self.transitions[(p.chart_id, target)]
        except KeyError:
            raise OutOfDomainError(
                f"charts {p.chart_id!r} and {target!r} do not overlap", p.chart_id, target
            ) from None
        x = p.array
        if not self.charts[p.chart_id].contains(x) or (overlap is not None and not overlap(x)):
            raise OutOfDomainError(
                f"point {p.local} is outside the overlap of charts {p.chart_id!r} and {target!r}",
                p.chart_id,
                target,
            )
        y = self.charts[target].reduce(np.asarray(fn(x), dtype=float))
        return ChartedPoint.of(target, y)


def _unit_norm(x):
    return abs(np.linalg.norm(x) - 1.0) < 1e-9


def _build_default_atlas(tube_radius: float = 0.3) -> Atlas:
    at = Atlas()
    at.add_chart(Chart("T2", 2, reduce=torus_reduce))
    at.add_chart(Chart("S2q", 2, reduce=quotient_canonical))
    at.add_chart(Chart("S3", 4, contains=_unit_norm, reduce=lambda x: x / np.linalg.norm(x)))
    at.add_chart(Chart("S3_north", 3))
    at.add_chart(Chart("S3_south", 3))
    at.add_chart(Chart("lemma1_cart", 3))
    at.add_chart(Chart("lemma1_cyl", 3, contains=lambda c: c[0] > 0.0))
    at.add_chart(Chart("lemma1_tube", 3, contains=lambda t: 0.0 <= t[0] < tube_radius))

    at.add_transition("T2", "S2q", quotient_canonical)
    at.add_transition("S2q", "T2", lambda x: x)
    at.add_transition("S3", "S3_north", stereo_from_north, overlap=lambda x: x[-1] < 1.0)
    at.add_transition("S3", "S3_south", stereo_from_south, overlap=lambda x: x[-1] > -1.0)
    at.add_transition("S3_north", "S3", inverse_stereo_from_north)
    at.add_transition("S3_south", "S3", inverse_stereo_from_south)
    nz = lambda w: np.dot(w, w) > 0.0
    at.add_transition("S3_north", "S3_south", lambda w: w / np.dot(w, w), overlap=nz)
    at.add_transition("S3_south", "S3_north", lambda w: w / np.dot(w, w), overlap=nz)
    on_axis_free = lambda v: np.hypot(v[0], v[1]) > 0.0
    at.add_transition("lemma1_cart", "lemma1_cyl", cartesian_to_cylinder, overlap=on_axis_free)
    at.add_transition("lemma1_cyl", "lemma1_cart", cylinder_to_cartesian)
    in_tube = lambda v: cartesian_to_tube(v)[0] < tube_radius
    at.add_transition("lemma1_cart", "lemma1_tube", cartesian_to_tube, overlap=in_tube)
    at.add_transition("lemma1_tube", "lemma1_cart", tube_to_cartesian)
    at.add_transition("lemma1_cyl", "lemma1_tube", lambda c: cartesian_to_tube(cylinder_to_cartesian(c)),
                      overlap=lambda c: cartesian_to_tube(cylinder_to_cartesian(c))[0] < tube_radius)
    at.add_transition("lemma1_tube", "lemma1_cyl", lambda t: cartesian_to_cylinder(tube_to_cartesian(t)),
                      overlap=lambda t: 1.0 + t[0] * np.cos(t[1]) > 0.0)
    return at


DEFAULT_ATLAS = _build_default_atlas()


def chart_transition(p: ChartedPoint, target: str, atlas: Atlas | None = None) -> ChartedPoint:
    """Express ``p`` in the ``target`` chart; raises :class:`OutOfDomainError` off the overlap."""
    return (atlas or DEFAULT_ATLAS).chart_transition(p, target)
