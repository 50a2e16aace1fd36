"""Evaluable maps and flows: the objects every analysis consumes.

All evaluation methods are vectorised over leading axes: a state array has
shape ``(..., dim)`` and a Jacobian ``(..., dim, dim)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .charts import torus_reduce


class Map:
    """A smooth map of a coordinate domain, with its Jacobian."""

    kind = "map"
    dim = 2
    chart = "T2"
    quotient = False

    def evaluate(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no inverse")

    def reduce(self, x):
        return torus_reduce(x)

    def derivative(self, x, v):
        return np.einsum("...ij,...j->...i", self.jacobian(x), v)

    def __call__(self, x):
        return self.evaluate(x)

    def symmetries(self):
        """Deck transformations of the coordinate model as (point map, tangent sign) pairs."""
        return [(lambda q: q, 1.0)]


class VectorField:
    """A smooth vector field in one chart."""

    kind = "vector-field"
    dim = 3
    manifold_dim = 3
    chart = "R3"
    default_step = 1e-3

    def evaluate(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def derivative(self, x, v):
        return np.einsum("...ij,...j->...i", self.jacobian(x), v)

    def __call__(self, x):
        return self.evaluate(x)

    def project(self, x):
        """Restore constraints (e.g. unit norm) after a numerical step."""
        return x

    def tangent_basis(self, x):
        """Orthonormal basis of the tangent space at ``x`` as a (dim, manifold_dim) matrix."""
        return np.eye(self.dim)

    def contains(self, x):
        return np.all(np.isfinite(x), axis=-1)

    def reversed(self) -> "VectorField":
        return ReversedField(self)


class ReversedField(VectorField):
    def __init__(self, base: VectorField):
        self.base = base
        self.dim = base.dim
        self.manifold_dim = base.manifold_dim
        self.chart = base.chart
        self.default_step = base.default_step
        self.name = getattr(base, "name", type(base).__name__) + "_reversed"

    def evaluate(self, x):
        return -self.base.evaluate(x)

    def jacobian(self, x):
        return -self.base.jacobian(x)

    def project(self, x):
        return self.base.project(x)

    def tangent_basis(self, x):
        return self.base.tangent_basis(x)

    def contains(self, x):
        return self.base.contains(x)

    def reversed(self):
        return self.base


class SphereField(VectorField):
    """A vector field on the unit sphere S^n, evaluated in ambient R^{n+1} coordinates.

    Subclasses implement :meth:`ambient`, a smooth extension of the field to
    a neighbourhood of the sphere that is tangent on the sphere.
    """

    def __init__(self, n: int):
        self.n = n
        self.dim = n + 1
        self.manifold_dim = n
        self.chart = f"S{n}"

    def project(self, x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def tangent_basis(self, x):
        x = np.asarray(x, dtype=float)
        # complete x to an orthonormal basis; the last n columns span the tangent space
        M = np.concatenate([x[:, None], np.eye(self.dim)], axis=1)
        Q, _ = np.linalg.qr(M)
        return Q[:, 1 : self.dim]

    def homogeneous(self, y):
        """|y|^2 X(y/|y|): the degree-two cone over the field, smooth through y = 0."""
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, r * r * self.evaluate(y / safe), 0.0)

    def homogeneous_jacobian(self, y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        p = y / safe[..., None]
        X = self.evaluate(p)
        J = self.jacobian(p)
        # d/dy [r^2 X(p)] = 2 X y^T + r^2 J (I - p p^T) / r
        eye = np.eye(y.shape[-1])
        proj = eye - p[..., :, None] * p[..., None, :]
        out = 2.0 * X[..., :, None] * y[..., None, :] + safe[..., None, None] * np.einsum("...ij,...jk->...ik", J, proj)
        return np.where((r > 0)[..., None, None], out, 0.0)


class SuspensionFlow:
    """Unit-speed flow on the mapping torus of ``base``: (q, s), s in [0, 1).

    Between seams the field is (0, ..., 0, 1); reaching s = 1 applies the base
    map to q and resets s to 0.  The reversed flow runs s downwards and
    applies the inverse map at s = 0.
    """

    kind = "suspension"
    default_step = 0.25

    def __init__(self, base: Map, chart: str | None = None, direction: int = 1, name: str | None = None):
        self.base = base
        self.dim = base.dim + 1
        self.manifold_dim = base.dim + 1
        self.direction = 1 if direction >= 0 else -1
        self.chart = chart or f"{base.chart}xS1"
        self.name = name or f"suspension({getattr(base, 'name', type(base).__name__)})"
        self.quotient = base.quotient

    # constant fiber field
    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., -1] = self.direction
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (x.shape[-1],))

    def derivative(self, x, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def __call__(self, x):
        return self.evaluate(x)

    def project(self, x):
        return x

    def tangent_basis(self, x):
        return np.eye(self.dim)

    def contains(self, x):
        return np.all(np.isfinite(x), axis=-1)

    def reduce(self, x):
        x = np.array(x, dtype=float)
        x[..., :-1] = self.base.reduce(x[..., :-1])
        return x

    def seam_forward(self, q):
        return self.base.reduce(self.base.evaluate(q)), self.base.jacobian(q)

    def seam_backward(self, q):
        p = self.base.inverse(q)
        return p, np.linalg.inv(self.base.jacobian(p))

    def reversed(self) -> "SuspensionFlow":
        return SuspensionFlow(self.base, self.chart, -self.direction, self.name + "_reversed")

    def base_distance(self, p, q):
        from .charts import quotient_distance, torus_distance

        return quotient_distance(p, q) if self.quotient else torus_distance(p, q)


@dataclass
class Transition:
    """Switch from chart ``source`` to chart ``target`` once ``guard`` turns negative.

    ``apply`` maps source coordinates to target coordinates.  ``jacobian``
    transports tangent frames; ``None`` means the switch is only continuous
    (an identification of boundaries) and frames are re-initialised.  With
    ``locate`` the crossing is found precisely before switching.
    """

    source: str
    target: str
    guard: Callable
    apply: Callable
    jacobian: Callable | None = None
    locate: bool = False
    tag: str = ""


@dataclass
class HybridSystem:
    """A flow assembled from per-chart components and chart-switching rules."""

    components: dict
    transitions: list = field(default_factory=list)
    name: str = "hybrid"
    kind: str = "hybrid"
    default_step: float = 1e-2

    def component(self, chart: str):
        return self.components[chart]

    def transitions_from(self, chart: str):
        return [t for t in self.transitions if t.source == chart]

    @property
    def charts(self):
        return list(self.components)
