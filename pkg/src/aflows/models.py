"""Explicit maps and vector fields of the constructions.

* the hyperbolic automorphism A = [[2, 1], [1, 1]] of T^2 and its powers,
* a derived-from-Anosov (DA) map obtained by composing A^k with a shear
  along the stable direction supported near chosen fixed points,
* the sphere map obtained as the quotient of a sigma-equivariant DA map on
  A^3 by sigma(p) = -p (its four cone points become fixed sources),
* the local periodic-orbit model  rho' = rho (1 - rho), phi' = 1, z' = -z,
* north-south flows on S^n and the extension of a flow on S^{n-1} to S^n.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .charts import (
    Atlas,
    Chart,
    CylinderPoint,
    SphereQuotientPoint,
    TangentVector,
    TorusPoint2,
    ChartedPoint,
    quotient_canonical,
    sigma,
    torus_delta,
    torus_reduce,
)
from .errors import ConfigurationError, EquivarianceError, InvalidInputError
from .systems import HybridSystem, Map, SphereField, SuspensionFlow, Transition, VectorField

ANOSOV_MATRIX = np.array([[2, 1], [1, 1]], dtype=np.int64)
GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
# log of the expanding eigenvalue (3 + sqrt 5)/2 of ANOSOV_MATRIX
ANOSOV_RATE = float(np.log(GOLDEN**2))

# unstable / stable eigenvectors of every power of ANOSOV_MATRIX (it is symmetric)
UNSTABLE_DIR = np.array([GOLDEN, 1.0]) / np.hypot(GOLDEN, 1.0)
STABLE_DIR = np.array([-UNSTABLE_DIR[1], UNSTABLE_DIR[0]])

TWO_TORSION = ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5))


def anosov_power(power: int) -> np.ndarray:
    if power < 1:
        raise InvalidInputError(f"power must be >= 1, got {power}")
    return np.linalg.matrix_power(ANOSOV_MATRIX, power)


def anosov_eigenvalues(power: int) -> tuple[float, float]:
    """(expanding, contracting) eigenvalues of A^power."""
    return GOLDEN ** (2 * power), GOLDEN ** (-2 * power)


class AnosovMap(Map):
    name = "anosov"

    def __init__(self, power: int = 1):
        if int(power) != power or power < 1:
            raise InvalidInputError(f"power must be a positive integer, got {power!r}")
        self.power = int(power)
        self.matrix = anosov_power(self.power)
        self.inverse_matrix = np.round(np.linalg.inv(self.matrix)).astype(np.int64)

    def evaluate(self, x):
        return torus_reduce(np.asarray(x, dtype=float) @ self.matrix.T)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix.astype(float), x.shape[:-1] + (2, 2)).copy()

    def inverse(self, x):
        return torus_reduce(np.asarray(x, dtype=float) @ self.inverse_matrix.T)


def anosov_map(p, power: int = 1):
    """Image of ``p`` under A^power (mod 1) and the constant derivative A^power."""
    m = AnosovMap(power)
    if isinstance(p, TorusPoint2):
        return TorusPoint2.of(m.evaluate(p.array)), m.matrix.copy()
    return m.evaluate(p), m.matrix.copy()


# ---------------------------------------------------------------------------
# DA maps


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def _smoothstep5_slope(t):
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


BUMP_PROFILES = ("quartic",)


@dataclass(frozen=True)
class DaConfig:
    """Parameters of a DA modification of A^base_power.

    Each center c gets a perturbation supported in the square of half-width
    ``radius / sqrt(2)`` aligned with the eigendirections (so inside the disk
    of radius ``radius``).  In eigen-coordinates (a, b) around c the map is

        (a, b) -> (lu * a,  ls * b + strength * psi(a) * g(b))

    with psi(a) = (1 - (a/h)^2)^2 the quartic profile and g an odd push of
    slope 1 at b = 0 that saturates at ``core`` and is cut off smoothly
    before |b| = h.  ``strength`` defaults to the value that puts the stable
    eigenvalue at each center at ``stable_target``.
    """

    base_power: int = 1
    centers: tuple = ((0.0, 0.0),)
    radius: float = 0.45
    strength: float | None = None
    core: float = 0.025
    plateau: float = 0.1
    stable_target: float = 1.8
    bump_profile: str = "quartic"

    @property
    def half_width(self) -> float:
        return self.radius / np.sqrt(2.0)

    @property
    def eigenvalues(self):
        return anosov_eigenvalues(self.base_power)

    @property
    def push(self) -> float:
        if self.strength is not None:
            return float(self.strength)
        return self.stable_target - self.eigenvalues[1]

    def with_updates(self, **kw) -> "DaConfig":
        return replace(self, **kw)


def plykin_config(**kw) -> DaConfig:
    base = dict(base_power=3, centers=TWO_TORSION, radius=0.24, core=0.0015)
    base.update(kw)
    return DaConfig(**base)


class DaMap(Map):
    """A^k composed with a stable-direction shear supported near each center."""

    name = "da"

    def __init__(self, cfg: DaConfig = DaConfig(), validate: bool = True):
        self.cfg = cfg
        self.power = cfg.base_power
        self.matrix = anosov_power(cfg.base_power).astype(float)
        self.inverse_matrix = np.round(np.linalg.inv(anosov_power(cfg.base_power))).astype(float)
        self.lu, self.ls = cfg.eigenvalues
        self.centers = np.array(cfg.centers, dtype=float).reshape(-1, 2)
        self.h = cfg.half_width
        self.r0 = cfg.plateau * self.h
        self.kappa = cfg.push / self.ls  # shear gain before applying A^k
        if validate:
            self.validate()

    # profiles ----------------------------------------------------------
    def _psi(self, a):
        t = np.abs(a) / self.h
        return np.where(t < 1.0, (1.0 - t * t) ** 2, 0.0)

    def _dpsi(self, a):
        t = a / self.h
        return np.where(np.abs(t) < 1.0, -4.0 * t * (1.0 - t * t) / self.h, 0.0)

    def _chi(self, b):
        return 1.0 - _smoothstep5((np.abs(b) - self.r0) / (self.h - self.r0))

    def _dchi(self, b):
        return -np.sign(b) * _smoothstep5_slope((np.abs(b) - self.r0) / (self.h - self.r0)) / (self.h - self.r0)

    def push_profile(self, b):
        """The odd stable-direction push g(b)."""
        c = self.cfg.core
        x = b / c
        return c * x / np.sqrt(1.0 + x * x) * self._chi(b)

    def push_slope(self, b):
        c = self.cfg.core
        x = b / c
        sig = x / np.sqrt(1.0 + x * x)
        dsig = (1.0 + x * x) ** -1.5
        return dsig * self._chi(b) + c * sig * self._dchi(b)

    def _local(self, x, c):
        d = torus_delta(x, c)
        return d, d @ UNSTABLE_DIR, d @ STABLE_DIR

    # map ---------------------------------------------------------------
    def shear(self, x):
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for c in self.centers:
            _, a, b = self._local(x, c)
            amount = self.kappa * self._psi(a) * self.push_profile(b)
            out = out + amount[..., None] * STABLE_DIR
        return out

    def shear_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()
        for c in self.centers:
            _, a, b = self._local(x, c)
            da = self.kappa * self._dpsi(a) * self.push_profile(b)
            db = self.kappa * self._psi(a) * self.push_slope(b)
            grad = da[..., None] * UNSTABLE_DIR + db[..., None] * STABLE_DIR
            J = J + STABLE_DIR[:, None] * grad[..., None, :]
        return J

    def evaluate(self, x):
        return torus_reduce(self.shear(x) @ self.matrix.T)

    def jacobian(self, x):
        return self.matrix @ self.shear_jacobian(x)

    def local_image(self, d):
        """f(c + d) - c for a displacement d inside the box of a center c (the same for every center)."""
        d = np.asarray(d, dtype=float)
        a, b = d @ UNSTABLE_DIR, d @ STABLE_DIR
        bf = self.ls * b + self.cfg.push * self._psi(a) * self.push_profile(b)
        return (self.lu * a)[..., None] * UNSTABLE_DIR + bf[..., None] * STABLE_DIR

    def local_jacobian(self, d):
        d = np.asarray(d, dtype=float)
        a, b = d @ UNSTABLE_DIR, d @ STABLE_DIR
        S = self.cfg.push
        row_b = (S * self._dpsi(a) * self.push_profile(b))[..., None] * UNSTABLE_DIR + \
            (self.ls + S * self._psi(a) * self.push_slope(b))[..., None] * STABLE_DIR
        return self.lu * UNSTABLE_DIR[:, None] * UNSTABLE_DIR[None, :] + STABLE_DIR[:, None] * row_b[..., None, :]

    def inverse(self, y):
        z = torus_reduce(np.asarray(y, dtype=float) @ self.inverse_matrix.T)
        out = z.copy()
        for c in self.centers:
            d, a, bz = self._local(z, c)
            inside = (np.abs(a) < self.h) & (np.abs(bz) < self.h)
            if not np.any(inside):
                continue
            k = self.kappa * self._psi(a)
            lo = np.full_like(bz, -self.h)
            hi = np.full_like(bz, self.h)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                above = mid + k * self.push_profile(mid) > bz
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            b = 0.5 * (lo + hi)
            for _ in range(2):
                b = b - (b + k * self.push_profile(b) - bz) / (1.0 + k * self.push_slope(b))
            moved = z + ((b - bz)[..., None]) * STABLE_DIR
            out = np.where(inside[..., None], moved, out)
        return torus_reduce(out)

    # invariants --------------------------------------------------------
    def center_jacobian_eigenvalues(self):
        return [np.linalg.eigvals(self.jacobian(c)) for c in self.centers]

    def saddle_offset(self) -> float:
        """Distance along the stable line from a center to the saddle fixed points it spawns."""
        ls, S = self.ls, self.cfg.push
        lo, hi = 1e-12, self.h
        f = lambda b: ls * b + S * self.push_profile(b) - b
        if f(hi) > 0:
            return float("nan")
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
        return 0.5 * (lo + hi)

    def validate(self) -> None:
        cfg = self.cfg
        failed = []
        if cfg.bump_profile not in BUMP_PROFILES:
            failed.append(f"unknown bump profile {cfg.bump_profile!r}")
        if not cfg.radius > 0 or cfg.radius >= 0.5:
            failed.append("radius must lie in (0, 0.5)")
        if not 0 < cfg.core < self.h:
            failed.append("core must lie in (0, radius/sqrt 2)")
        if not 0 <= cfg.plateau < 1:
            failed.append("plateau must lie in [0, 1)")
        cs = self.centers
        for i in range(len(cs)):
            for j in range(len(cs)):
                if i == j:
                    continue
                if np.linalg.norm(torus_delta(cs[i], cs[j])) < 1e-12:
                    failed.append(f"duplicate center {tuple(cs[i])}")
                elif np.linalg.norm(torus_delta(cs[i], cs[j])) <= 2 * cfg.radius:
                    failed.append(f"disks around {tuple(cs[i])} and {tuple(cs[j])} overlap")
            img = sigma(cs[i])
            if np.linalg.norm(torus_delta(img, cs[i])) > 1e-12 and np.linalg.norm(torus_delta(img, cs[i])) <= 2 * cfg.radius:
                failed.append(f"disk around {tuple(cs[i])} meets its sigma-image")
        for c in cs:
            if np.linalg.norm(torus_delta(self.matrix @ c, c)) > 1e-12:
                failed.append(f"center {tuple(c)} is not fixed by A^{cfg.base_power}")
        if failed:
            raise ConfigurationError("invalid DA configuration: " + "; ".join(failed), failed)
        b = np.linspace(-self.h, self.h, 20001)
        slope = self.ls + cfg.push * np.min(self.push_slope(b))
        if not slope > 0:
            failed.append(f"shear is not monotone (min stable slope {slope:.3g}); the map would fold")
        for c, ev in zip(cs, self.center_jacobian_eigenvalues()):
            if not np.all(np.abs(ev) > 1.0):
                failed.append(f"center {tuple(c)} is not a source (eigenvalues {ev})")
        if failed:
            raise ConfigurationError("invalid DA configuration: " + "; ".join(failed), failed)


def da_map(p, cfg: DaConfig = DaConfig()):
    """Image of ``p`` under the DA map and its Jacobian there."""
    m = DaMap(cfg)
    if isinstance(p, TorusPoint2):
        return TorusPoint2.of(m.evaluate(p.array)), m.jacobian(p.array)
    return m.evaluate(p), m.jacobian(p)


class PlykinMap(Map):
    """Sphere map realised on the double cover T^2 -> T^2/sigma.

    Dynamics is computed upstairs by an equivariant DA map on A^3 with a
    source at each 2-torsion point; points are identified under sigma.
    """

    name = "plykin"
    quotient = True
    chart = "S2q"

    def __init__(self, cfg: DaConfig | None = None, rng_seed: int = 12345):
        cfg = cfg or plykin_config()
        _check_sigma_closed(cfg)
        self.da = DaMap(cfg)
        self.cfg = cfg
        self._check_equivariance(np.random.default_rng(rng_seed))
        if cfg.base_power != 3:
            raise ConfigurationError("the quotient sphere map needs base_power = 3", ["base_power"])
        got = {tuple(np.round(c, 12)) for c in self.da.centers}
        if got != {tuple(c) for c in TWO_TORSION}:
            raise ConfigurationError("the quotient sphere map needs the four 2-torsion centers", ["centers"])
        self.power = 3
        self.matrix = self.da.matrix

    def _check_equivariance(self, rng, n: int = 2000):
        x = rng.random((n, 2))
        lhs = self.da.evaluate(sigma(x))
        rhs = sigma(self.da.evaluate(x))
        err = np.linalg.norm(torus_delta(lhs, rhs), axis=-1)
        if np.max(err) > 1e-12:
            k = int(np.argmax(err))
            raise EquivarianceError(f"map does not commute with sigma at {tuple(x[k])}", witness=tuple(x[k]))

    def evaluate(self, x):
        return self.da.evaluate(x)

    def jacobian(self, x):
        return self.da.jacobian(x)

    def inverse(self, x):
        return self.da.inverse(x)

    def canonical(self, x):
        return quotient_canonical(x)

    def symmetries(self):
        return [(lambda q: q, 1.0), (sigma, -1.0)]


def _check_sigma_closed(cfg: DaConfig):
    cs = np.array(cfg.centers, dtype=float).reshape(-1, 2)
    for c in cs:
        img = sigma(c)
        if not np.any(np.linalg.norm(torus_delta(cs, img), axis=-1) < 1e-12):
            raise EquivarianceError(
                f"center {tuple(c)} has sigma-image {tuple(img)} outside the center set", witness=tuple(c)
            )


def plykin_map(q: SphereQuotientPoint, cfg: DaConfig | None = None) -> SphereQuotientPoint:
    m = PlykinMap(cfg)
    return SphereQuotientPoint.of(m.evaluate(q.array))


def suspension_flow(map_system: Map, chart: str | None = None) -> SuspensionFlow:
    return SuspensionFlow(map_system, chart=chart)


def mapping_torus_atlas(base: Map) -> Atlas:
    """Two fundamental domains of the mapping torus: s in [0, 1) and s in [-1/2, 1/2)."""
    at = Atlas()
    at.add_chart(Chart("fiber0", base.dim + 1, contains=lambda x: 0.0 <= x[-1] < 1.0))
    at.add_chart(Chart("fiber_half", base.dim + 1, contains=lambda x: -0.5 <= x[-1] < 0.5))

    def to_half(x):
        if x[-1] >= 0.5:
            return np.append(base.evaluate(x[:-1]), x[-1] - 1.0)
        return x

    def to_zero(x):
        if x[-1] < 0.0:
            return np.append(base.inverse(x[:-1]), x[-1] + 1.0)
        return x

    at.add_transition("fiber0", "fiber_half", to_half)
    at.add_transition("fiber_half", "fiber0", to_zero)
    return at


# ---------------------------------------------------------------------------
# local periodic-orbit model


class Lemma1Field(VectorField):
    """rho' = rho (1 - rho), phi' = 1, z' = -z written in Cartesian (x, y, z).

    The circle rho = 1, z = 0 is an attracting periodic orbit of period 2 pi
    and the origin is an equilibrium with eigenvalues 1 +- i and -1.
    """

    dim = 3
    manifold_dim = 3
    chart = "lemma1_cart"
    default_step = 1e-3

    def __init__(self, time_reversed: bool = False):
        self.time_reversed = time_reversed
        self.sign = -1.0 if time_reversed else 1.0
        self.name = "lemma1_reversed" if time_reversed else "lemma1"

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        x, y, z = v[..., 0], v[..., 1], v[..., 2]
        rho = np.hypot(x, y)
        out = np.stack([x * (1.0 - rho) - y, y * (1.0 - rho) + x, -z], axis=-1)
        return self.sign * out

    def jacobian(self, v):
        v = np.asarray(v, dtype=float)
        x, y = v[..., 0], v[..., 1]
        rho = np.hypot(x, y)
        safe = np.where(rho > 0, rho, 1.0)
        xx = np.where(rho > 0, x * x / safe, 0.0)
        xy = np.where(rho > 0, x * y / safe, 0.0)
        yy = np.where(rho > 0, y * y / safe, 0.0)
        J = np.zeros(v.shape + (3,))
        J[..., 0, 0] = 1.0 - rho - xx
        J[..., 0, 1] = -xy - 1.0
        J[..., 1, 0] = -xy + 1.0
        J[..., 1, 1] = 1.0 - rho - yy
        J[..., 2, 2] = -1.0
        return self.sign * J

    def reversed(self):
        return Lemma1Field(not self.time_reversed)

    @staticmethod
    def exact_solution(v0, t):
        """Closed-form flow of the forward system (the equations decouple)."""
        c = CylinderPoint.from_cartesian(v0)
        rho = 1.0 / (1.0 + (1.0 / c.rho - 1.0) * np.exp(-t)) if c.rho > 0 else 0.0
        return CylinderPoint.of(rho, c.phi + t, c.z * np.exp(-t)).to_cartesian()


def lemma1_field(c: CylinderPoint, time_reversed: bool = False) -> TangentVector:
    """The model field in the cylinder frame: (rho (1 - rho), 1, -z)."""
    sign = -1.0 if time_reversed else 1.0
    at = ChartedPoint.of("lemma1_cyl", (c.rho, c.phi, c.z))
    return TangentVector(at, (sign * c.rho * (1.0 - c.rho), sign * 1.0, sign * -c.z))


def lemma1_cylinder_linearization(rho: float, z: float):
    """d(rho')/d(rho) and d(z')/dz in the cylinder frame."""
    return 1.0 - 2.0 * rho, -1.0


# ---------------------------------------------------------------------------
# spheres


class GradientSphereField(SphereField):
    """North-south flow on S^n: tangential part of the constant field pointing to the south pole."""

    default_step = 1e-3

    def __init__(self, n: int = 3):
        if n < 2:
            raise InvalidInputError("gradient sphere flow needs n >= 2")
        super().__init__(n)
        self.down = np.zeros(n + 1)
        self.down[-1] = -1.0
        self.name = f"gradient_sphere({n})"

    @property
    def north(self):
        return -self.down

    @property
    def south(self):
        return self.down.copy()

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        ex = x @ self.down
        return self.down - ex[..., None] * x

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        ex = x @ self.down
        eye = np.eye(self.dim)
        return -x[..., :, None] * self.down[None, :] - ex[..., None, None] * eye

    def homogeneous(self, y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum(y * y, axis=-1)
        return r2[..., None] * self.down - (y @ self.down)[..., None] * y

    def homogeneous_jacobian(self, y):
        y = np.asarray(y, dtype=float)
        eye = np.eye(y.shape[-1])
        return 2.0 * self.down[:, None] * y[..., None, :] - y[..., :, None] * self.down[None, :] - (y @ self.down)[..., None, None] * eye


def gradient_sphere_flow(n: int = 3) -> GradientSphereField:
    return GradientSphereField(n)


class ExtendedSphereField(SphereField):
    """Flow on S^n built from a flow X on the equatorial S^{n-1}.

    In ambient coordinates x = (y, w), y in R^n:
        x' = (|y|^2 X(y/|y|), 0) + (2 w^2 y, -2 w |y|^2),
    i.e. the latitude obeys theta' = -sin(2 theta) and the equator carries X.
    """

    default_step = 1e-3

    def __init__(self, base: SphereField):
        super().__init__(base.n + 1)
        self.base = base
        self.name = f"extend({getattr(base, 'name', 'field')})"

    def meridional(self, x):
        x = np.asarray(x, dtype=float)
        y, w = x[..., :-1], x[..., -1]
        r2 = np.sum(y * y, axis=-1)
        return np.concatenate([2.0 * (w * w)[..., None] * y, (-2.0 * w * r2)[..., None]], axis=-1)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        y = x[..., :-1]
        base = np.concatenate([self.base.homogeneous(y), np.zeros(y.shape[:-1] + (1,))], axis=-1)
        return base + self.meridional(x)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        y, w = x[..., :-1], x[..., -1]
        n = y.shape[-1]
        J = np.zeros(x.shape + (x.shape[-1],))
        J[..., :n, :n] = self.base.homogeneous_jacobian(y) + 2.0 * (w * w)[..., None, None] * np.eye(n)
        J[..., :n, n] = 4.0 * w[..., None] * y
        J[..., n, :n] = -4.0 * w[..., None] * y
        J[..., n, n] = -2.0 * np.sum(y * y, axis=-1)
        return J

    def distance_to_equator(self, x):
        return np.abs(np.arcsin(np.clip(np.asarray(x)[..., -1], -1.0, 1.0)))


class LatitudeLift(VectorField):
    """A local-chart field X(u) lifted to (u, theta): (cos^2 theta X(u), -sin 2 theta)."""

    def __init__(self, base: VectorField, chart: str | None = None):
        self.base = base
        self.dim = base.dim + 1
        self.manifold_dim = base.manifold_dim + 1
        self.chart = chart or base.chart + "+"
        self.default_step = base.default_step
        self.name = f"lift({getattr(base, 'name', 'field')})"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        th = x[..., -1]
        c2 = np.cos(th) ** 2
        return np.concatenate([c2[..., None] * self.base.evaluate(x[..., :-1]), (-np.sin(2.0 * th))[..., None]], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        u, th = x[..., :-1], x[..., -1]
        n = u.shape[-1]
        J = np.zeros(x.shape + (n + 1,))
        J[..., :n, :n] = (np.cos(th) ** 2)[..., None, None] * self.base.jacobian(u)
        J[..., :n, n] = -np.sin(2.0 * th)[..., None] * self.base.evaluate(u)
        J[..., n, n] = -2.0 * np.cos(2.0 * th)
        return J

    def project(self, x):
        x = np.array(x, dtype=float)
        x[..., :-1] = self.base.project(x[..., :-1])
        return x

    def contains(self, x):
        return self.base.contains(np.asarray(x)[..., :-1]) & (np.abs(np.asarray(x)[..., -1]) < np.pi / 2)


class LatitudeSuspension(SuspensionFlow):
    """Suspension lifted to (q, s, theta): s' = cos^2 theta, theta' = -sin 2 theta.

    theta has the closed form tan(theta(t)) = tan(theta0) e^{-2t}, hence
    s(t) = s0 + t + log((1 + T^2 e^{-4t}) / (1 + T^2)) / 4 with T = tan(theta0);
    steps use it directly and locate seams by Newton on that expression.
    """

    kind = "suspension"

    def __init__(self, base: SuspensionFlow, chart: str | None = None):
        super().__init__(base.base, chart=chart or base.chart + "+", direction=base.direction, name=base.name + "+")
        self.inner = base
        self.dim = base.dim + 1
        self.manifold_dim = base.manifold_dim + 1
        self.lifted = True

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        th = x[..., -1]
        out[..., -2] = self.direction * np.cos(th) ** 2
        out[..., -1] = -np.sin(2.0 * th)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape + (x.shape[-1],))
        th = x[..., -1]
        J[..., -2, -1] = -self.direction * np.sin(2.0 * th)
        J[..., -1, -1] = -2.0 * np.cos(2.0 * th)
        return J

    def derivative(self, x, v):
        return np.einsum("...ij,...j->...i", self.jacobian(x), v)

    def contains(self, x):
        return self.inner.contains(np.asarray(x)[..., :-1])

    def reduce(self, x):
        x = np.array(x, dtype=float)
        x[..., :-2] = self.base.reduce(x[..., :-2])
        return x

    @staticmethod
    def fiber_advance(T, t):
        """Fiber displacement after time t from latitude tan(theta0) = T."""
        T2 = T * T
        return t + 0.25 * np.log((1.0 + T2 * np.exp(-4.0 * t)) / (1.0 + T2))

    @staticmethod
    def latitude_after(theta, t):
        return np.arctan(np.tan(theta) * np.exp(-2.0 * t))


def lift_hybrid(system: HybridSystem) -> HybridSystem:
    """Extend a multi-chart flow on S^{n-1} to S^n (each chart gains the latitude)."""
    comps = {}
    kinds = {}
    for name, comp in system.components.items():
        base_comp = getattr(comp, "field", comp)
        if isinstance(base_comp, SphereField):
            new = ExtendedSphereField(base_comp)
            new.chart = name + "+"
            if hasattr(comp, "domain"):
                inner_domain = comp.domain
                new = _RestrictedLift(new, lambda x, d=inner_domain: d(_equatorial(x)))
            kinds[name] = "ambient"
        elif isinstance(comp, SuspensionFlow):
            new = LatitudeSuspension(comp, chart=name + "+")
            kinds[name] = "suspension"
        else:
            new = LatitudeLift(comp, chart=name + "+")
            kinds[name] = "local"
        comps[name + "+"] = new

    def split(kind, X):
        X = np.asarray(X, dtype=float)
        if kind == "ambient":
            y, w = X[..., :-1], X[..., -1]
            r = np.linalg.norm(y, axis=-1)
            return y / np.where(r > 0, r, 1.0)[..., None], np.arctan2(w, r)
        return X[..., :-1], X[..., -1]

    def join(kind, B, th):
        if kind == "ambient":
            return np.concatenate([np.cos(th)[..., None] * B, np.sin(th)[..., None]], axis=-1)
        return np.concatenate([B, th[..., None]], axis=-1)

    transitions = []
    for t in system.transitions:
        ks, kt = kinds[t.source], kinds[t.target]

        def guard(X, t=t, ks=ks):
            B, _ = split(ks, X)
            return t.guard(B)

        def apply(X, t=t, ks=ks, kt=kt):
            B, th = split(ks, X)
            return join(kt, t.apply(B), th)

        transitions.append(Transition(t.source + "+", t.target + "+", guard, apply, None, t.locate, t.tag))
    lifted = HybridSystem(comps, transitions, name=f"extend({system.name})", default_step=system.default_step)
    lifted.base_system = system
    lifted.kinds = {k + "+": v for k, v in kinds.items()}
    return lifted


def _equatorial(x):
    y = np.asarray(x, dtype=float)[..., :-1]
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


class _RestrictedLift(ExtendedSphereField):
    def __init__(self, inner: ExtendedSphereField, domain):
        self.__dict__.update(inner.__dict__)
        self._domain = domain

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        y = x[..., :-1]
        near_pole = np.linalg.norm(y, axis=-1) < 1e-8
        ok = np.ones(x.shape[:-1], dtype=bool)
        far = ~near_pole
        if np.any(far):
            ok = np.where(far, self._domain(np.where(far[..., None], x, 1.0)), True)
        return ok & np.all(np.isfinite(x), axis=-1)


def extend_to_next_sphere(flow):
    """Flow on S^n restricting to ``flow`` on the equator, with hyperbolic sources at both poles."""
    if isinstance(flow, HybridSystem):
        return lift_hybrid(flow)
    if isinstance(flow, SphereField):
        return ExtendedSphereField(flow)
    raise InvalidInputError(f"cannot extend {type(flow).__name__}: expected a sphere flow")
