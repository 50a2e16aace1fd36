"""Fixed-step integration across charts and suspension seams, and orbit locators.

Every system is handled as a set of per-chart components with switching
rules (a plain field or suspension is a one-chart system).  Vector-field
components use classical RK4 with the variational equation; suspension
components translate the fiber coordinate exactly and apply the base map and
its Jacobian as a discrete event when the seam s = 1 is reached.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charts import ChartedPoint, torus_delta
from .errors import EscapeError, InvalidInputError, NoReturnError, NumericalOverflowError
from .systems import HybridSystem
from .models import LatitudeSuspension


# ---------------------------------------------------------------------------
# records


@dataclass
class OrbitRecord:
    times: np.ndarray
    charts: list
    coords: list
    events: list = field(default_factory=list)

    @property
    def points(self):
        return [ChartedPoint.of(c, x) for c, x in zip(self.charts, self.coords)]

    @property
    def final(self) -> ChartedPoint:
        return ChartedPoint.of(self.charts[-1], self.coords[-1])

    def coords_array(self, chart: str | None = None) -> np.ndarray:
        chart = chart or self.charts[-1]
        rows = [x for c, x in zip(self.charts, self.coords) if c == chart]
        return np.array(rows)

    def __len__(self):
        return len(self.times)


@dataclass
class TangentFrameHistory:
    times: np.ndarray
    frames: np.ndarray  # (n, dim, k) frames right after each re-orthonormalisation
    log_growth: np.ndarray  # (n, k) log stretch of each direction over the preceding interval
    flow_directions: np.ndarray | None = None  # unit field direction at each time (for splittings)
    resets: list = field(default_factory=list)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.log_growth, axis=0)

    @property
    def total_time(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0


@dataclass
class BatchResult:
    charts: np.ndarray  # chart name per sample (object array)
    coords: list  # per-sample final coordinates
    escaped: np.ndarray
    stopped: np.ndarray
    times: np.ndarray  # time reached by each sample

    def in_chart(self, chart: str):
        idx = np.flatnonzero(self.charts == chart)
        return idx, np.array([self.coords[i] for i in idx]) if len(idx) else np.zeros((0,))


# ---------------------------------------------------------------------------
# single-component steps


def as_hybrid(system) -> HybridSystem:
    if isinstance(system, HybridSystem):
        return system
    return HybridSystem({system.chart: system}, [], name=getattr(system, "name", "system"),
                       default_step=system.default_step)


def is_suspension(comp) -> bool:
    return getattr(comp, "kind", "") == "suspension"


def _rk4(comp, X, h, F=None):
    if np.ndim(h):
        h = np.asarray(h, dtype=float)[..., None]
    f = comp.evaluate
    k1 = f(X)
    X2 = X + 0.5 * h * k1
    k2 = f(X2)
    X3 = X + 0.5 * h * k2
    k3 = f(X3)
    X4 = X + h * k3
    k4 = f(X4)
    Xn = comp.project(X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    if F is None:
        return Xn, None
    if np.ndim(h):
        h = h[..., None]
    J = comp.jacobian
    K1 = J(X) @ F
    K2 = J(X2) @ (F + 0.5 * h * K1)
    K3 = J(X3) @ (F + 0.5 * h * K2)
    K4 = J(X4) @ (F + h * K3)
    Fn = F + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    if getattr(comp, "manifold_dim", comp.dim) < comp.dim:
        # keep frames tangent to the sphere
        Fn = Fn - Xn[..., :, None] * np.einsum("...i,...ik->...k", Xn, Fn)[..., None, :]
    return Xn, Fn


def _advance_suspension(comp, X, h, F=None):
    X = np.array(X, dtype=float)
    F = None if F is None else np.array(F, dtype=float)
    b = comp.base.dim
    s = X[..., -1].copy()
    remaining = np.broadcast_to(np.asarray(h, dtype=float), s.shape).copy()
    seams = np.zeros(s.shape, dtype=int)
    if comp.direction > 0:
        while True:
            cross = remaining >= 1.0 - s
            if not np.any(cross):
                break
            remaining = np.where(cross, remaining - (1.0 - s), remaining)
            q, D = comp.seam_forward(X[cross, :b])
            X[cross, :b] = q
            if F is not None:
                F[cross, :b, :] = D @ F[cross, :b, :]
            s = np.where(cross, 0.0, s)
            seams += cross
            if np.all(remaining[cross] == 0.0):
                break
        s = s + remaining
    else:
        while True:
            cross = remaining > s
            if not np.any(cross):
                break
            remaining = np.where(cross, remaining - s, remaining)
            q, D = comp.seam_backward(X[cross, :b])
            X[cross, :b] = q
            if F is not None:
                F[cross, :b, :] = D @ F[cross, :b, :]
            s = np.where(cross, 1.0, s)
            seams += cross
        s = s - remaining
    X[..., -1] = s
    return X, F, seams


def _advance_lifted_suspension(comp, X, h, F=None):
    if F is not None:
        raise InvalidInputError("tangent integration is not available on lifted suspensions")
    X = np.array(X, dtype=float)
    b = comp.base.dim
    s = X[..., -2].copy()
    th = X[..., -1].copy()
    remaining = np.broadcast_to(np.asarray(h, dtype=float), s.shape).copy()
    seams = np.zeros(s.shape, dtype=int)
    while True:
        T = np.tan(th)
        ds = comp.fiber_advance(T, remaining)
        cross = s + ds >= 1.0
        if not np.any(cross):
            break
        # time to reach the seam, by Newton on the monotone closed form
        need = 1.0 - s[cross]
        Tc = T[cross]
        t = need.copy()
        for _ in range(50):
            g = comp.fiber_advance(Tc, t) - need
            slope = np.cos(comp.latitude_after(np.arctan(Tc), t)) ** 2
            dt = g / slope
            t = t - dt
            if np.all(np.abs(dt) < 1e-15):
                break
        t = np.clip(t, 0.0, remaining[cross])
        q, _ = comp.seam_forward(X[cross, :b])
        X[cross, :b] = q
        th[cross] = comp.latitude_after(th[cross], t)
        s[cross] = 0.0
        remaining[cross] -= t
        seams += cross
        s = np.where(cross, s, s + ds)
        th = np.where(cross, th, comp.latitude_after(th, remaining))
        remaining = np.where(cross, remaining, 0.0)
    s = s + comp.fiber_advance(np.tan(th), remaining)
    th = comp.latitude_after(th, remaining)
    X[..., -2] = s
    X[..., -1] = th
    return X, None, seams


def advance(comp, X, h, F=None):
    """One step of length ``h`` inside a single component: (X, F, seam counts)."""
    X = np.asarray(X, dtype=float)
    if isinstance(comp, LatitudeSuspension):
        return _advance_lifted_suspension(comp, X, h, F)
    if is_suspension(comp):
        return _advance_suspension(comp, X, h, F)
    Xn, Fn = _rk4(comp, X, h, F)
    return Xn, Fn, np.zeros(X.shape[:-1], dtype=int)


def initial_frame(comp, X):
    """Orthonormal tangent frames (n, dim, manifold_dim) at the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if getattr(comp, "manifold_dim", comp.dim) == comp.dim:
        return np.broadcast_to(np.eye(comp.dim), (X.shape[0], comp.dim, comp.dim)).copy()
    return np.stack([comp.tangent_basis(x) for x in X])


def _locate(comp, guard, X, h, iters=60):
    """Earliest time in (0, h] where ``guard`` changes sign along the step, by bisection."""
    lo = np.zeros(X.shape[0])
    hi = np.full(X.shape[0], float(h))
    for _ in range(iters):
        if np.all(hi - lo < 1e-13):
            break
        mid = 0.5 * (lo + hi)
        Xm = advance(comp, X, mid)[0]
        neg = guard(Xm) < 0
        hi = np.where(neg, mid, hi)
        lo = np.where(neg, lo, mid)
    return hi, advance(comp, X, hi)[0]


# ---------------------------------------------------------------------------
# grouped propagation over charts


class _Groups:
    def __init__(self, system: HybridSystem, charts, X, with_frames: bool):
        self.system = system
        self.with_frames = with_frames
        self.data = {}
        n = len(charts)
        charts = np.asarray(charts, dtype=object)
        for name in dict.fromkeys(charts):
            idx = np.flatnonzero(charts == name)
            comp = system.component(name)
            Xc = np.array([X[i] for i in idx], dtype=float)
            F = initial_frame(comp, Xc) if with_frames else None
            self.data[name] = [idx, Xc, F]
        self.n = n

    def step(self, h, events=None, t=0.0):
        """Advance every sample by h; returns ids whose frames were reset and ids that escaped."""
        sys = self.system
        incoming = {name: [] for name in sys.components}
        resets, escaped = [], []
        for name, (idx, X, F) in list(self.data.items()):
            if len(idx) == 0:
                continue
            comp = sys.component(name)
            Xn, Fn, seams = advance(comp, X, h, F)
            if events is not None and np.any(seams):
                for i in np.flatnonzero(seams):
                    events.append((t + h, int(idx[i]), "seam"))
            moved = np.zeros(len(idx), dtype=bool)
            for tr in sys.transitions_from(name):
                free = ~moved
                if not np.any(free):
                    break
                g = np.full(len(idx), np.inf)
                g[free] = tr.guard(Xn[free])
                hit = np.flatnonzero(free & (g < 0))
                if len(hit) == 0:
                    continue
                target = sys.component(tr.target)
                if tr.locate:
                    tau, Xa = _locate(comp, tr.guard, X[hit], h)
                    Y = np.asarray(tr.apply(Xa), dtype=float)
                    rest = h - tau
                    Yn = advance(target, Y, rest)[0]
                else:
                    Yn = np.asarray(tr.apply(Xn[hit]), dtype=float)
                if self.with_frames:
                    if tr.jacobian is not None and not tr.locate:
                        Fy = tr.jacobian(Xn[hit]) @ Fn[hit]
                    else:
                        Fy = initial_frame(target, Yn)
                        resets.extend(int(i) for i in idx[hit])
                else:
                    Fy = None
                incoming[tr.target].append((idx[hit], Yn, Fy))
                if events is not None:
                    for i in idx[hit]:
                        events.append((t + h, int(i), tr.tag or f"{name}->{tr.target}"))
                moved[hit] = True
            keep = ~moved
            ok = comp.contains(Xn[keep]) if np.any(keep) else np.zeros(0, dtype=bool)
            bad = np.flatnonzero(keep)[~ok]
            if len(bad):
                escaped.extend(int(i) for i in idx[bad])
                keep[bad] = False
            self.data[name] = [idx[keep], Xn[keep], Fn[keep] if Fn is not None else None]
        for name, parts in incoming.items():
            for ids, Y, Fy in parts:
                cur = self.data.setdefault(name, [np.zeros(0, dtype=int), np.zeros((0, Y.shape[-1])),
                                                  np.zeros((0,) + Fy.shape[1:]) if Fy is not None else None])
                cur[0] = np.concatenate([cur[0], ids])
                cur[1] = np.concatenate([cur[1].reshape(-1, Y.shape[-1]), Y])
                if Fy is not None:
                    cur[2] = Fy if cur[2] is None or len(cur[2]) == 0 else np.concatenate([cur[2], Fy])
        return resets, escaped

    def remove(self, ids):
        ids = set(int(i) for i in ids)
        out = {}
        for name, (idx, X, F) in self.data.items():
            keep = np.array([int(i) not in ids for i in idx], dtype=bool)
            for j in np.flatnonzero(~keep):
                out[int(idx[j])] = (name, X[j].copy())
            self.data[name] = [idx[keep], X[keep], F[keep] if F is not None else None]
        return out

    def states(self):
        out = {}
        for name, (idx, X, F) in self.data.items():
            for j, i in enumerate(idx):
                out[int(i)] = (name, X[j], None if F is None else F[j])
        return out

    def size(self):
        return sum(len(v[0]) for v in self.data.values())


def _coerce_start(system, x0):
    if isinstance(x0, ChartedPoint):
        return x0.chart_id, x0.array
    hs = as_hybrid(system)
    if len(hs.components) != 1:
        raise InvalidInputError("multi-chart systems need a ChartedPoint start")
    return next(iter(hs.components)), np.asarray(x0, dtype=float)


def _check_start(hs, chart, x):
    if chart not in hs.components:
        raise InvalidInputError(f"chart {chart!r} is not part of system {hs.name!r}")
    comp = hs.component(chart)
    if x.shape[-1] != comp.dim:
        raise InvalidInputError(f"expected {comp.dim} coordinates in chart {chart!r}, got {x.shape[-1]}")
    if not np.all(comp.contains(x)):
        raise InvalidInputError(f"start point {tuple(np.atleast_1d(x))} lies outside chart {chart!r}")


def _n_steps(T, step):
    if not step > 0:
        raise InvalidInputError("step must be positive")
    if T < 0:
        raise InvalidInputError("T must be non-negative")
    n = int(np.ceil(T / step - 1e-9))
    return n, (T / n if n else step)


def integrate(system, x0, T: float, step: float | None = None, record_stride: int = 1) -> OrbitRecord:
    """Integrate from ``x0`` for time ``T``; the step is shrunk so that T is hit exactly."""
    hs = as_hybrid(system)
    chart, x = _coerce_start(system, x0)
    _check_start(hs, chart, x)
    n, h = _n_steps(T, step or hs.default_step)
    g = _Groups(hs, [chart], [x], with_frames=False)
    times, charts, coords, raw_events = [0.0], [chart], [x.copy()], []
    for k in range(n):
        _, esc = g.step(h, raw_events, k * h)
        if esc:
            raise EscapeError(f"orbit left every chart of {hs.name!r} near t={k * h:.6g}",
                              last_state=ChartedPoint.of(charts[-1], coords[-1]), time=k * h)
        if (k + 1) % record_stride == 0 or k == n - 1:
            c, X, _ = g.states()[0]
            times.append((k + 1) * h)
            charts.append(c)
            coords.append(X.copy())
    events = [(t, tag) for t, _, tag in raw_events]
    return OrbitRecord(np.array(times), charts, coords, events)


def flow_map(system, x0, T: float, step: float | None = None) -> ChartedPoint:
    return integrate(system, x0, T, step, record_stride=10**12).final


def _qr_positive(F):
    Q, R = np.linalg.qr(F)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    Q = Q * d[..., None, :]
    R = R * d[..., :, None]
    return Q, R


def integrate_with_tangent(system, x0, T: float, step: float | None = None, renorm_interval: float = 1.0,
                           record_stride: int | None = None, initial_frame_matrix=None):
    """Integrate the orbit and an orthonormal tangent frame; QR every ``renorm_interval``."""
    hs = as_hybrid(system)
    chart, x = _coerce_start(system, x0)
    _check_start(hs, chart, x)
    if not renorm_interval > 0:
        raise InvalidInputError("renorm_interval must be positive")
    n, h = _n_steps(T, step or hs.default_step)
    every = max(1, int(round(renorm_interval / h)))
    stride = record_stride or every
    g = _Groups(hs, [chart], [x], with_frames=True)
    if initial_frame_matrix is not None:
        g.data[chart][2] = np.asarray(initial_frame_matrix, dtype=float)[None].copy()
    times, charts, coords, raw_events = [0.0], [chart], [x.copy()], []
    f_times, frames, logs, dirs, resets = [], [], [], [], []
    pending = None
    for k in range(n):
        reset, esc = g.step(h, raw_events, k * h)
        if esc:
            raise EscapeError(f"orbit left every chart of {hs.name!r} near t={k * h:.6g}",
                              last_state=ChartedPoint.of(charts[-1], coords[-1]), time=k * h)
        if reset:
            resets.append((k + 1) * h)
        if (k + 1) % every == 0 or k == n - 1:
            name = next(nm for nm, v in g.data.items() if len(v[0]))
            F = g.data[name][2][0]
            if not np.all(np.isfinite(F)):
                raise NumericalOverflowError("tangent frame overflowed; decrease renorm_interval")
            Q, R = _qr_positive(F)
            diag = np.abs(np.diagonal(R))
            with np.errstate(divide="ignore"):
                lg = np.log(diag)
            if not np.all(np.isfinite(lg)):
                raise NumericalOverflowError("tangent frame degenerated; decrease renorm_interval")
            g.data[name][2][0] = Q
            X = g.data[name][1][0]
            comp = hs.component(name)
            v = np.asarray(comp.evaluate(X), dtype=float)
            nv = np.linalg.norm(v)
            f_times.append((k + 1) * h)
            frames.append(Q.copy())
            logs.append(lg)
            dirs.append(v / nv if nv > 0 else v)
        if (k + 1) % stride == 0 or k == n - 1:
            c, X, _ = g.states()[0]
            times.append((k + 1) * h)
            charts.append(c)
            coords.append(X.copy())
    rec = OrbitRecord(np.array(times), charts, coords, [(t, tag) for t, _, tag in raw_events])
    hist = TangentFrameHistory(np.array(f_times), np.array(frames), np.array(logs), np.array(dirs), resets)
    return rec, hist


def propagate(system, starts, T: float, step: float | None = None, stop=None, check_every: int = 10) -> BatchResult:
    """Advance many samples together.  ``stop(chart, X) -> mask`` freezes samples early."""
    hs = as_hybrid(system)
    charts = [s.chart_id if isinstance(s, ChartedPoint) else next(iter(hs.components)) for s in starts]
    X = [s.array if isinstance(s, ChartedPoint) else np.asarray(s, dtype=float) for s in starts]
    n_samples = len(starts)
    n, h = _n_steps(T, step or hs.default_step)
    g = _Groups(hs, charts, X, with_frames=False)
    final_c = np.array(charts, dtype=object)
    final_x = list(X)
    escaped = np.zeros(n_samples, dtype=bool)
    stopped = np.zeros(n_samples, dtype=bool)
    reached = np.full(n_samples, float(T))
    for k in range(n):
        _, esc = g.step(h, None, k * h)
        if esc:
            out = g.remove(esc)
            for i, (c, x) in out.items():
                final_c[i], final_x[i] = c, x
                escaped[i] = True
                reached[i] = (k + 1) * h
        if stop is not None and ((k + 1) % check_every == 0):
            done = []
            for name, (idx, Xc, _) in g.data.items():
                if len(idx):
                    m = np.asarray(stop(name, Xc), dtype=bool)
                    done.extend(int(i) for i in idx[m])
            if done:
                out = g.remove(done)
                for i, (c, x) in out.items():
                    final_c[i], final_x[i] = c, x
                    stopped[i] = True
                    reached[i] = (k + 1) * h
        if g.size() == 0:
            break
    for i, (c, x, _) in g.states().items():
        final_c[i], final_x[i] = c, x
    return BatchResult(final_c, final_x, escaped, stopped, reached)


# ---------------------------------------------------------------------------
# equilibria


@dataclass
class Equilibrium:
    point: ChartedPoint
    eigenvalues: np.ndarray
    tag: str
    hyperbolic: bool
    residual: float

    def __iter__(self):
        yield self.point
        yield self.eigenvalues


@dataclass
class EquilibriumSearch:
    roots: list
    unconverged: list

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    def __getitem__(self, i):
        return self.roots[i]


def stability_tag(eigenvalues, hyperbolic_tol=1e-9) -> tuple[str, bool]:
    re = np.real(eigenvalues)
    hyperbolic = bool(np.all(np.abs(re) > hyperbolic_tol))
    if not hyperbolic:
        return "non-hyperbolic", False
    if np.all(re > 0):
        return "source", True
    if np.all(re < 0):
        return "sink", True
    return "saddle", True


def _newton_equilibrium(comp, x, tol, max_iter):
    for _ in range(max_iter):
        F = comp.evaluate(x)
        r = np.linalg.norm(F)
        if r < tol:
            return x, r, True
        B = comp.tangent_basis(x)
        Jt = B.T @ comp.jacobian(x) @ B
        try:
            d = -np.linalg.solve(Jt, B.T @ F)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(Jt, B.T @ F, rcond=None)[0]
        a = 1.0
        for _ in range(40):
            xn = comp.project(x + a * (B @ d))
            if np.linalg.norm(comp.evaluate(xn)) < r:
                break
            a *= 0.5
        x = xn
    r = np.linalg.norm(comp.evaluate(x))
    return x, r, r < tol


def find_equilibria(system, seeds, tol: float = 1e-10, max_iter: int = 60) -> EquilibriumSearch:
    """Damped Newton from every seed; roots within 10*tol are merged."""
    hs = as_hybrid(system)
    roots, failed = [], []
    for seed in seeds:
        chart, x = _coerce_start(system, seed)
        comp = hs.component(chart)
        if is_suspension(comp):
            continue
        x, r, ok = _newton_equilibrium(comp, np.asarray(x, dtype=float), tol, max_iter)
        if not ok or not np.all(comp.contains(x)):
            failed.append(seed)
            continue
        if any(c.point.chart_id == chart and np.linalg.norm(c.point.array - x) < 10 * tol for c in roots):
            continue
        B = comp.tangent_basis(x)
        ev = np.linalg.eigvals(B.T @ comp.jacobian(x) @ B)
        ev = ev[np.lexsort((np.imag(ev), np.real(ev)))]
        tag, hyp = stability_tag(ev)
        roots.append(Equilibrium(ChartedPoint.of(chart, x), ev, tag, hyp, float(r)))
    roots.sort(key=lambda e: (e.point.chart_id, e.point.local))
    return EquilibriumSearch(roots, failed)


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass(frozen=True)
class HyperplaneSection:
    """{x : (x - point) . normal = 0} in one chart, crossed in the direction of ``normal``."""

    point: tuple
    normal: tuple
    chart: str | None = None

    def value(self, X):
        return (np.asarray(X, dtype=float) - np.asarray(self.point)) @ np.asarray(self.normal)

    def basis(self):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        M = np.concatenate([n[:, None], np.eye(len(n))], axis=1)
        Q, _ = np.linalg.qr(M)
        return Q[:, 1 : len(n)]


@dataclass(frozen=True)
class FiberSection:
    """The fiber {s = s0} of a mapping torus."""

    s0: float = 0.0
    chart: str | None = None


@dataclass
class PeriodicOrbitResult:
    point: ChartedPoint
    period: float
    floquet_multipliers: np.ndarray
    stability_tag: str
    closure_error: float
    iterations: int
    converged: bool = True


def multiplier_tag(mult) -> str:
    m = np.abs(mult)
    if np.all(m < 1):
        return "attracting"
    if np.all(m > 1):
        return "repelling"
    return "saddle"


def _first_return(comp, x, section, h, max_time):
    """Return point, time and derivative of the flow along the way (identity start)."""
    n = np.asarray(section.normal, dtype=float)
    F0 = np.eye(comp.dim)[None]
    X = x[None].copy()
    t = 0.0
    g_prev = section.value(X)[0]
    steps = int(np.ceil(max_time / h))
    for k in range(steps):
        Xn, Fn, _ = advance(comp, X, h, F0)
        g = section.value(Xn)[0]
        if k > 0 and g_prev < 0.0 <= g:
            # Newton on the sub-step length
            tau = h * (-g_prev) / (g - g_prev)
            for _ in range(20):
                Xt, _, _ = advance(comp, X, tau)
                gt = section.value(Xt)[0]
                rate = float(n @ comp.evaluate(Xt[0]))
                d = gt / rate
                tau -= d
                if abs(d) < 1e-15:
                    break
            Xt, Ft, _ = advance(comp, X, tau, F0)
            return Xt[0], t + tau, Ft[0]
        X, F0, g_prev = Xn, Fn, g
        t += h
    raise NoReturnError(f"no return to the section within time {max_time}")


def find_periodic_orbit(system, section, seed, tol: float = 1e-10, step: float | None = None,
                        max_time: float = 100.0, max_iter: int = 30, returns: int = 1) -> PeriodicOrbitResult:
    """Newton on the Poincare return map; Floquet multipliers from its derivative."""
    hs = as_hybrid(system)
    chart, x = _coerce_start(system, seed)
    comp = hs.component(chart)
    if isinstance(section, FiberSection):
        if not is_suspension(comp):
            raise InvalidInputError("fiber sections need a suspension component")
        return _periodic_suspension(comp, chart, x, section, tol, max_iter, returns)
    h = step or comp.default_step
    E = section.basis()
    p = np.asarray(section.point, dtype=float)
    n = np.asarray(section.normal, dtype=float)
    if abs(n @ comp.evaluate(x)) < 1e-12:
        raise InvalidInputError("seed orbit is tangent to the section")
    xi = E.T @ (x - p)
    it = 0
    for it in range(1, max_iter + 1):
        xs = p + E @ xi
        y, T, Phi = xs, 0.0, np.eye(comp.dim)
        for _ in range(returns):
            y, dT, Ph = _first_return(comp, y, section, h, max_time)
            T += dT
            Fy = comp.evaluate(y)
            Phi = (np.eye(comp.dim) - np.outer(Fy, n) / (n @ Fy)) @ Ph @ Phi
        DP = E.T @ Phi @ E
        R = E.T @ (y - p) - xi
        if np.linalg.norm(R) < tol:
            mult = np.linalg.eigvals(DP)
            return PeriodicOrbitResult(ChartedPoint.of(chart, xs), T, _sort_mult(mult), multiplier_tag(mult),
                                       float(np.linalg.norm(y - xs)), it)
        xi = xi - np.linalg.solve(DP - np.eye(len(xi)), R)
    mult = np.linalg.eigvals(DP)
    return PeriodicOrbitResult(ChartedPoint.of(chart, p + E @ xi), T, _sort_mult(mult), multiplier_tag(mult),
                               float(np.linalg.norm(R)), it, converged=False)


def _sort_mult(m):
    m = np.asarray(m)
    return m[np.lexsort((np.imag(m), np.abs(m)))]


def _periodic_suspension(comp, chart, x, section, tol, max_iter, returns):
    base = comp.base
    q = np.asarray(x[:-1], dtype=float)
    syms = base.symmetries() if getattr(base, "quotient", False) else [(lambda v: v, 1.0)]
    it = 0
    for it in range(1, max_iter + 1):
        y, D = q.copy(), np.eye(base.dim)
        for _ in range(returns):
            y, J = comp.seam_forward(y) if comp.direction > 0 else comp.seam_backward(y)
            D = J @ D
        best = None
        for gmap, sign in syms:
            r = torus_delta(gmap(y), q)
            if best is None or np.linalg.norm(r) < np.linalg.norm(best[0]):
                best = (r, sign)
        R, sign = best
        DP = sign * D
        if np.linalg.norm(R) < tol:
            mult = np.linalg.eigvals(DP)
            pt = base.reduce(q)
            return PeriodicOrbitResult(ChartedPoint.of(chart, np.append(pt, section.s0)), float(returns),
                                       _sort_mult(mult), multiplier_tag(mult), float(np.linalg.norm(R)), it)
        q = base.reduce(q - np.linalg.solve(DP - np.eye(base.dim), R))
    mult = np.linalg.eigvals(DP)
    return PeriodicOrbitResult(ChartedPoint.of(chart, np.append(q, section.s0)), float(returns), _sort_mult(mult),
                               multiplier_tag(mult), float(np.linalg.norm(R)), it, converged=False)


def locate_periodic_orbits(system, section, seeds, tol: float = 1e-10, dedupe: float = 1e-6, **kw):
    """Run the periodic-orbit finder from many seeds and merge coincident results."""
    found, failed = [], []
    hs = as_hybrid(system)
    for seed in seeds:
        try:
            res = find_periodic_orbit(system, section, seed, tol=tol, **kw)
        except (NoReturnError, np.linalg.LinAlgError):
            failed.append(seed)
            continue
        if not res.converged:
            failed.append(seed)
            continue
        comp = hs.component(res.point.chart_id)
        same = False
        for other in found:
            if other.point.chart_id != res.point.chart_id:
                continue
            if is_suspension(comp):
                d = comp.base_distance(other.point.array[:-1], res.point.array[:-1])
            else:
                d = np.linalg.norm(other.point.array - res.point.array)
            if d < dedupe:
                same = True
                break
        if not same:
            found.append(res)
    found.sort(key=lambda r: (r.point.chart_id, r.point.local))
    return found, failed
