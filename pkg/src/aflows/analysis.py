"""Estimators and checks: Lyapunov spectra, box counting, traps, orientability, census."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .charts import ChartedPoint, sigma, torus_distance, torus_reduce
from .errors import InvalidInputError
from .orbits import (
    as_hybrid,
    integrate_with_tangent,
    is_suspension,
    propagate,
)
from .surgery import TrapSurface, boundary_flux


# ---------------------------------------------------------------------------
# Lyapunov spectra


@dataclass
class SpectrumEstimate:
    exponents: np.ndarray
    window_variance: np.ndarray
    total_time: float
    windows: int
    window_rates: np.ndarray

    def to_dict(self):
        return {
            "exponents": [float(v) for v in self.exponents],
            "window_variance": [float(v) for v in self.window_variance],
            "total_time": float(self.total_time),
            "windows": int(self.windows),
        }


def lyapunov_spectrum(system, x0, T: float, windows: int = 100, step: float | None = None,
                      renorm_interval: float = 1.0) -> SpectrumEstimate:
    """Time averages of the QR log factors, sorted descending, with the spread over windows."""
    if windows < 1:
        raise InvalidInputError("windows must be positive")
    _, hist = integrate_with_tangent(system, x0, T, step=step, renorm_interval=renorm_interval)
    logs = hist.log_growth
    if len(logs) < windows:
        raise InvalidInputError(f"T = {T} gives only {len(logs)} renormalisations for {windows} windows")
    total = hist.total_time
    exps = logs.sum(axis=0) / total
    order = np.argsort(-exps)
    chunks = np.array_split(np.arange(len(logs)), windows)
    t = np.concatenate([[0.0], hist.times])
    rates = np.array([logs[c].sum(axis=0) / (t[c[-1] + 1] - t[c[0]]) for c in chunks])[:, order]
    return SpectrumEstimate(exps[order], rates.var(axis=0), total, windows, rates)


# ---------------------------------------------------------------------------
# box counting


@dataclass
class DimensionEstimate:
    value: float
    scales: np.ndarray
    residual: float
    counts: np.ndarray
    degenerate: bool = False

    def to_dict(self):
        return {
            "value": float(self.value),
            "scales": [float(s) for s in self.scales],
            "residual": float(self.residual),
            "counts": [int(c) for c in self.counts],
            "degenerate": bool(self.degenerate),
        }


def default_scales(low: int = 4, high: int = 128, per_octave: int = 2):
    k = int(round(np.log2(high / low) * per_octave))
    m = np.unique(np.round(low * 2.0 ** (np.arange(k + 1) / per_octave)).astype(int))
    return 1.0 / m


def box_counting(points, scales=None, origin=None) -> DimensionEstimate:
    """Slope of log N(eps) against log(1/eps); boxes are anchored at ``origin`` (default 0)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInputError("points must be a non-empty (n, d) array")
    scales = np.asarray(default_scales() if scales is None else scales, dtype=float)
    if len(scales) < 5:
        raise InvalidInputError("box counting needs at least 5 scales")
    if np.log10(scales.max() / scales.min()) < 1.5 - 1e-9:
        raise InvalidInputError("scales must span at least 1.5 decades")
    if np.all(pts == pts[0]):
        return DimensionEstimate(0.0, scales, 0.0, np.ones(len(scales), dtype=int), True)
    base = np.zeros(pts.shape[1]) if origin is None else np.asarray(origin, dtype=float)
    counts = []
    for eps in scales:
        idx = np.floor((pts - base) / eps).astype(np.int64)
        idx -= idx.min(axis=0)
        span = idx.max(axis=0) + 1
        if np.sum(np.log2(span.astype(float))) < 62:
            # one integer key per box is much faster to deduplicate than rows
            counts.append(len(np.unique(np.ravel_multi_index(idx.T, span))))
        else:
            counts.append(len(np.unique(idx, axis=0)))
    counts = np.array(counts)
    x = np.log(1.0 / scales)
    y = np.log(counts)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return DimensionEstimate(float(slope), scales, resid, counts, False)


# ---------------------------------------------------------------------------
# traps


@dataclass
class TrapReport:
    surface: str
    passes: bool
    min_margin: float
    worst_sample: tuple
    samples: int
    failing: int

    def to_dict(self):
        return {
            "surface": self.surface,
            "passes": self.passes,
            "min_margin": float(self.min_margin),
            "worst_sample": [float(v) for v in self.worst_sample],
            "samples": int(self.samples),
            "failing": int(self.failing),
        }


def trap_check(system, surface: TrapSurface) -> TrapReport:
    """Passes iff field . outward normal < 0 at every sample; margin = min of -field . normal."""
    margin = -boundary_flux(system, surface)
    k = int(np.argmin(margin))
    return TrapReport(surface.name, bool(np.all(margin > 0)), float(margin[k]), tuple(surface.points[k]),
                      len(margin), int(np.sum(margin <= 0)))


@dataclass
class InvarianceReport:
    passes: bool
    samples: int
    exits: int
    T: float
    counterexample: dict | None = None

    def to_dict(self):
        return {"passes": self.passes, "samples": self.samples, "exits": self.exits, "T": float(self.T),
                "counterexample": self.counterexample}


def forward_invariance_check(system, surface: TrapSurface, samples_inside, T: float, step: float | None = None,
                             check_every: int = 1) -> InvarianceReport:
    """Integrate interior samples for time T; any sample leaving the region is an exit."""
    starts = [s if isinstance(s, ChartedPoint) else ChartedPoint.of(surface.chart, s) for s in samples_inside]
    X0 = np.array([s.array for s in starts])
    if not np.all(surface.inside(X0)):
        raise InvalidInputError("forward invariance needs samples inside the region")

    def outside(chart, X):
        if chart != surface.chart:
            return np.ones(len(X), dtype=bool)
        return ~surface.inside(X)

    res = propagate(system, starts, T, step=step, stop=outside, check_every=check_every)
    exits = res.escaped | res.stopped
    ce = None
    if np.any(exits):
        i = int(np.argmax(exits))
        ce = {"start": [float(v) for v in X0[i]], "exit_time": float(res.times[i]),
              "exit_chart": str(res.charts[i]), "exit_state": [float(v) for v in res.coords[i]]}
    return InvarianceReport(not bool(np.any(exits)), len(starts), int(exits.sum()), T, ce)


# ---------------------------------------------------------------------------
# orientability


@dataclass
class OrientabilityVerdict:
    verdict: str
    return_count: int
    reversal_count: int
    closest_returns: list
    candidate_returns: int = 0

    def to_dict(self):
        return {"verdict": self.verdict, "return_count": self.return_count,
                "reversal_count": self.reversal_count, "closest_returns": [float(d) for d in self.closest_returns],
                "candidate_returns": self.candidate_returns}


def _dominant_track(system, x0, T, step, transient):
    """Points and unit dominant tangent directions at unit time spacing along the orbit of x0."""
    hs = as_hybrid(system)
    if transient > 0:
        from .orbits import integrate

        x0 = integrate(system, x0, transient, step, record_stride=10**12).final
    rec, hist = integrate_with_tangent(system, x0, T, step=step, renorm_interval=1.0)
    n = len(hist.frames)
    charts = rec.charts[1 : n + 1]
    pts = np.array(rec.coords[1 : n + 1])
    dirs = hist.frames[:, :, 0]
    return hs, charts, pts, dirs


def orientability_test(system, x0, T: float = 3000.0, epsilon: float = 0.005, step: float | None = None,
                       transient: float = 0.0, cos_threshold: float = 0.9, min_returns: int = 100) -> OrientabilityVerdict:
    """Compare the tracked unstable direction at epsilon-close returns of the orbit.

    On a suspension the orbit is sampled once per unit time (a fixed fiber)
    and returns are measured in the base; for the sphere quotient a return
    close to sigma(q) is compared through d(sigma) = -I.
    """
    hs, charts, pts, dirs = _dominant_track(system, x0, T, step, transient)
    chart = charts[-1]
    keep = np.array([c == chart for c in charts])
    pts, dirs = pts[keep], dirs[keep]
    comp = hs.component(chart)
    if is_suspension(comp):
        b = comp.base.dim
        q = torus_reduce(pts[:, :b])
        u = dirs[:, :b]
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        tree = cKDTree(q, boxsize=1.0)
        pairs = [(i, j, 1.0) for i, j in tree.query_pairs(epsilon)]
        if getattr(comp.base, "quotient", False):
            other = cKDTree(torus_reduce(sigma(q)), boxsize=1.0)
            for i, js in enumerate(other.query_ball_tree(tree, epsilon)):
                pairs.extend((i, j, -1.0) for j in js if j != i)
        dist = lambda i, j, sgn: float(torus_distance(q[j], q[i] if sgn > 0 else sigma(q[i])))
    else:
        q = pts
        u = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
        tree = cKDTree(q)
        pairs = [(i, j, 1.0) for i, j in tree.query_pairs(epsilon)]
        dist = lambda i, j, sgn: float(np.linalg.norm(q[j] - q[i]))
    returns = reversals = 0
    dists = []
    for i, j, sgn in pairs:
        c = sgn * float(u[i] @ u[j])
        if abs(c) <= cos_threshold:
            continue
        returns += 1
        dists.append(dist(i, j, sgn))
        if c < 0:
            reversals += 1
    dists.sort()
    if reversals >= 1:
        verdict = "non-orientable"
    elif returns >= min_returns:
        verdict = "orientable"
    else:
        verdict = "inconclusive"
    return OrientabilityVerdict(verdict, returns, reversals, dists[:10], len(pairs))


# ---------------------------------------------------------------------------
# splitting rates


@dataclass
class SplittingReport:
    window: float
    expansion_rate: float
    contraction_rate: float
    min_window_expansion: float
    max_window_contraction: float
    expanding: bool
    contracting: bool
    worst_expansion_window: int
    worst_contraction_window: int

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


def flow_first_frame(comp, x):
    """Orthonormal frame whose first vector is the flow direction at x."""
    B = comp.tangent_basis(np.asarray(x, dtype=float))
    F = np.asarray(comp.evaluate(np.asarray(x, dtype=float)), dtype=float)
    Q, _ = np.linalg.qr(np.concatenate([F[:, None], B], axis=1))
    return Q[:, : B.shape[1]]


def splitting_rate_check(system, x0, T: float, window: float, step: float | None = None,
                         renorm_interval: float = 1.0, history=None) -> SplittingReport:
    """Window-wise growth of the directions transverse to the flow.

    The tangent frame starts with the flow direction, so after each QR step
    the remaining columns measure growth of the quotient bundle: the second
    column the fastest transverse rate, the last the slowest.
    """
    hs = as_hybrid(system)
    if history is None:
        chart = x0.chart_id if isinstance(x0, ChartedPoint) else next(iter(hs.components))
        x = x0.array if isinstance(x0, ChartedPoint) else np.asarray(x0, dtype=float)
        E = flow_first_frame(hs.component(chart), x)
        _, history = integrate_with_tangent(system, x0, T, step=step, renorm_interval=renorm_interval,
                                            initial_frame_matrix=E)
    logs = history.log_growth
    times = np.concatenate([[0.0], history.times])
    per = max(1, int(round(window / np.mean(np.diff(times)))))
    nwin = len(logs) // per
    if nwin < 1:
        raise InvalidInputError("segment shorter than one window")
    blocks = logs[: nwin * per].reshape(nwin, per, -1).sum(axis=1) / window
    up, down = blocks[:, 1], blocks[:, -1]
    total = times[nwin * per]
    up_rate = float(logs[: nwin * per, 1].sum() / total)
    down_rate = float(logs[: nwin * per, -1].sum() / total)
    return SplittingReport(window, up_rate, down_rate, float(up.min()), float(down.max()), bool(np.all(up > 0)),
                           bool(np.all(down < 0)), int(np.argmin(up)), int(np.argmax(down)))


# ---------------------------------------------------------------------------
# census


@dataclass
class CensusItem:
    kind: str  # trap | equilibrium | periodic_orbit
    name: str
    tag: str
    chart: str
    count: int = 0
    attractor: bool = False

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class CensusReport:
    samples: int
    T: float
    items: list
    unclassified: int
    escaped: int

    @property
    def unclassified_fraction(self) -> float:
        return self.unclassified / self.samples if self.samples else 0.0

    @property
    def classified_fraction(self) -> float:
        return 1.0 - self.unclassified_fraction

    def fraction(self, name: str) -> float:
        return sum(i.count for i in self.items if i.name == name) / self.samples

    def count_kind(self, kind: str, tag: str | None = None) -> int:
        return sum(1 for i in self.items if i.kind == kind and (tag is None or i.tag == tag))

    def to_dict(self):
        return {"samples": self.samples, "T": float(self.T), "items": [i.to_dict() for i in self.items],
                "unclassified": self.unclassified, "unclassified_fraction": self.unclassified_fraction,
                "classified_fraction": self.classified_fraction, "escaped": self.escaped}


def basin_census(system, sample_count: int, T: float, sampler, rng=None, traps=(), equilibria=(),
                 orbits=(), radius: float = 1e-2, step: float | None = None, absorbing: bool = True) -> CensusReport:
    """Integrate random starts for time T and classify where each one ends.

    ``traps`` are TrapSurface regions (forward invariant, so with
    ``absorbing`` a sample is frozen once inside); ``equilibria`` and
    ``orbits`` are locator results whose ``radius``-neighbourhoods count.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    starts = sampler(sample_count, rng)
    hs = as_hybrid(system)
    items = [CensusItem("trap", t.name, "attractor", t.chart, attractor=True) for t in traps]
    for e in equilibria:
        items.append(CensusItem("equilibrium", f"equilibrium@{e.point.chart_id}{_fmt(e.point.local)}", e.tag,
                                e.point.chart_id))
    for o in orbits:
        items.append(CensusItem("periodic_orbit", f"orbit@{o.point.chart_id}{_fmt(o.point.local)}",
                                o.stability_tag, o.point.chart_id))

    def in_trap(chart, X):
        m = np.zeros(len(X), dtype=bool)
        for t in traps:
            if t.chart == chart:
                m |= t.inside(X)
        return m

    res = propagate(system, starts, T, step=step, stop=in_trap if (absorbing and traps) else None)
    unclassified = 0
    for i in range(sample_count):
        chart, X = res.charts[i], np.asarray(res.coords[i])
        hit = None
        if not res.escaped[i]:
            for k, t in enumerate(traps):
                if t.chart == chart and t.inside(X[None])[0]:
                    hit = k
                    break
            if hit is None:
                for k, e in enumerate(equilibria):
                    if e.point.chart_id == chart and np.linalg.norm(X - e.point.array) < radius:
                        hit = len(traps) + k
                        break
            if hit is None:
                for k, o in enumerate(orbits):
                    if o.point.chart_id != chart:
                        continue
                    comp = hs.component(chart)
                    if is_suspension(comp):
                        d = float(comp.base_distance(X[:-1], _orbit_base_at(comp, o, X[-1])))
                    else:
                        d = float(np.linalg.norm(X - o.point.array))
                    if d < radius:
                        hit = len(traps) + len(equilibria) + k
                        break
        if hit is None:
            unclassified += 1
        else:
            items[hit].count += 1
    return CensusReport(sample_count, T, items, unclassified, int(res.escaped.sum()))


def _orbit_base_at(comp, orbit, s):
    # fixed points of the base map: the suspended orbit is {q} x S^1
    return orbit.point.array[:-1]


def _fmt(local):
    return "(" + ",".join(f"{v:.4g}" for v in local) + ")"
