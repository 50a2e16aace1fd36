"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""
import io
import time

import numpy as np
import pytest

from aflows.analysis import (
    basin_census,
    box_counting,
    default_scales,
    forward_invariance_check,
    lyapunov_spectrum,
    orientability_test,
    trap_check,
)
from aflows.charts import ChartedPoint, quotient_canonical, torus_delta
from aflows.cli import parse_config, run
from aflows.constructions import REGISTRY, build
from aflows.models import Lemma1Field, lemma1_cylinder_linearization
from aflows.orbits import (
    as_hybrid,
    find_equilibria,
    find_periodic_orbit,
    flow_map,
    integrate_with_tangent,
    is_suspension,
    locate_periodic_orbits,
    propagate,
)
from aflows.surgery import surgery_compatibility

LOG_PHI2 = np.log((3 + np.sqrt(5)) / 2)


class Criterion:
    """Collects named sub-checks and emits a single summary line."""

    def __init__(self, number, title, limit, emit):
        self.number, self.title, self.limit, self.emit = number, title, limit, emit
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.limit, f"{elapsed:.1f}s < {self.limit:.0f}s")
        ok = all(c[1] for c in self.checks)
        failed = [f"{n} ({d})" for n, good, d in self.checks if not good]
        line = f"CRITERION {self.number} [{self.title}]: {'PASS' if ok else 'FAIL'} in {elapsed:.1f}s"
        if failed:
            line += " | failed: " + "; ".join(failed)
        self.emit(line)
        for n, good, d in self.checks:
            self.emit(f"    {'ok ' if good else 'BAD'} {n}: {d}")
        assert ok, line


@pytest.fixture
def criterion(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(line):
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    def make(number, title, limit):
        return Criterion(number, title, limit, emit)

    return make


def _repelling(found):
    return [o for o in found if o.stability_tag == "repelling"]


# ---------------------------------------------------------------------------


def test_criterion_1_anosov_spectrum(criterion):
    c = criterion(1, "Anosov suspension spectrum", 60)
    b = build("anosov_susp")
    est = lyapunov_spectrum(b.system, b.start, 1e4)
    l1, l2, l3 = est.exponents
    c.check("leading exponent", abs(l1 - LOG_PHI2) <= 0.01 * LOG_PHI2, f"{l1:.6f} vs {LOG_PHI2:.6f}")
    c.check("flow exponent", abs(l2) <= 0.01, f"{l2:.2e}")
    c.check("contracting exponent", abs(l3 + LOG_PHI2) <= 0.01 * LOG_PHI2, f"{l3:.6f}")
    c.finish()


def test_criterion_2_lemma1_model(criterion):
    c = criterion(2, "Lemma-1 local model", 120)
    b = build("lemma1")
    res = find_periodic_orbit(b.system, b.section, ChartedPoint.of(b.system.chart, (1.1, 0.0, 0.1)))
    x, y, z = res.point.local
    c.check("orbit at rho=1, z=0", abs(np.hypot(x, y) - 1) < 1e-8 and abs(z) < 1e-8, f"{res.point.local}")
    c.check("period 2 pi", abs(res.period - 2 * np.pi) < 1e-6, f"{res.period:.12f}")
    target = np.exp(-2 * np.pi)
    rel = np.abs(np.abs(res.floquet_multipliers) - target) / target
    c.check("multipliers e^(-2 pi)", np.all(rel < 1e-4) and len(rel) == 2,
            f"{np.abs(res.floquet_multipliers)} rel err {rel.max():.1e}")
    eqs = find_equilibria(b.system, b.equilibrium_seeds)
    (e,) = eqs.roots
    re = np.real(e.eigenvalues)
    radial, vertical = lemma1_cylinder_linearization(0.0, 0.0)
    transverse = sorted(set(np.round(re, 6)))
    ok = (len(transverse) == 2 and abs(re.max() - 1.0) < 1e-8 and abs(re.min() + 1.0) < 1e-8
          and (radial, vertical) == (1.0, -1.0))
    c.check("axis equilibrium (+1, -1)", ok and e.tag == "saddle", f"{e.eigenvalues} at {e.point.local}")
    c.finish()


def test_criterion_3_da_suspension(criterion):
    c = criterion(3, "DA suspension", 600)
    b = build("da_susp")
    found, _ = locate_periodic_orbits(b.system, b.section, b.orbit_seeds)
    rep = _repelling(found)
    c.check("exactly one repelling orbit", len(rep) == 1, f"{[o.point.local for o in rep]}")
    tr = trap_check(b.system, b.traps[0])
    c.check("trap_check", tr.passes and tr.min_margin > 0, f"margin {tr.min_margin:.3e} on {tr.samples} samples")
    rng = np.random.default_rng(3)
    inv = forward_invariance_check(b.system, b.traps[0], b.interior_sampler(1000, rng), 1000.0)
    c.check("forward invariance", inv.passes and inv.samples == 1000, f"{inv.exits} exits")
    v = orientability_test(b.system, b.start, T=3000.0, transient=b.transient)
    c.check("orientable", v.verdict == "orientable" and v.return_count >= 100 and v.reversal_count == 0,
            f"{v.verdict}, {v.return_count} returns, {v.reversal_count} reversals")
    _, pts = b.cloud(np.random.default_rng(4), orbits=1000, transient=1000, iterates=1000)
    dim = box_counting(pts, default_scales(2, 64, 2))
    c.check("cloud dimension in (2, 3)", 2 < dim.value < 3 and dim.residual < 0.05,
            f"{dim.value:.4f}, residual {dim.residual:.4f}, {len(pts)} points")
    c.finish()


def test_criterion_4_plykin_suspension(criterion):
    c = criterion(4, "Plykin suspension", 600)
    b = build("plykin_susp")
    m = b.extra["map"]
    x = np.random.default_rng(5).random((10000, 2))
    lhs = quotient_canonical(m.evaluate(quotient_canonical(x)))
    rhs = quotient_canonical(m.evaluate(x))
    err = np.max(np.linalg.norm(torus_delta(lhs, rhs), axis=-1))
    c.check("commuting square", err <= 1e-12, f"max error {err:.1e} on 10^4 points")
    found, _ = locate_periodic_orbits(b.system, b.section, b.orbit_seeds)
    rep = _repelling(found)
    c.check("four repelling orbits", len(rep) == 4, f"{sorted(o.point.local[:2] for o in rep)}")
    tr = trap_check(b.system, b.traps[0])
    c.check("trap_check", tr.passes, f"margin {tr.min_margin:.3e}")
    inv = forward_invariance_check(b.system, b.traps[0], b.interior_sampler(1000, np.random.default_rng(6)), 1000.0)
    c.check("forward invariance", inv.passes, f"{inv.exits} exits of {inv.samples}")
    v = orientability_test(b.system, b.start, T=3000.0, transient=b.transient)
    c.check("non-orientable", v.verdict == "non-orientable" and v.reversal_count >= 1,
            f"{v.return_count} returns, {v.reversal_count} reversals")
    c.finish()


def _assembly_inventory(b):
    eqs = find_equilibria(b.system, b.equilibrium_seeds)
    found, _ = locate_periodic_orbits(b.system, b.section, b.orbit_seeds)
    comp = b.system.components["plykin"]
    isolated = [o for o in _repelling(found) if comp.contains(o.point.array[None])[0]]
    return eqs.roots, isolated


def test_criterion_5_theorem1_assembly(criterion):
    c = criterion(5, "Theorem-1 assembly on S^3", 1200)
    b = build("theorem1_s3")
    reps = [surgery_compatibility(d) for d in b.system.descriptors]
    c.check("gluing descriptors", all(r.passes for r in reps),
            ", ".join(f"{r.name}: {r.outer_margin:.2e}/{r.inner_margin:.2e}" for r in reps))
    eqs, orbits = _assembly_inventory(b)
    tags = sorted(e.tag for e in eqs)
    c.check("inventory", tags == ["saddle", "source"] and len(orbits) == 3,
            f"equilibria {tags}, repelling orbits {len(orbits)}")
    census = basin_census(b.system, 1000, 1000.0, b.sampler, rng=np.random.default_rng(7), traps=b.traps,
                          equilibria=eqs, orbits=orbits)
    frac = census.fraction(b.traps[0].name)
    c.check("census into P", frac >= 0.99, f"{frac:.3f} of 1000, unclassified {census.unclassified}")
    v = orientability_test(b.system, b.start, T=3000.0)
    c.check("non-orientable", v.verdict == "non-orientable", f"{v.return_count} returns, {v.reversal_count} reversals")
    c.finish()


def test_criterion_6_extension_to_s4(criterion):
    c = criterion(6, "Theorem-3 extension to S^4", 1200)
    b = build("extend_sphere(4)")
    hs, kinds = b.system, b.extra["kinds"]
    rng = np.random.default_rng(8)
    eq = b.extra["equatorial_sampler"](10000, rng)
    worst = 0.0
    for chart in sorted({p.chart_id for p in eq}):
        X = np.array([p.array for p in eq if p.chart_id == chart])
        worst = max(worst, float(np.max(np.abs(hs.components[chart].evaluate(X)[:, -1]))))
    c.check("equator invariant", worst == 0.0, f"max meridional component {worst} on 10^4 samples")
    poles = find_equilibria(hs, b.equilibrium_seeds).roots
    ok = len(poles) == 2 and all(np.all(np.real(e.eigenvalues) > 0) for e in poles)
    c.check("poles are sources", ok, "; ".join(str(np.round(np.real(e.eigenvalues), 6)) for e in poles))
    off = b.sampler(100, rng)
    res = propagate(hs, off, 50.0)
    lat = []
    for chart, x in zip(res.charts, res.coords):
        lat.append(abs(np.arcsin(x[-1])) if kinds[chart] == "ambient" else abs(x[-1]))
    c.check("off-equator convergence", max(lat) < 1e-6 and not res.escaped.any(), f"max latitude {max(lat):.1e}")
    census = basin_census(hs, 1000, 1000.0, b.extra["equatorial_sampler"], rng=np.random.default_rng(7),
                          traps=b.traps)
    frac = census.fraction(b.traps[0].name)
    c.check("equatorial census", frac >= 0.99, f"{frac:.3f} into the lifted P-trap")
    c.finish()


def _fd_error(fn, jac, X, eps=1e-6, delta=None):
    J = jac(X)
    cols = []
    for e in np.eye(X.shape[-1]):
        d = fn(X + eps * e) - fn(X - eps * e)
        cols.append((delta(d) if delta else d) / (2 * eps))
    num = np.stack(cols, axis=-1)
    err = np.linalg.norm(J - num, axis=(-2, -1)) / np.maximum(np.linalg.norm(J, axis=(-2, -1)), 1.0)
    return float(err.max())


def _derivative_consistency(name):
    b = build(name)
    hs = as_hybrid(b.system)
    pts = b.sampler(1000, np.random.default_rng(9))
    worst = 0.0
    for chart in sorted({p.chart_id for p in pts}):
        X = np.array([p.array for p in pts if p.chart_id == chart])
        comp = hs.component(chart)
        if is_suspension(comp):
            base = comp.base
            q = X[:, : base.dim]
            worst = max(worst, _fd_error(base.evaluate, base.jacobian, q, delta=lambda d: d - np.round(d)))
            X = np.concatenate([q, X[:, base.dim:]], axis=1)
        worst = max(worst, _fd_error(comp.evaluate, comp.jacobian, X))
    return worst


def _spectrum_pair(system, x0, T, step=None, frame_seed=0):
    hs = as_hybrid(system)
    chart = x0.chart_id if isinstance(x0, ChartedPoint) else next(iter(hs.components))
    dim = hs.component(chart).manifold_dim
    fwd = lyapunov_spectrum(system, x0, T, step=step).exponents
    rev = lyapunov_spectrum(system.reversed(), x0, T, step=step).exponents
    return np.sort(fwd), np.sort(-rev), dim


def test_criterion_7_cross_cutting(criterion, tmp_path):
    c = criterion(7, "Cross-cutting invariants", 900)
    # seam consistency
    for name in ("anosov_susp", "da_susp", "plykin_susp"):
        b = build(name)
        m = b.extra.get("map", b.system.base)
        q = np.random.default_rng(10).random((20, 2))
        worst = 0.0
        for k in range(1, 11):
            y = q.copy()
            for _ in range(k):
                y = m.evaluate(y)
            res = propagate(b.system, [np.append(p, 0.0) for p in q], float(k))
            got = np.array(res.coords)
            worst = max(worst, float(np.max(np.linalg.norm(torus_delta(got[:, :2], y), axis=1))))
        c.check(f"time-k flow = k iterates ({name})", worst <= 1e-8, f"max error {worst:.1e}, k <= 10")
    # integrator order on the closed-form model
    f = Lemma1Field()
    x0 = np.array([0.4, 0.3, 0.5])
    exact = Lemma1Field.exact_solution(x0, 2.0)
    e1 = np.linalg.norm(flow_map(f, x0, 2.0, step=0.02).array - exact)
    e2 = np.linalg.norm(flow_map(f, x0, 2.0, step=0.01).array - exact)
    c.check("order factor", 12 <= e1 / e2 <= 20, f"{e1 / e2:.2f}")
    # derivative consistency on every registered system
    names = ["anosov_susp", "da_susp", "plykin_susp", "lemma1", "gradient_sphere(3)", "extend_sphere(4)",
             "theorem1_s3"]
    assert {n.split("(")[0] for n in names} == {n.split("(")[0] for n in REGISTRY}
    for name in names:
        err = _derivative_consistency(name)
        c.check(f"finite differences ({name})", err <= 1e-5, f"max relative error {err:.1e}")
    # time reversal
    cases = [("anosov", build("anosov_susp").system, np.array([0.3, 0.7, 0.0]), 2000.0, None),
             ("gradient S^3 at the sink", build("gradient_sphere(3)").system, np.array([0.0, 0.0, 0.0, -1.0]),
              100.0, 1e-2)]
    for label, system, start, T, step in cases:
        fwd, neg_rev, _ = _spectrum_pair(system, start, T, step)
        ok = np.all(np.abs(fwd - neg_rev) <= np.maximum(0.02 * np.abs(fwd), 0.01))
        c.check(f"time reversal ({label})", ok, f"{np.round(fwd, 4)} vs {np.round(neg_rev, 4)}")
    E, _ = np.linalg.qr(np.random.default_rng(11).normal(size=(3, 3)))
    on_orbit = np.array([1.0, 0.0, 0.0])
    f_exps = np.sort(integrate_with_tangent(f, on_orbit, 20.0, step=1e-2, initial_frame_matrix=E)[1]
                     .log_growth[5:].sum(axis=0) / 15.0)
    r_exps = np.sort(-integrate_with_tangent(f.reversed(), on_orbit, 20.0, step=1e-2, initial_frame_matrix=E)[1]
                     .log_growth[5:].sum(axis=0) / 15.0)
    ok = np.all(np.abs(f_exps - r_exps) <= np.maximum(0.02 * np.abs(f_exps), 0.01))
    c.check("time reversal (lemma1 orbit)", ok, f"{np.round(f_exps, 4)} vs {np.round(r_exps, 4)}")
    # byte-identical reports
    text = ("system = plykin_susp\nseed = 5\nanalysis = census, cloud, trap_check\ncensus.samples = 200\n"
            "census.T = 50\ncloud.orbits = 20\ncloud.iterates = 100\n")
    outs = []
    for k in range(2):
        cfg = parse_config(text + f"output_dir = {tmp_path / str(k)}\n")
        run(cfg, out=io.StringIO())
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / str(k)).iterdir())
                     if p.name != "manifest.json"})
    c.check("byte-identical reports", outs[0] == outs[1] and len(outs[0]) == 4, f"{sorted(outs[0])}")
    c.finish()


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
