"""Experiment runner: flat key = value configs in, JSON reports and CSV point clouds out.

Config layout (one ``key = value`` per line, ``#`` starts a comment)::

    system = theorem1_s3          # a registered construction, e.g. gradient_sphere(3)
    seed = 7
    output_dir = runs/t1
    analysis = census, trap_check, orientability
    param.tube_radius = 0.0015    # construction parameter override
    census.samples = 1000         # analysis parameter
    census.T = 1000

Exit status: 0 when every requested check passes, 2 on a config or
validation error, 3 when an analysis check fails.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    basin_census,
    box_counting,
    default_scales,
    forward_invariance_check,
    lyapunov_spectrum,
    orientability_test,
    splitting_rate_check,
    trap_check,
)
from .charts import ChartedPoint
from .constructions import REGISTRY, Built, build, resolve
from .errors import AflowsError, ConfigurationError
from .orbits import find_equilibria, locate_periodic_orbits, propagate
from .surgery import surgery_compatibility

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 2, 3

TOP_LEVEL = ("system", "seed", "output_dir", "analysis")


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        super().__init__(message)
        self.line = line
        self.key = key

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return where + super().__str__()


# ---------------------------------------------------------------------------
# value parsing


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _coerce(value, default, key, line):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}", line, key)
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} expects an integer, got {value!r}", line, key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}", line, key)
        return float(value)
    return str(value)


# ---------------------------------------------------------------------------
# analyses


@dataclass
class Outcome:
    report: dict
    passes: bool
    clouds: dict = field(default_factory=dict)  # file stem -> list of ChartedPoint


class Context:
    """A built system plus lazily located equilibria and orbits shared between analyses."""

    def __init__(self, name: str, built: Built):
        self.name = name
        self.built = built
        self._lock = threading.Lock()
        self._equilibria = None
        self._orbits = None

    def equilibria(self, tol=1e-10):
        with self._lock:
            if self._equilibria is None:
                self._equilibria = find_equilibria(self.built.system, self.built.equilibrium_seeds, tol=tol)
            return self._equilibria

    def orbits(self, tol=1e-10):
        with self._lock:
            if self._orbits is None:
                if self.built.section is None or not self.built.orbit_seeds:
                    self._orbits = ([], [])
                else:
                    self._orbits = locate_periodic_orbits(self.built.system, self.built.section,
                                                          self.built.orbit_seeds, tol=tol, step=self.built.step)
            return self._orbits

    def isolated_orbits(self):
        """Repelling or attracting orbits in the domain of their chart; saddles belong to the attractor."""
        found, _ = self.orbits()
        hs = self.built.system
        out = []
        for o in found:
            if o.stability_tag == "saddle":
                continue
            comps = getattr(hs, "components", None)
            comp = comps[o.point.chart_id] if comps else hs
            if bool(np.all(comp.contains(o.point.array[None]))):
                out.append(o)
        return out


def _point_dict(p: ChartedPoint):
    return {"chart_id": p.chart_id, "coords": list(p.local)}


def _need_traps(ctx):
    if not ctx.built.traps:
        raise ConfigError(f"system {ctx.name} has no registered trap surface")


def _run_lyapunov(ctx, p, rng):
    b = ctx.built
    est = lyapunov_spectrum(b.system, b.start, p["T"], windows=p["windows"], step=p["step"] or b.step,
                            renorm_interval=p["renorm_interval"])
    report = est.to_dict()
    passes = True
    if p["expected"]:
        exp = [float(v) for v in str(p["expected"]).split(";")]
        if len(exp) != len(est.exponents):
            raise ConfigError(f"lyapunov.expected needs {len(est.exponents)} values")
        err = [abs(a - e) for a, e in zip(est.exponents, exp)]
        ok = [d <= max(p["rtol"] * abs(e), p["atol"]) for d, e in zip(err, exp)]
        report["expected"] = exp
        report["within_tolerance"] = ok
        passes = all(ok)
    return Outcome(report, passes)


def _cloud(ctx, p, rng):
    if ctx.built.cloud is None:
        raise ConfigError(f"system {ctx.name} has no attractor cloud generator")
    chart, pts = ctx.built.cloud(rng, orbits=p["orbits"], transient=p["transient"], iterates=p["iterates"])
    return chart, pts


def _run_dimension(ctx, p, rng):
    chart, pts = _cloud(ctx, p, rng)
    est = box_counting(pts, default_scales(p["low"], p["high"], p["per_octave"]))
    report = est.to_dict()
    report["points"] = int(len(pts))
    passes = not est.degenerate and est.residual < p["max_residual"]
    if p["lower"] is not None:
        passes &= est.value > p["lower"]
    if p["upper"] is not None:
        passes &= est.value < p["upper"]
    return Outcome(report, bool(passes))


def _run_cloud(ctx, p, rng):
    chart, pts = _cloud(ctx, p, rng)
    cloud = [ChartedPoint.of(chart, x) for x in pts]
    return Outcome({"points": len(cloud), "chart": chart, "file": "cloud.csv"}, True, {"cloud": cloud})


def _run_trap_check(ctx, p, rng):
    _need_traps(ctx)
    reps = [trap_check(ctx.built.system, t.flipped() if p["flipped"] else t) for t in ctx.built.traps]
    return Outcome({"surfaces": [r.to_dict() for r in reps]}, all(r.passes for r in reps))


def _run_invariance(ctx, p, rng):
    _need_traps(ctx)
    b = ctx.built
    starts = b.interior_sampler(p["samples"], rng)
    rep = forward_invariance_check(b.system, b.traps[0], starts, p["T"], step=p["step"] or b.step)
    return Outcome(rep.to_dict(), rep.passes)


def _run_orientability(ctx, p, rng):
    b = ctx.built
    transient = b.transient if p["transient"] is None else p["transient"]
    v = orientability_test(b.system, b.start, T=p["T"], epsilon=p["epsilon"], step=p["step"] or b.step,
                           transient=transient)
    report = v.to_dict()
    passes = v.verdict != "inconclusive"
    if p["expect"] != "any":
        passes = v.verdict == p["expect"]
    return Outcome(report, passes)


def _eq_dict(e):
    return {"point": _point_dict(e.point), "tag": e.tag, "hyperbolic": e.hyperbolic, "residual": float(e.residual),
            "eigenvalues": [[float(np.real(v)), float(np.imag(v))] for v in e.eigenvalues]}


def _run_equilibria(ctx, p, rng):
    res = ctx.equilibria(p["tol"])
    report = {"equilibria": [_eq_dict(e) for e in res.roots],
              "unconverged": [_point_dict(s) for s in res.unconverged]}
    return Outcome(report, True)


def _orbit_dict(o):
    return {"point": _point_dict(o.point), "period": float(o.period), "stability_tag": o.stability_tag,
            "floquet_multipliers": [[float(np.real(v)), float(np.imag(v))] for v in o.floquet_multipliers],
            "closure_error": float(o.closure_error)}


def _run_periodic_orbits(ctx, p, rng):
    found, failed = ctx.orbits(p["tol"])
    report = {"orbits": [_orbit_dict(o) for o in found], "failed_seeds": len(failed),
              "repelling": sum(o.stability_tag == "repelling" for o in ctx.isolated_orbits())}
    passes = True
    if p["expect_repelling"] >= 0:
        passes = report["repelling"] == p["expect_repelling"]
    return Outcome(report, passes)


def _run_census(ctx, p, rng):
    b = ctx.built
    eqs = [e for e in ctx.equilibria() if e.hyperbolic]
    orbits = ctx.isolated_orbits() if b.section is not None else []
    rep = basin_census(b.system, p["samples"], p["T"], b.sampler, rng=rng, traps=b.traps, equilibria=eqs,
                       orbits=orbits, radius=p["radius"], step=p["step"] or b.step)
    report = rep.to_dict()
    inventory = {}
    for it in rep.items:
        key = f"{it.kind}:{it.tag}"
        inventory[key] = inventory.get(key, 0) + 1
    report["inventory"] = inventory
    report["expected_inventory"] = dict(b.inventory)
    attracting = ("attractor", "sink", "attracting")
    in_attractors = sum(it.count for it in rep.items if it.tag in attracting) / rep.samples
    report["attractor_fraction"] = in_attractors
    passes = in_attractors >= p["min_classified"]
    if p["check_inventory"] and b.inventory:
        passes &= inventory == b.inventory
    return Outcome(report, bool(passes))


def _run_splitting(ctx, p, rng):
    b = ctx.built
    rep = splitting_rate_check(b.system, b.start, p["T"], p["window"], step=p["step"] or b.step)
    return Outcome(rep.to_dict(), rep.expanding and rep.contracting)


def _run_compatibility(ctx, p, rng):
    descs = getattr(ctx.built.system, "descriptors", None)
    if descs is None:
        base = ctx.built.extra.get("base")
        descs = getattr(getattr(base, "system", None), "descriptors", None)
    if not descs:
        raise ConfigError(f"system {ctx.name} has no gluing descriptors")
    reps = [surgery_compatibility(d) for d in descs]
    return Outcome({"descriptors": [r.to_dict() for r in reps]}, all(r.passes for r in reps))


def _latitude(kind, X):
    X = np.asarray(X, dtype=float)
    if kind == "ambient":
        return np.arcsin(np.clip(X[..., -1], -1.0, 1.0))
    return X[..., -1]


def _run_equator(ctx, p, rng):
    """Equator invariance, pole linearisations and convergence of off-equator points."""
    b = ctx.built
    if "equatorial_sampler" not in b.extra:
        raise ConfigError(f"system {ctx.name} is not a sphere extension")
    hs = b.system
    comps = getattr(hs, "components", None) or {hs.chart: hs}
    kinds = b.extra["kinds"]
    eq = b.extra["equatorial_sampler"](p["samples"], rng)
    worst = 0.0
    for chart in sorted({x.chart_id for x in eq}):
        X = np.array([x.array for x in eq if x.chart_id == chart])
        F = np.asarray(comps[chart].evaluate(X))
        worst = max(worst, float(np.max(np.abs(F[:, -1]))))
    poles = find_equilibria(hs, b.equilibrium_seeds[:2])
    pole_sources = [e.tag == "source" and bool(np.all(np.real(e.eigenvalues) > 0)) for e in poles.roots]
    off = b.sampler(p["converge_samples"], rng)
    res = propagate(hs, off, p["T"], step=b.step)
    lat = np.array([abs(float(_latitude(kinds[c], x))) for c, x in zip(res.charts, res.coords)])
    report = {"equator_samples": len(eq), "max_meridional_component": worst,
              "poles": [_eq_dict(e) for e in poles.roots], "converge_samples": len(off), "T": float(p["T"]),
              "max_final_latitude": float(lat.max()), "escaped": int(res.escaped.sum())}
    passes = (worst == 0.0 and len(pole_sources) == 2 and all(pole_sources) and lat.max() < p["tol"]
              and not res.escaped.any())
    if p["census_samples"] > 0 and b.traps:
        rep = basin_census(hs, p["census_samples"], p["census_T"], b.extra["equatorial_sampler"], rng=rng,
                           traps=b.traps)
        report["equatorial_census"] = rep.to_dict()
        passes &= rep.fraction(b.traps[0].name) >= p["min_classified"]
    return Outcome(report, bool(passes))


# name -> (runner, default parameters)
ANALYSES = {
    "lyapunov": (_run_lyapunov, {"T": 1e4, "windows": 100, "step": None, "renorm_interval": 1.0, "expected": None,
                                 "rtol": 0.01, "atol": 0.01}),
    "dimension": (_run_dimension, {"orbits": 1000, "iterates": 1000, "transient": 1000, "low": 2, "high": 64,
                                   "per_octave": 2, "lower": None, "upper": None, "max_residual": 0.05}),
    "cloud": (_run_cloud, {"orbits": 100, "iterates": 1000, "transient": 1000}),
    "trap_check": (_run_trap_check, {"flipped": False}),
    "invariance": (_run_invariance, {"samples": 1000, "T": 1000.0, "step": None}),
    "orientability": (_run_orientability, {"T": 3000.0, "epsilon": 0.005, "step": None, "transient": None,
                                           "expect": "any"}),
    "equilibria": (_run_equilibria, {"tol": 1e-10}),
    "periodic_orbits": (_run_periodic_orbits, {"tol": 1e-10, "expect_repelling": -1}),
    "census": (_run_census, {"samples": 1000, "T": 1000.0, "radius": 1e-2, "step": None, "min_classified": 0.99,
                             "check_inventory": True}),
    "splitting": (_run_splitting, {"T": 200.0, "window": 5.0, "step": None}),
    "compatibility": (_run_compatibility, {}),
    "equator": (_run_equator, {"samples": 10000, "converge_samples": 100, "T": 50.0, "tol": 1e-6,
                               "census_samples": 1000, "census_T": 1000.0, "min_classified": 0.99}),
}

_FLOAT_PARAMS = {"T", "step", "renorm_interval", "rtol", "atol", "lower", "upper", "max_residual", "epsilon",
                 "transient", "radius", "min_classified", "window", "tol", "census_T"}


# ---------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    system: str
    seed: int = 0
    output_dir: str = "aflows_out"
    analysis: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    analysis_parameters: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # key -> line number in the source text

    def resolved(self) -> dict:
        entry, extra = resolve(self.system)
        params = dict(entry.defaults)
        params.update(extra)
        params.update(self.parameters)
        return {"system": self.system, "seed": self.seed, "output_dir": str(self.output_dir),
                "parameters": params, "analysis": [
                    {"name": a, "parameters": self.analysis_parameters[a]} for a in self.analysis]}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat key = value config; errors carry the offending line."""
    raw = {}
    lines = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", no)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError("missing key", no)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", no, key)
        raw[key] = value
        lines[key] = no
    if "system" not in raw:
        raise ConfigError("missing required key 'system'")
    try:
        entry, extra = resolve(raw["system"])
    except ConfigurationError as exc:
        raise ConfigError(str(exc), lines["system"], "system") from None
    analysis = [a.strip() for a in raw.get("analysis", "").split(",") if a.strip()]
    for a in analysis:
        if a not in ANALYSES:
            raise ConfigError(f"unknown analysis {a!r}", lines["analysis"], "analysis")
    if len(set(analysis)) != len(analysis):
        raise ConfigError("analysis listed twice", lines["analysis"], "analysis")
    cfg = ExperimentConfig(raw["system"], analysis=analysis, lines=lines)
    if "seed" in raw:
        seed = parse_value(raw["seed"])
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {raw['seed']!r}", lines["seed"], "seed")
        cfg.seed = seed
    if "output_dir" in raw:
        cfg.output_dir = raw["output_dir"]
    cfg.analysis_parameters = {a: dict(ANALYSES[a][1]) for a in analysis}
    defaults = dict(entry.defaults)
    for key, value in raw.items():
        if key in TOP_LEVEL:
            continue
        line = lines[key]
        head, _, tail = key.partition(".")
        if not tail:
            raise ConfigError(f"unknown key {key!r}", line, key)
        val = parse_value(value)
        if head == "param":
            if tail not in defaults or tail in extra:
                raise ConfigError(f"unknown key {key!r}: {raw['system']} has no parameter {tail!r}", line, key)
            default = defaults[tail]
            if default is None and tail in ("strength", "tube_radius") and val is not None:
                default = 0.0
            cfg.parameters[tail] = _coerce(val, default, key, line)
        elif head in ANALYSES:
            if head not in analysis:
                raise ConfigError(f"unknown key {key!r}: analysis {head!r} is not requested", line, key)
            if tail not in ANALYSES[head][1]:
                raise ConfigError(f"unknown key {key!r}: analysis {head!r} has no parameter {tail!r}", line, key)
            default = ANALYSES[head][1][tail]
            if default is None and tail in _FLOAT_PARAMS and val is not None:
                default = 0.0
            if tail == "expected" and val is not None:
                val = value.replace(",", ";")
            cfg.analysis_parameters[head][tail] = _coerce(val, default, key, line)
        else:
            raise ConfigError(f"unknown key {key!r}", line, key)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# serialisation


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_points_csv(path, points) -> None:
    """One row per point: chart id then coordinates in round-trip precision."""
    dim = max((p.dim for p in points), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chart_id"] + [f"c{i + 1}" for i in range(dim)])
        for p in points:
            w.writerow([p.chart_id] + [repr(float(v)) for v in p.local])


def read_points_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "chart_id":
        raise ConfigError(f"{path}: missing 'chart_id,c1,...' header")
    return [parse_point_row(r) for r in rows[1:]]


def parse_point_row(row) -> ChartedPoint:
    if isinstance(row, str):
        row = next(csv.reader([row]))
    return ChartedPoint(row[0], tuple(float(v) for v in row[1:] if v != ""))


# ---------------------------------------------------------------------------
# running


def sub_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _line_for(cfg: ExperimentConfig, failed) -> int | None:
    for f in failed or ():
        key = f"param.{f}"
        if key in cfg.lines:
            return cfg.lines[key]
    return cfg.lines.get("system")


def run(cfg: ExperimentConfig, jobs: int = 1, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        built = build(cfg.system, **cfg.parameters)
    except ConfigurationError as exc:
        print(f"config error: line {_line_for(cfg, exc.failed)}: {exc}", file=err)
        return EXIT_INVALID
    except AflowsError as exc:
        print(f"config error: line {_line_for(cfg, ['tube_radius'])}: {type(exc).__name__}: {exc}", file=err)
        return EXIT_INVALID
    ctx = Context(cfg.system, built)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    def one(name):
        fn, _ = ANALYSES[name]
        return fn(ctx, cfg.analysis_parameters[name], sub_rng(cfg.seed, name))

    try:
        if jobs > 1 and len(cfg.analysis) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(one, cfg.analysis))
        else:
            outcomes = [one(a) for a in cfg.analysis]
    except ConfigError as exc:
        print(f"config error: line {cfg.lines.get('analysis')}: {exc}", file=err)
        return EXIT_INVALID

    failed = []
    files = []
    for name, oc in zip(cfg.analysis, outcomes):
        doc = {"schema_version": SCHEMA_VERSION, "analysis": name, "system": cfg.system, "seed": cfg.seed,
               "parameters": cfg.analysis_parameters[name], "passes": bool(oc.passes), "report": oc.report}
        fname = f"{name}.json"
        (outdir / fname).write_text(dumps(doc))
        files.append(fname)
        for stem, pts in oc.clouds.items():
            write_points_csv(outdir / f"{stem}.csv", pts)
            files.append(f"{stem}.csv")
        print(f"{name}: {'PASS' if oc.passes else 'FAIL'}", file=out)
        if not oc.passes:
            failed.append(fname)
    status = EXIT_CHECK_FAILED if failed else EXIT_OK
    manifest = {"schema_version": SCHEMA_VERSION, "version": __version__, "config": cfg.resolved(),
                "artifacts": files, "failed": failed, "exit_status": status, "started": started,
                "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(), "numpy": np.__version__}
    (outdir / "manifest.json").write_text(dumps(manifest))
    if failed:
        print("check failed: " + ", ".join(failed), file=err)
    return status


def list_systems(out=None) -> None:
    out = out or sys.stdout
    for name in sorted(REGISTRY):
        e = REGISTRY[name]
        print(f"{name}\t{e.anchor}\t{e.description}", file=out)
        for k in sorted(e.defaults):
            print(f"    {k} = {e.defaults[k]}", file=out)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="aflows", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("run", help="run the analyses of a config file")
    rp.add_argument("config")
    rp.add_argument("--output-dir")
    rp.add_argument("--seed", type=int)
    rp.add_argument("--jobs", type=int, default=1)
    sub.add_parser("list-systems", help="print the registered constructions")
    args = ap.parse_args(argv)
    if args.command == "list-systems":
        list_systems()
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs < 1:
        print("config error: --jobs must be positive", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
