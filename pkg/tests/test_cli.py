import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aflows.charts import ChartedPoint
from aflows.cli import (
    ConfigError,
    list_systems,
    main,
    parse_config,
    parse_point_row,
    read_points_csv,
    run,
    write_points_csv,
)


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_unknown_key_names_key_and_line(tmp_path, capsys):
    cfg = _write(tmp_path, "system = lemma1\n# comment\nseed = 1\nfoo = 3\n")
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "foo" in err and "line 4" in err


@pytest.mark.parametrize("text,line", [
    ("system = nowhere\n", 1),
    ("system = lemma1\nseed = abc\n", 2),
    ("system = lemma1\nanalysis = lyapunov, bogus\n", 2),
    ("system = lemma1\nanalysis = trap_check\ncensus.T = 5\n", 3),
    ("system = lemma1\nparam.radius = 0.1\n", 2),
    ("system = da_susp\nparam.radius = fast\n", 2),
    ("system = lemma1\nseed 3\n", 2),
    ("system = lemma1\nseed = 1\nseed = 2\n", 3),
])
def test_validation_errors_are_line_numbered(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line


def test_construction_failures_exit_as_validation_errors(tmp_path, capsys):
    cfg = _write(tmp_path, f"system = da_susp\nparam.tube_radius = 0.05\nanalysis = trap_check\n"
                           f"output_dir = {tmp_path / 'out'}\n")
    assert main(["run", str(cfg)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_list_systems_is_stable_and_complete():
    a, b = io.StringIO(), io.StringIO()
    list_systems(a)
    list_systems(b)
    assert a.getvalue() == b.getvalue()
    entries = [ln for ln in a.getvalue().splitlines() if not ln.startswith(" ")]
    assert len(entries) == 7
    names = {e.split("\t")[0] for e in entries}
    assert names == {"anosov_susp", "da_susp", "plykin_susp", "lemma1", "gradient_sphere(n)",
                     "extend_sphere(n)", "theorem1_s3"}
    assert all(("Lemma" in e) or ("Theorem" in e) for e in entries)


def test_anosov_lyapunov_run(tmp_path):
    out = tmp_path / "out"
    cfg = parse_config(f"system = anosov_susp\nanalysis = lyapunov\nlyapunov.T = 1e4\noutput_dir = {out}\n")
    assert run(cfg, out=io.StringIO()) == 0
    doc = json.loads((out / "lyapunov.json").read_text())
    assert doc["schema_version"] == 1
    ex = doc["report"]["exponents"]
    assert ex[0] == pytest.approx(0.9624, rel=0.01) and abs(ex[1]) < 0.01 and ex[2] == pytest.approx(-0.9624, rel=0.01)
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["parameters"] == {"power": 1} and "started" in man


_CHEAP_PARAMS = {"census": "census.samples = 100\ncensus.T = 20\n",
                 "invariance": "invariance.samples = 50\ninvariance.T = 20\n",
                 "cloud": "cloud.orbits = 20\ncloud.iterates = 50\ncloud.transient = 50\n"}


def cheap(analyses):
    names = [a.strip() for a in analyses.split(",")]
    return f"system = plykin_susp\nseed = 11\nanalysis = {analyses}\n" + "".join(_CHEAP_PARAMS[a] for a in names)


def _reports(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.name != "manifest.json"}


def test_reports_are_byte_identical_across_runs_and_orders(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d, names, jobs in ((a, "census, invariance, cloud", 1), (b, "census, invariance, cloud", 3),
                           (c, "cloud, invariance, census", 1)):
        cfg = parse_config(cheap(names) + f"output_dir = {d}\n")
        assert run(cfg, jobs=jobs, out=io.StringIO()) == 0
    assert _reports(a) == _reports(b) == _reports(c)
    assert (a / "manifest.json").read_bytes() != b"" and "cloud.csv" in _reports(a)


def test_seed_override_changes_samples(tmp_path):
    cfg = _write(tmp_path, cheap("cloud"))
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "x"), "--seed", "1"]) == 0
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "y"), "--seed", "2"]) == 0
    assert (tmp_path / "x" / "cloud.csv").read_bytes() != (tmp_path / "y" / "cloud.csv").read_bytes()
    man = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert man["config"]["seed"] == 1


def test_cloud_csv_round_trips(tmp_path):
    cfg = parse_config(cheap("cloud") + f"output_dir = {tmp_path}\n")
    run(cfg, out=io.StringIO())
    text = (tmp_path / "cloud.csv").read_text().splitlines()
    assert text[0] == "chart_id,c1,c2,c3"
    pts = read_points_csv(tmp_path / "cloud.csv")
    assert len(pts) == 20 * 50
    write_points_csv(tmp_path / "again.csv", pts)
    assert read_points_csv(tmp_path / "again.csv") == pts
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "cloud.csv").read_bytes()


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.sampled_from(["T2xS1", "s3", "plykin+"]), st.lists(finite, min_size=1, max_size=5))
def test_point_rows_round_trip(chart, coords):
    p = ChartedPoint(chart, tuple(coords))
    row = ",".join([chart] + [repr(float(v)) for v in coords])
    q = parse_point_row(row)
    assert q == p or all(math.copysign(1, a) == math.copysign(1, b) and a == b for a, b in zip(q.local, p.local))


def test_failed_check_exit_status(tmp_path, capsys):
    cfg = _write(tmp_path, f"system = lemma1\nanalysis = trap_check\ntrap_check.flipped = true\n"
                           f"output_dir = {tmp_path / 'o'}\n")
    assert main(["run", str(cfg)]) == 3
    assert "trap_check.json" in capsys.readouterr().err
    doc = json.loads((tmp_path / "o" / "trap_check.json").read_text())
    assert doc["passes"] is False
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["failed"] == ["trap_check.json"] and man["exit_status"] == 3


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2


def test_lemma1_pipeline(tmp_path):
    cfg = parse_config(f"system = lemma1\nanalysis = equilibria, periodic_orbits, census, splitting\n"
                       f"census.samples = 100\ncensus.T = 30\nsplitting.T = 30\noutput_dir = {tmp_path}\n")
    status = run(cfg, out=io.StringIO())
    eq = json.loads((tmp_path / "equilibria.json").read_text())["report"]["equilibria"]
    assert [e["tag"] for e in eq] == ["saddle"]
    census = json.loads((tmp_path / "census.json").read_text())
    assert census["passes"]
    # the orbit is attracting, so the splitting check reports no expansion and fails
    split = json.loads((tmp_path / "splitting.json").read_text())
    assert not split["report"]["expanding"] and status == 3
    assert np.isfinite(split["report"]["expansion_rate"])
