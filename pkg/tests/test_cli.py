import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kobvis.cli import main
from kobvis.geometry import domain_from_config, parse_config, Punctured, RasterObstacle

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cfg(tmp_path, text, name="x.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_metric_outputs(tmp_path):
    out = tmp_path / "m"
    assert main(["metric", "--config", str(CONFIGS / "metric_ball.cfg"), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "m_function.csv").open()))
    M = np.array([float(r["M"]) for r in rows])
    assert list(rows[0]) == ["r", "M", "samples_used"] and np.all(np.diff(M) >= 0)
    rep = json.loads((out / "integrability.json").read_text())
    assert rep["exponent"] == pytest.approx(0.5, abs=0.1) and rep["finite"] and rep["schema_version"] == 1


def test_deterministic_per_seed(tmp_path):
    args = ["--config", str(CONFIGS / "metric_ball.cfg")]
    assert main(["metric", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["metric", *args, "--out", str(tmp_path / "b")]) == 0
    for f in ("m_function.csv", "integrability.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert main(["metric", *args, "--seed", "9", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "m_function.csv").read_bytes() != (tmp_path / "c" / "m_function.csv").read_bytes()


def test_geodesic_outputs(tmp_path):
    cfg = _cfg(tmp_path, "kind = ball\nn = 2\nh = 0.05\npairs = 2\nseed = 1\n")
    assert main(["geodesic", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "geodesics.json").read_text())
    for r in rep["pairs"]:
        assert r["certified"] and r["distance"] == pytest.approx(r["ball_distance"], rel=0.15)
    assert (tmp_path / "geodesics.svg").exists()


def test_visibility_expectation_gates_exit(tmp_path):
    text = "kind = bidisc\ntrials = 1\nnu_max = 6\nsame_face_prob = 1\nseed = 0\n"
    assert main(["visibility", "--config", str(_cfg(tmp_path, text + "expect = degenerating\n")),
                 "--out", str(tmp_path / "a")]) == 0
    rows = list(csv.DictReader((tmp_path / "a" / "visibility.csv").open()))
    assert rows[0]["verdict"] == "Degenerating"
    assert main(["visibility", "--config", str(_cfg(tmp_path, text + "expect = visible\n")),
                 "--out", str(tmp_path / "b")]) == 1


def test_pseudoarc_literal_pipeline(tmp_path):
    out = tmp_path / "p"
    assert main(["pseudoarc", "--config", str(CONFIGS / "pseudoarc_literal.cfg"), "--out", str(out)]) == 0
    bd = json.loads((out / "box_dimension.json").read_text())
    assert 1 <= bd["dimension"] <= 2
    lit = json.loads((out / "conditions_level4_paper_literal.json").read_text())
    assert lit["passed"]
    dom = domain_from_config(parse_config((out / "punctured.cfg").read_text()), out)
    assert isinstance(dom, Punctured) and isinstance(dom.obstacle, RasterObstacle)
    assert dom.n == 3 and dom.obstacle.lipschitz == pytest.approx(0.3)


def test_pseudoarc_strict_reports_failing_level(tmp_path):
    assert main(["pseudoarc", "--config", str(CONFIGS / "pseudoarc_strict.cfg"), "--out", str(tmp_path)]) == 1
    err = json.loads((tmp_path / "pseudoarc_failure.json").read_text())["error"]
    assert err.startswith("level 3")


def test_usage_errors(tmp_path):
    good = str(CONFIGS / "metric_ball.cfg")
    assert main(["metric", "--config", str(_cfg(tmp_path, "kind = ball\nn = 2\n")), "--out", str(tmp_path)]) == 2
    assert main(["metric", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
    assert main(["metric", "--config", good, "--threads", "0", "--out", str(tmp_path)]) == 2
    assert main(["fly", "--config", good]) == 2
    assert main(["metric", "--config", str(_cfg(tmp_path, "kind = torus\nseed = 0\n")), "--out", str(tmp_path)]) == 2
    assert main(["metric", "--config", str(_cfg(tmp_path, "kind = ball\nn = 2\neps = x\nseed = 0\n")),
                 "--out", str(tmp_path)]) == 2


def test_report_collects_outputs(tmp_path):
    assert main(["metric", "--config", str(CONFIGS / "metric_ball.cfg"), "--out", str(tmp_path)]) == 0
    assert main(["report", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["files"]["integrability.json"]["finite"] is True


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "kobvis", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "metric" in r.stdout
