import json
import subprocess
import sys

import pytest

from spraylab.catalog import NAMES
from spraylab.cli import main


def run(tmp_path, *args, config=None, name="out"):
    out = tmp_path / name
    argv = list(args) + ["--out", str(out)]
    if config is not None:
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(config))
        argv += ["--config", str(cfg)]
    return main(argv), out


def test_catalog_list(capsys):
    assert main(["catalog", "list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in lines] == list(NAMES)


def test_check_condition_pass(tmp_path, capsys):
    code, out = run(tmp_path, "check-condition", "--entry", "circular_arcs(0.5, 2)")
    assert code == 0
    text = capsys.readouterr().out
    assert "minimum: 0.25" in text and "verdict: nonnegative" in text
    assert (out / "condition.csv").exists() and (out / "condition.svg").exists()
    assert (out / "report.txt").read_text() == text


def test_check_condition_fail(tmp_path):
    code, _ = run(tmp_path, "check-condition", "--entry", "kappa_3x")
    assert code == 1


def test_cd0n_condition(tmp_path, capsys):
    code, _ = run(tmp_path, "check-condition", config={"entry": "horocycles", "condition": "cd0n", "N": 3})
    assert code in (0, 1)
    assert "verdict" in capsys.readouterr().out


def test_expression_scene(tmp_path):
    cfg = {"chart": "euclidean", "spray": {"kappa": "1 + 0*x"}, "region": {"disc": [0, 0, 0.5]}, "grid": {"n": 21}}
    code, _ = run(tmp_path, "check-condition", config=cfg)
    assert code == 0


def test_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "geodesic", "--entry", "nope")[0] == 2
    cfg = {"chart": "euclidean", "spray": {"kappa": "x +* 1"}, "region": {"disc": [0, 0, 1]}}
    assert run(tmp_path, "check-condition", config=cfg, name="bad")[0] == 2
    assert run(tmp_path, "verify-bm", "--entry", "flat_lines", name="noA")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["geodesic", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "error:" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    cfg = {"entry": "horocycles", "region": {"disc": [0, 1, 0.3]}, "grid": {"n": 17}}
    run(tmp_path, "check-condition", config=cfg, name="a")
    run(tmp_path, "check-condition", config=cfg, name="b")
    assert (tmp_path / "a" / "condition.csv").read_bytes() == (tmp_path / "b" / "condition.csv").read_bytes()


def test_geodesic(tmp_path, capsys):
    code, out = run(tmp_path, "geodesic", config={"entry": "flat_lines", "start": [0, 0], "theta": 0, "T": 0.5})
    assert code == 0
    rows = (out / "geodesic.csv").read_text().splitlines()
    assert rows[0] == "t,x,y,theta"
    assert float(rows[-1].split(",")[1]) == pytest.approx(0.5, abs=1e-9)


def test_jacobi(tmp_path, capsys):
    code, out = run(tmp_path, "jacobi", "--entry", "horocycles")
    assert code == 0
    assert "verdict" in capsys.readouterr().out
    assert (out / "jacobi.csv").exists()


def test_minkowski(tmp_path, capsys):
    cfg = {"entry": "flat_lines", "A": {"disc": [-0.3, 0, 0.1]}, "B": {"disc": [0.3, 0, 0.1]}, "lambda": 0.5,
           "spacing": 0.05}
    code, out = run(tmp_path, "minkowski", config=cfg)
    assert code == 0
    assert "failed shootings: 0" in capsys.readouterr().out
    assert (out / "minkowski.csv").exists() and (out / "minkowski.svg").exists()


def test_verify_bm_polygon(tmp_path, capsys):
    cfg = {"entry": "flat_lines", "A": {"disc": [-0.3, 0, 0.1]}, "B": {"disc": [0.3, 0, 0.2]}, "lambda": 0.5,
           "mode": "polygon"}
    code, out = run(tmp_path, "verify-bm", config=cfg)
    assert code == 0
    assert (out / "bm.csv").exists()


def test_needle1d(tmp_path, capsys):
    cfg = {"density": "1 + x", "A1": [[0, 1]], "B1": [[2, 4]], "lambda": 0.5}
    code, _ = run(tmp_path, "needle1d", config=cfg)
    assert code == 0
    assert "margin" in capsys.readouterr().out
    cfg["density"] = "x + y"
    assert run(tmp_path, "needle1d", config=cfg, name="bad")[0] == 2


def test_metrize(tmp_path, capsys):
    cfg = {"chart": "euclidean", "spray": "geodesic", "U": {"disc": [0, 0, 0.5]},
           "bases": [[-5, 0], [5, 0.5], [0, -5]], "n_squares": 4, "n_perturb": 5, "n_pairs": 3}
    code, out = run(tmp_path, "metrize", config=cfg)
    assert code == 0
    assert "verdict: metrized" in capsys.readouterr().out
    assert (out / "stokes.csv").exists()


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "spraylab.cli", "catalog", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "horocycles" in r.stdout


@pytest.mark.slow
def test_violation_chain(tmp_path):
    code, out = run(tmp_path, "find-violation", "--entry", "hyperbolic_geodesics", name="find")
    assert code == 1
    scene = out / "violation.json"
    assert scene.exists()
    assert main(["verify-bm", "--config", str(scene), "--out", str(tmp_path / "verify")]) == 1
