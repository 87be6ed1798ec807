import csv
import io
import json
import subprocess
import sys

import pytest

from eqcrisis import quasilinear_pair, symmetric_cobb_douglas
from eqcrisis.cli import run


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, obj in {
        "quasilinear_pair": quasilinear_pair().to_dict(),
        "cobb": symmetric_cobb_douglas().to_dict(),
        "ballistic": {"kind": "ballistic", "g": 9.8, "v": 10.0,
                      "box": [[0.5, 9.0], [-5.0, 10.0], [0.05, 1.5]]},
        "fold": {"kind": "fold", "omega": 1.0},
        "lift": {"start": quasilinear_pair().to_dict(),
                 "end": quasilinear_pair(omega2_first=0.70).to_dict(),
                 "p_start": [1.0], "samples": 100},
    }.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(obj))
        paths[name] = str(p)
    return paths


def body(path):
    return "".join(l for l in open(path) if not l.startswith("#"))


def rows(path):
    return list(csv.DictReader(io.StringIO(body(path))))


def test_fiber_cobb_douglas(files, tmp_path):
    assert run(["--command", "fiber", "--input", files["cobb"], "--out", str(tmp_path)]) == 0
    text = open(tmp_path / "fiber.csv").read()
    assert text.startswith("# eqcrisis ")
    assert "seed=42" in text
    r = rows(tmp_path / "fiber.csv")
    assert len(r) == 1 and float(r[0]["p_1"]) == pytest.approx(1.0, abs=1e-10)
    assert r[0]["kernel_dim"] == "0"


def test_analyze_quasilinear_pair(files, tmp_path):
    code = run(["--command", "analyze", "--input", files["quasilinear_pair"], "--out", str(tmp_path),
                "--coordinate", "2"])
    assert code == 0
    out = json.load(open(tmp_path / "certificates.json"))
    assert "_header" in out
    assert len(out["equilibria"]) == 3
    assert all(c["verdict"] == "Regular" for c in out["equilibria"])
    crises = [c for c in out["critical"] if c["verdict"] == "UnavoidableCrisis"]
    assert any(abs(c["p"][0] - 0.54) < 0.01 for c in crises)


def test_envelope_command(files, tmp_path):
    assert run(["--command", "envelope", "--input", files["ballistic"], "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "discriminant.csv")
    cert = [q for q in r if q["certified"] in ("1", "True", "true")]
    assert cert
    for q in cert:
        x, y = float(q["x"]), float(q["y"])
        assert abs(y - (100 / 19.6 - 9.8 * x**2 / 200)) < 1e-3


def test_degree_command(files, tmp_path):
    assert run(["--command", "degree", "--input", files["quasilinear_pair"], "--out", str(tmp_path)]) == 0
    out = json.load(open(tmp_path / "degree.json"))
    assert out["value"] == 1 and out["natural_projection"] == 1


def test_lift_command(files, tmp_path):
    assert run(["--command", "lift", "--input", files["lift"], "--out", str(tmp_path)]) == 0
    text = open(tmp_path / "lift.csv").read()
    hit = float(text.split("crisis_hit=")[1].split()[0])
    assert hit == pytest.approx((0.766 - 0.7600734490) / 0.066, abs=1e-8)
    r = rows(tmp_path / "lift.csv")
    assert r[-1]["flag"] == "crisis"


def test_sweep_small(files, tmp_path):
    code = run(["--command", "sweep", "--input", files["quasilinear_pair"], "--out", str(tmp_path),
                "--box", "0.75,0.78", "--grid", "3"])
    assert code == 0
    r = rows(tmp_path / "sweep.csv")
    assert len(r) == 9
    cell = [q for q in r if float(q["omega_a_lo"]) <= 0.766 <= float(q["omega_a_hi"])
            and float(q["omega_b_lo"]) <= 0.766 <= float(q["omega_b_hi"])]
    assert len(cell) == 1 and cell[0]["crisis"] == "1"


def test_input_errors(files, tmp_path):
    assert run(["--command", "fiber", "--input", str(tmp_path / "missing.json"),
                "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["--command", "fiber", "--input", str(bad), "--out", str(tmp_path)]) == 1
    assert run(["--command", "envelope", "--input", files["quasilinear_pair"], "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(files, tmp_path):
    # p^2 - 1 vanishes on the boundary of [-1, 1]
    code = run(["--command", "degree", "--input", files["fold"], "--out", str(tmp_path),
                "--box=-1,1"])
    assert code == 2
    err = json.load(open(tmp_path / "error.json"))
    assert err["error"] == "BoundaryZero"


def test_deterministic_output(files, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        for cmd, key in (("fiber", "quasilinear_pair"), ("envelope", "ballistic"), ("lift", "lift")):
            assert run(["--command", cmd, "--input", files[key], "--out", str(out)]) == 0
    for name in ("fiber.csv", "discriminant.csv", "lift.csv"):
        assert open(a / name, "rb").read() == open(b / name, "rb").read()


def test_module_entry_point(files, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eqcrisis", "--command", "fiber",
                           "--input", files["cobb"], "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "fiber.csv").exists()
