import csv
import json
import subprocess
import sys

import pytest

from brokenray.cli import fmt, main, parse_fan, parse_named


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def read_json(p):
    return json.loads(p.read_text())


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt(v)) == v
    assert fmt(-0.0) == "0"


def test_parse_helpers():
    assert parse_named('gaussian{"amp": 2}') == ("gaussian", {"amp": 2})
    assert parse_named("zero") == ("zero", {})
    assert parse_fan("80x50") == (80, 50)


def test_validate_flat(tmp_path):
    code, out = run(["validate", "--scenario", "flat_annulus", "--rays", "64"], tmp_path)
    assert code == 0
    rep = read_json(out / "validate.json")
    assert rep["K_max"] == 0 and rep["kappa_E_min"] == 1
    man = read_json(out / "manifest.json")
    assert man["outputs"] == ["validate.json"] and len(man["scenario_hash"]) == 64


def test_validate_strict_fails_on_tube(tmp_path):
    code, _ = run(["validate", "--scenario", "c_ring_tube", "--rays", "16", "--strict"], tmp_path)
    assert code == 2


def test_geom(tmp_path):
    code, out = run(["geom", "--scenario", "neg_curved_annulus", "--grid", "16", "--boundary", "32"], tmp_path)
    assert code == 0 and (out / "geom.json").exists()


def test_trace_outputs(tmp_path):
    code, out = run(["trace", "--scenario", "flat_annulus", "--x0", "1", "0", "--theta0", "3.141592653589793"], tmp_path)
    assert code == 0
    rows = list(csv.DictReader((out / "scattering.csv").open()))
    assert float(rows[0]["tau"]) == pytest.approx(1.5, abs=1e-9)
    path = list(csv.DictReader((out / "paths.csv").open()))
    assert set(path[0]) == {"ray_id", "t", "x1", "x2", "theta", "segment_id"}
    refl = list(csv.DictReader((out / "reflections.csv").open()))
    assert len(refl) == 1 and float(refl[0]["x1"]) == pytest.approx(0.25, abs=1e-9)


def test_jacobi_outputs(tmp_path):
    code, out = run(["jacobi", "--scenario", "flat_annulus", "--x0", "1", "0", "--theta0", "3.141592653589793",
                     "--J0", "0", "1", "--DJ0", "0", "0"], tmp_path)
    assert code == 0
    jump = list(csv.DictReader((out / "jumps.csv").open()))
    assert float(jump[0]["DJ2_plus"]) == pytest.approx(8.0, abs=1e-6)


def test_brt_head_on(tmp_path):
    code, out = run(["brt", "--scenario", "flat_annulus", "--field", 'constant{"c": 1}', "--fan", "4x3"], tmp_path)
    assert code == 0
    rows = list(csv.DictReader((out / "brt.csv").open()))
    assert list(rows[0]) == ["ray_id", "entry_s", "entry_angle", "tau", "n_reflections", "u_value", "flags"]
    assert all(float(r["u_value"]) == pytest.approx(float(r["tau"])) for r in rows)


def test_pestov_zero(tmp_path):
    code, out = run(["pestov", "--scenario", "flat_annulus", "--u", "zero", "--grid", "16", "--ntheta", "8"], tmp_path)
    assert code == 0
    rep = read_json(out / "pestov.json")
    assert rep["residual"] == 0 and "grid_orders" in rep


def test_invert_annulus(tmp_path):
    code, out = run(["invert", "--scenario", "flat_annulus", "--basis", "8", "--fan", "20x12",
                     "--ground-truth", 'gaussian{"amp": 1, "center": [0.4, 0.3], "width": 0.3}'], tmp_path)
    assert code == 0
    assert (out / "spectrum.csv").exists() and (out / "reconstruction.csv").exists()


def test_lens(tmp_path):
    code, out = run(["lens", "--scenario", "flat_annulus", "--h", 'gaussian{"amp": 1, "center": [0.5, 0.3], "width": 0.3}',
                     "--x0", "1", "0", "--theta0", "2.94", "--stencil", "3"], tmp_path)
    assert code == 0
    rep = read_json(out / "lens.json")
    assert {"lhs", "rhs_tau", "rhs_endpoint", "residual"} <= set(rep)


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"outer": {"shape": "circle", "params": {"radius": 1}}, "a": 1.5}))
    assert main(["validate", "--scenario", str(bad)]) == 2
    assert main(["validate", "--scenario", str(tmp_path / "nope.json")]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # the disc billiard never reaches E, so the transform has no exiting ray
    code, _ = run(["lens", "--scenario", "disc_billiard", "--h", "constant", "--x0", "0.2", "0.1", "--theta0", "0.7"],
                  tmp_path)
    assert code == 3


def test_determinism(tmp_path):
    args = ["trace", "--scenario", "neg_curved_annulus", "--random-rays", "20", "--seed", "7"]
    _, a = run(args, tmp_path, "a")
    _, b = run(args, tmp_path, "b")
    for f in sorted(p.name for p in a.iterdir()):
        if f == "manifest.json":
            ma, mb = read_json(a / f), read_json(b / f)
            ma.pop("wall_clock"), mb.pop("wall_clock")
            assert ma == mb
        else:
            assert (a / f).read_bytes() == (b / f).read_bytes()


def test_console_script_and_env(tmp_path):
    res = subprocess.run([sys.executable, "-m", "brokenray.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "brl" in res.stdout
