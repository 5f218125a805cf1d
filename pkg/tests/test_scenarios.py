import json

import numpy as np
import pytest

from brokenray import load_scenario, scenarios
from brokenray.errors import ParseError, SchemaError, ValidationError
from brokenray.scenarios import dump_scenario, scenario_from_dict, scenario_hash, scenario_to_dict

MINIMAL = {"outer": {"shape": "circle", "params": {"radius": 1.0}},
           "obstacle": {"shape": "circle", "params": {"radius": 0.25}}}


def _write(tmp_path, obj, name="sc.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def test_minimal_file_gets_defaults(tmp_path):
    sc = load_scenario(_write(tmp_path, MINIMAL))
    assert sc.step == 1e-3 and sc.event_tol == 1e-10 and sc.a == 0.1


def test_lambda_and_tolerances_keys(tmp_path):
    spec = dict(MINIMAL, **{"lambda": {"profile": "radial_quadratic", "params": {"c": 0.1}},
                            "a": 0.5, "L": 7.0, "tolerances": {"step": 5e-4, "event_tol": 1e-11}})
    sc = load_scenario(_write(tmp_path, spec))
    assert sc.a == 0.5 and sc.L == 7.0 and sc.step == 5e-4 and sc.event_tol == 1e-11
    assert sc.surface.gauss_curvature(np.zeros((1, 2)))[0] == pytest.approx(-0.4)


def test_missing_obstacle_is_disc(tmp_path):
    sc = load_scenario(_write(tmp_path, {"outer": MINIMAL["outer"]}))
    assert sc.obstacle is None


@pytest.mark.parametrize("bad", [{"a": 1.5}, {"a": 0.0}, {"L": 0}, {"L": -1}, {"step": 0}, {"bogus": 1},
                                 {"tolerances": {"nope": 1}}])
def test_schema_errors(tmp_path, bad):
    with pytest.raises(SchemaError):
        load_scenario(_write(tmp_path, dict(MINIMAL, **bad)))


def test_a_error_mentions_range(tmp_path):
    with pytest.raises(SchemaError, match=r"\(0, 1\]"):
        load_scenario(_write(tmp_path, dict(MINIMAL, a=1.5)))


def test_overlapping_curves_rejected(tmp_path):
    spec = dict(MINIMAL, obstacle={"shape": "circle", "params": {"radius": 0.5, "center": [0.8, 0.0]}})
    with pytest.raises(SchemaError):
        load_scenario(_write(tmp_path, spec))


def test_unknown_profile_rejected(tmp_path):
    with pytest.raises(SchemaError):
        load_scenario(_write(tmp_path, dict(MINIMAL, **{"lambda": {"profile": "nope"}})))


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(_write(tmp_path, "{not json"))
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")


def test_errors_are_validation_errors():
    assert issubclass(SchemaError, ValidationError) and issubclass(ParseError, ValidationError)


@pytest.mark.parametrize("name", sorted(scenarios.BUILTIN))
def test_roundtrip(tmp_path, name):
    sc = scenarios.BUILTIN[name]()
    p = tmp_path / "x.json"
    dump_scenario(sc, p)
    back = load_scenario(p)
    assert scenario_hash(back) == scenario_hash(sc)
    assert scenario_to_dict(back) == scenario_to_dict(sc)


def test_builtin_reference():
    sc = scenario_from_dict({"builtin": "flat_annulus", "L": 3.0})
    assert sc.L == 3.0 and sc.obstacle is not None
    with pytest.raises(SchemaError):
        scenario_from_dict({"builtin": "nope"})


def test_hash_changes_with_parameters():
    assert scenario_hash(scenarios.flat_annulus()) != scenario_hash(scenarios.flat_annulus(r_obstacle=0.3))
