"""Named scenarios and their JSON form."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError
from .geometry import BoundaryCurve, ConformalSurface
from .profiles import Constant, RadialQuadratic, profile_from_dict
from .raytrace import Scenario
from .shapes import Circle, Complement, Ellipse, RoundedPolygon, ShapeUnion, rounded_rectangle, shape_from_dict

DEFAULTS = {
    "a": 0.1,
    "L": 20.0,
    "step": 1e-3,
    "event_tol": 1e-10,
    "max_reflections": 10000,
    "tangential_abort_tol": 1e-4,
    "enclosing_radius": None,
}

TUBE_HALF_WIDTH = 1.0 / 12.0
CORNER = 0.02


def _make(name, lam, outer, obstacle, meta=None, **kw):
    params = dict(DEFAULTS)
    params.update(kw)
    return Scenario(
        ConformalSurface(lam),
        BoundaryCurve("outer", outer),
        BoundaryCurve("obstacle", obstacle) if obstacle is not None else None,
        name=name,
        meta=meta or {},
        **params,
    )


def flat_annulus(r_obstacle=0.25, **kw) -> Scenario:
    return _make("flat_annulus", Constant(0.0), Circle(1.0), Circle(r_obstacle), **kw)


def neg_curved_annulus(c=0.1, r_obstacle=0.25, **kw) -> Scenario:
    """lam = c |x|^2, so K = -4 c exp(-2 lam) < 0."""
    return _make("neg_curved_annulus", RadialQuadratic(c), Circle(1.0), Circle(r_obstacle), **kw)


def ellipse_obstacle(**kw) -> Scenario:
    return _make("ellipse_obstacle", Constant(0.0), Circle(1.0), Ellipse(0.3, 0.15, (0.1, -0.05)), **kw)


def curved_ellipse_domain(**kw) -> Scenario:
    return _make("curved_ellipse_domain", RadialQuadratic(0.05), Ellipse(1.2, 0.9), Circle(0.2, (-0.1, 0.1)), **kw)


def flat_disc(**kw) -> Scenario:
    return _make("flat_disc", Constant(0.0), Circle(1.0), None, **kw)


def disc_billiard(**kw) -> Scenario:
    """Flat unit disc as the reflecting boundary, seen from an enclosing circle of radius 2.

    Every ray stays inside the disc and reflects forever; it serves as the
    Gauss-Bonnet control case.
    """
    kw.setdefault("L", 10.0)
    return _make("disc_billiard", Constant(0.0), Circle(2.0), Complement(Circle(1.0)), **kw)


def c_ring_vertices(w=TUBE_HALF_WIDTH):
    return [
        (0.65, w), (0.65, 0.65), (-0.65, 0.65), (-0.65, -0.65), (0.65, -0.65), (0.65, -w),
        (0.25, -w), (0.25, -0.25), (-0.25, -0.25), (-0.25, 0.25), (0.25, 0.25), (0.25, w),
    ]


def c_ring_tube(**kw) -> Scenario:
    """Square ring obstacle with a straight slot: the slot is a tube joining the hollow to the outside."""
    kw.setdefault("L", 40.0)
    w = TUBE_HALF_WIDTH
    meta = {"tube": {"start": [0.25, 0.0], "end": [0.65, 0.0], "half_width": w, "inset": 3 * CORNER}}
    return _make("c_ring_tube", Constant(0.0), Circle(1.0), RoundedPolygon(c_ring_vertices(w), CORNER), meta, **kw)


def two_walls_tube(**kw) -> Scenario:
    """Two rectangular walls with a straight channel between them."""
    kw.setdefault("L", 40.0)
    w = TUBE_HALF_WIDTH
    walls = ShapeUnion(
        [rounded_rectangle(-0.6, w, 0.6, 0.4, CORNER), rounded_rectangle(-0.6, -0.4, 0.6, -w, CORNER)]
    )
    meta = {"tube": {"start": [-0.6, 0.0], "end": [0.6, 0.0], "half_width": w, "inset": 3 * CORNER}}
    return _make("two_walls_tube", Constant(0.0), Circle(1.0), walls, meta, **kw)


BUILTIN = {
    "flat_annulus": flat_annulus,
    "neg_curved_annulus": neg_curved_annulus,
    "ellipse_obstacle": ellipse_obstacle,
    "curved_ellipse_domain": curved_ellipse_domain,
    "flat_disc": flat_disc,
    "disc_billiard": disc_billiard,
    "c_ring_tube": c_ring_tube,
    "two_walls_tube": two_walls_tube,
}


# ---------------------------------------------------------------------------
# JSON


def scenario_to_dict(sc: Scenario) -> dict:
    out = {
        "name": sc.name,
        "lambda": sc.surface.lam.to_dict(),
        "outer": sc.outer.shape.to_dict(),
        "obstacle": sc.obstacle.shape.to_dict() if sc.obstacle is not None else None,
    }
    for k in DEFAULTS:
        out[k] = getattr(sc, k)
    if sc.meta.get("tube"):
        out["tube"] = sc.meta["tube"]
    return out


def scenario_hash(sc: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_nesting(outer: BoundaryCurve, obstacle: BoundaryCurve, n=2048):
    te = np.linspace(0, outer.period, n, endpoint=False)
    tr = np.linspace(0, obstacle.period, n, endpoint=False)
    if np.any(outer.event(obstacle.point(tr)) >= 0):
        raise SchemaError("obstacle R must lie strictly inside the outer curve E")
    # an enclosing obstacle (complement of a disc) contains E by design
    if not isinstance(obstacle.shape, Complement) and np.any(obstacle.event(outer.point(te)) >= 0):
        raise SchemaError("outer curve E meets the obstacle R")


def scenario_from_dict(spec: dict) -> Scenario:
    if not isinstance(spec, dict):
        raise SchemaError("scenario must be a JSON object")
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN:
            raise SchemaError(f"unknown builtin scenario {name!r}; known: {sorted(BUILTIN)}")
        over = {k: spec[k] for k in DEFAULTS if k in spec}
        sc = BUILTIN[name]()
        return scenario_from_dict(dict(scenario_to_dict(sc), **over))
    known = set(DEFAULTS) | {"name", "lambda", "metric", "outer", "obstacle", "tube", "tolerances"}
    unknown = set(spec) - known
    if unknown:
        raise SchemaError(f"unknown scenario keys: {sorted(unknown)}")
    if "outer" not in spec:
        raise SchemaError("scenario needs an 'outer' curve")
    flat = dict(spec)
    tol = spec.get("tolerances") or {}
    if not isinstance(tol, dict):
        raise SchemaError("'tolerances' must be an object")
    bad = set(tol) - set(DEFAULTS)
    if bad:
        raise SchemaError(f"unknown tolerance keys: {sorted(bad)}")
    flat.update(tol)
    params = dict(DEFAULTS)
    for k in DEFAULTS:
        if k in flat and flat[k] is not None:
            params[k] = flat[k]
    try:
        a = float(params["a"])
        L = float(params["L"])
        params["step"] = float(params["step"])
        params["event_tol"] = float(params["event_tol"])
        params["max_reflections"] = int(params["max_reflections"])
        params["tangential_abort_tol"] = float(params["tangential_abort_tol"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"numeric scenario field expected: {exc}") from exc
    if not (0.0 < a <= 1.0):
        raise SchemaError(f"a = {a} violates the hypothesis a in (0, 1] on the curvature of the outer boundary")
    if not L > 0:
        raise SchemaError(f"L = {L} must be positive")
    if not params["step"] > 0:
        raise SchemaError("step must be positive")
    params["a"], params["L"] = a, L
    lam_spec = spec.get("lambda", spec.get("metric"))
    lam = profile_from_dict(lam_spec) if lam_spec else Constant(0.0)
    outer = BoundaryCurve("outer", shape_from_dict(spec["outer"]))
    obstacle = BoundaryCurve("obstacle", shape_from_dict(spec["obstacle"])) if spec.get("obstacle") else None
    if obstacle is not None:
        _check_nesting(outer, obstacle)
    meta = {"tube": spec["tube"]} if spec.get("tube") else {}
    return Scenario(ConformalSurface(lam), outer, obstacle, name=spec.get("name", "scenario"), meta=meta, **params)


def load_scenario(path) -> Scenario:
    """Scenario from a JSON file, or a builtin name when ``path`` is not an existing file."""
    p = Path(path)
    if not p.exists():
        if str(path) in BUILTIN:
            return BUILTIN[str(path)]()
        raise ParseError(f"scenario file {path} does not exist")
    try:
        spec = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(spec)


def dump_scenario(sc: Scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True))
