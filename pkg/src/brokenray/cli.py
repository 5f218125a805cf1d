"""Command line entry point ``brl``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BrokenRayError, NumericalError, ParseError, SchemaError, ValidationError
from .profiles import profile_from_dict

log = logging.getLogger("brokenray")


# ---------------------------------------------------------------------------
# deterministic output


def fmt(x) -> str:
    """17 significant digits; NaN and infinities spelled as in JSON5."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x + 0.0:.17g}"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return str(obj)


def dumps(obj, indent=0) -> str:
    """JSON text with sorted keys and floats at 17 significant digits."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt(obj)
    return json.dumps(obj)


class Output:
    """Collects artifacts in --out and writes the manifest next to them."""

    def __init__(self, out_dir, command, args, scenario=None):
        self.dir = Path(out_dir) if out_dir else None
        self.command = command
        self.args = args
        self.scenario = scenario
        self.files = []
        self.summary = {}
        self.t0 = time.perf_counter()
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name, header, rows):
        if self.dir is None:
            return
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in r))
        (self.dir / name).write_text("\n".join(lines) + "\n")
        self.files.append(name)

    def json(self, name, obj):
        if self.dir is None:
            return
        (self.dir / name).write_text(dumps(obj) + "\n")
        self.files.append(name)

    def finish(self):
        from .scenarios import scenario_hash, scenario_to_dict

        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "out")}
        manifest = {
            "tool": "brl",
            "version": __version__,
            "command": self.command,
            "parameters": params,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "outputs": sorted(self.files),
            "summary": self.summary,
            "wall_clock": time.perf_counter() - self.t0,
        }
        if self.scenario is not None:
            manifest["scenario_hash"] = scenario_hash(self.scenario)
            manifest["scenario"] = scenario_to_dict(self.scenario)
        if self.dir is not None:
            (self.dir / "manifest.json").write_text(dumps(manifest) + "\n")
        print(dumps({"command": self.command, "summary": self.summary}))


# ---------------------------------------------------------------------------
# argument parsing helpers

_SPEC = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(\{.*\})?\s*$", re.S)


def parse_named(text):
    """``NAME`` or ``NAME{json params}`` or a full JSON object -> (name, params)."""
    text = text.strip()
    if text.startswith("{"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON {text!r}: {exc}") from exc
        name = d.get("profile", d.get("name"))
        return name, d.get("params", {})
    m = _SPEC.match(text)
    if not m:
        raise ParseError(f"cannot parse {text!r}; expected NAME or NAME{{json}}")
    params = {}
    if m.group(2):
        try:
            params = json.loads(m.group(2))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad parameter JSON in {text!r}: {exc}") from exc
    return m.group(1), params


def parse_profile(text):
    name, params = parse_named(text)
    return profile_from_dict({"profile": name, "params": params})


def parse_fan(text):
    m = re.match(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$", text)
    if not m:
        raise ParseError(f"fan must look like NSxNA, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _scenario(args):
    from .scenarios import load_scenario

    if not args.scenario:
        raise SchemaError("--scenario is required")
    return load_scenario(args.scenario)


def _fan(args, sc):
    from .raytrace import make_fan, random_fan

    if getattr(args, "random_rays", None):
        return random_fan(sc, args.random_rays, np.random.default_rng(args.seed))
    n_s, n_a = parse_fan(args.fan)
    return make_fan(sc, n_s, n_a)


# ---------------------------------------------------------------------------
# subcommands


def cmd_geom(args):
    from .geometry import signed_curvature
    from .raytrace import sample_interior

    sc = _scenario(args)
    out = Output(args.out, "geom", args, sc)
    pts = sample_interior(sc, args.grid)
    K = sc.surface.gauss_curvature(pts)
    rows = []
    summary = {"K_min": float(K.min()), "K_max": float(K.max())}
    for curve in sc.curves:
        t = np.linspace(0, curve.period, args.boundary, endpoint=False)
        p = curve.point(t)
        k = signed_curvature(sc.surface, curve, p, check=False)
        s = curve.shape.arclength(t)
        summary[f"kappa_{curve.kind}_min"] = float(k.min())
        summary[f"kappa_{curve.kind}_max"] = float(k.max())
        summary[f"length_{curve.kind}"] = float(curve.length)
        rows += [(curve.kind, s[i], p[i, 0], p[i, 1], k[i]) for i in range(len(t))]
    out.csv("boundary_curvature.csv", ["curve", "arclength", "x", "y", "kappa"], rows)
    out.csv("interior_curvature.csv", ["x", "y", "K"], [(p[0], p[1], k) for p, k in zip(pts, K)])
    out.summary = summary
    out.json("geom.json", summary)
    out.finish()


def cmd_validate(args):
    from .raytrace import validate_scenario

    sc = _scenario(args)
    out = Output(args.out, "validate", args, sc)
    rep = validate_scenario(sc, n_rays=args.rays)
    d = rep.to_dict()
    d["condition3"] = rep.condition3
    d["all_conditions"] = rep.all_conditions
    out.summary = d
    out.json("validate.json", d)
    out.finish()
    if args.strict and not rep.all_conditions:
        raise ValidationError("scenario does not meet the sampled hypotheses")


def cmd_trace(args):
    from .raytrace import trace_rays

    sc = _scenario(args)
    out = Output(args.out, "trace", args, sc)
    if args.x0 is not None:
        x = np.array([args.x0])
        th = np.array([args.theta0])
    else:
        fan = _fan(args, sc)
        x, th = fan.x, fan.theta
    res = trace_rays(sc, x, th, record=len(th) <= args.record_max)
    rows = [
        (str(i), x[i, 0], x[i, 1], th[i], res.x_end[i, 0], res.x_end[i, 1], res.theta_end[i], res.tau[i],
         str(res.n_reflections[i]), res.status[i])
        for i in range(len(th))
    ]
    out.csv("scattering.csv", ["ray_id", "x1_in", "x2_in", "theta_in", "x1_out", "x2_out", "theta_out", "tau",
                               "n_reflections", "status"], rows)
    if res.rays is not None:
        path, refl = [], []
        for i, ray in enumerate(res.rays):
            path += [(str(i), ray.t[k], ray.x[k, 0], ray.x[k, 1], ray.theta[k], str(ray.seg[k])) for k in range(len(ray.t))]
            refl += [(str(i), r.t, r.x[0], r.x[1], r.theta_in, r.theta_out, r.incidence, str(int(r.tangential_flag)))
                     for r in ray.reflections]
        out.csv("paths.csv", ["ray_id", "t", "x1", "x2", "theta", "segment_id"], path)
        out.csv("reflections.csv", ["ray_id", "t", "x1", "x2", "theta_in", "theta_out", "incidence", "tangential_flag"], refl)
    ok = res.status == "exit_at_E"
    out.summary = {
        "n_rays": len(th),
        "n_exited": int(ok.sum()),
        "max_reflections": int(res.n_reflections.max()),
        "tau_max": float(res.tau.max()),
    }
    out.json("trace.json", out.summary)
    out.finish()


def cmd_jacobi(args):
    from .jacobi import fd_variation_check, initial_covariant_derivative, propagate_jacobi
    from .raytrace import trace_broken_ray

    sc = _scenario(args)
    out = Output(args.out, "jacobi", args, sc)
    x0 = np.array(args.x0)
    dx = np.array(args.dx)
    ray = trace_broken_ray(sc, x0, theta0=args.theta0)
    J0 = np.array(args.J0) if args.J0 is not None else dx
    if args.DJ0 is not None:
        W0 = np.array(args.DJ0)
    else:
        W0 = initial_covariant_derivative(sc.surface, x0, args.theta0, J0, args.dtheta)
    fr = propagate_jacobi(sc, ray, J0, W0)
    out.csv("jacobi.csv", ["t", "J1", "J2", "DJ1", "DJ2", "seg_id"],
            [(fr.t[i], fr.J[i, 0], fr.J[i, 1], fr.DJ[i, 0], fr.DJ[i, 1], str(fr.seg[i])) for i in range(len(fr.t))])
    out.csv("jumps.csv", ["t", "J1_minus", "J2_minus", "DJ1_minus", "DJ2_minus", "J1_plus", "J2_plus", "DJ1_plus",
                          "DJ2_plus", "incidence"],
            [(t, *Jm, *Wm, *Jp, *Wp, inc) for t, Jm, Wm, Jp, Wp, inc in fr.jumps])
    out.summary = {"n_reflections": ray.reflection_count, "tau": ray.tau}
    if args.DJ0 is None:
        chk = fd_variation_check(sc, x0, args.theta0, J0, args.dtheta, tuple(args.s_values))
        out.summary.update({"fd_errors": chk.errors, "fd_s_values": chk.s_values, "fd_order": chk.order})
    out.json("jacobi.json", out.summary)
    out.finish()


def cmd_brt(args):
    from .transform import fan_transform

    sc = _scenario(args)
    out = Output(args.out, "brt", args, sc)
    f = parse_profile(args.f)
    fan = _fan(args, sc)
    ft = fan_transform(sc, f, fan)
    rows = [(str(i), fan.s[i], fan.angle[i], ft.tau[i], str(ft.n_reflections[i]), ft.values[i], ft.status[i])
            for i in range(len(fan))]
    out.csv("brt.csv", ["ray_id", "entry_s", "entry_angle", "tau", "n_reflections", "u_value", "flags"], rows)
    ok = ~ft.flags
    out.summary = {
        "n_rays": len(fan),
        "n_flagged": int((~ok).sum()),
        "max_abs_value": float(np.max(np.abs(ft.values[ok]))) if ok.any() else float("nan"),
        "mean_value": float(np.mean(ft.values[ok])) if ok.any() else float("nan"),
    }
    out.json("brt.json", out.summary)
    out.finish()


def cmd_pestov(args):
    from .pestov import (
        QuadratureGrid,
        boundary_decomposition,
        bundle_function_from_dict,
        pestov_full_residual,
        pestov_interior_identity,
    )

    sc = _scenario(args)
    out = Output(args.out, "pestov", args, sc)
    name, params = parse_named(args.u)
    u = bundle_function_from_dict({"name": name, "params": params})
    identity = args.identity
    if identity == "auto":
        identity = {"compact": "interior", "reflection_even": "full"}.get(u.support, "interior")
    fn = {"interior": pestov_interior_identity, "boundary": boundary_decomposition, "full": pestov_full_residual}[identity]
    reports = {}
    for n in (args.grid // 2, args.grid):
        grid = QuadratureGrid.build(sc, n=n, n_theta=args.ntheta)
        reports[n] = fn(grid, u)
    coarse, fine = reports[args.grid // 2], reports[args.grid]
    order = (
        math.log2(coarse.residual / fine.residual) if coarse.residual > 0 and fine.residual > 0 else float("nan")
    )
    d = fine.to_dict()
    d["identity"] = identity
    d["u"] = u.to_dict()
    d["grid_orders"] = {"residuals": {str(n): r.residual for n, r in reports.items()}, "observed_order": order}
    out.summary = {"identity": identity, "residual": fine.residual, "observed_order": order}
    out.json("pestov.json", d)
    out.finish()


def cmd_invert(args):
    from .inversion import (
        PixelBasis,
        assemble_forward_matrix,
        null_check,
        reconstruct,
        singular_spectrum,
        tube_concentration,
        tube_null_function,
    )

    sc = _scenario(args)
    out = Output(args.out, "invert", args, sc)
    basis = PixelBasis(sc, args.basis)
    fan = _fan(args, sc)
    op = assemble_forward_matrix(sc, basis, fan)
    sp = singular_spectrum(op.A, vectors=True)
    out.csv("spectrum.csv", ["index", "sigma"], [(str(i), s) for i, s in enumerate(sp.sigma)])
    summary = {
        "n_active": basis.n_active,
        "n_rows": int(op.A.shape[0]),
        "n_flagged": int(len(op.flagged)),
        "sigma_max": sp.sigma_max,
        "sigma_min": sp.sigma_min,
        "sigma_ratio": sp.ratio,
        "effective_rank": sp.effective_rank,
        "partition_of_unity_error": op.partition_of_unity_error(),
    }
    if args.ground_truth:
        g = parse_profile(args.ground_truth)
        truth = basis.discretize(g)
        data = op.A @ truth
        if args.noise > 0:
            rng = np.random.default_rng(args.seed)
            data = data + args.noise * np.linalg.norm(data) / np.sqrt(len(data)) * rng.standard_normal(len(data))
        rec = reconstruct(op.A, data, mu=args.mu, truth=truth)
        out.csv("reconstruction.csv", ["cx", "cy", "value", "truth"],
                [(c[0], c[1], v, t) for c, v, t in zip(basis.centers, rec.x, truth)])
        summary.update({"relative_error": rec.relative_error, "data_residual": rec.residual, "mu": rec.mu})
    if sc.meta.get("tube"):
        v = sp.right_vectors[-1]
        out.csv("null_vector.csv", ["cx", "cy", "value"], [(c[0], c[1], x) for c, x in zip(basis.centers, v)])
        summary["null_vector_tube_fraction"] = tube_concentration(basis, v, sc.meta["tube"])
        nc = null_check(sc, tube_null_function(sc), fan)
        summary.update({"tube_null_max_transform": nc.max_transform, "tube_null_l2": nc.l2_norm, "tube_null_ratio": nc.ratio})
    out.summary = summary
    out.json("invert.json", summary)
    out.finish()


def cmd_lens(args):
    from .lens import family_for, linearization_residual

    sc = _scenario(args)
    out = Output(args.out, "lens", args, sc)
    h = parse_profile(args.h)
    rep = linearization_residual(sc, family_for(sc, h), np.array(args.x0), args.theta0, args.sfd, args.stencil)
    d = rep.to_dict()
    d["rhs"] = rep.rhs_tau - rep.rhs_endpoint + rep.rhs_entry
    out.summary = {"residual": rep.residual, "lhs": rep.lhs, "rhs_tau": rep.rhs_tau, "rhs_endpoint": rep.rhs_endpoint}
    out.json("lens.json", d)
    out.finish()


# ---------------------------------------------------------------------------


def build_parser():
    def global_flags(suppress):
        # subcommands repeat the global flags without overriding values given before the subcommand
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--scenario", help="scenario JSON file or builtin name", **(kw or {"default": None}))
        g.add_argument("--out", help="output directory", **(kw or {"default": None}))
        g.add_argument("--threads", type=int, help="recorded in the manifest; computations are single threaded",
                       **(kw or {"default": os.cpu_count() or 1}))
        g.add_argument("--seed", type=int, **(kw or {"default": 0}))
        return g

    common = global_flags(False)
    sub_common = global_flags(True)

    p = argparse.ArgumentParser(prog="brl", description="Broken ray transform numerics", parents=[common])
    p.add_argument("--version", action="version", version=f"brl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        q = sub.add_parser(name, parents=[sub_common], help=help_)
        q.set_defaults(func=func)
        return q

    q = add("geom", cmd_geom, "curvature summary of a scenario")
    q.add_argument("--grid", type=int, default=64)
    q.add_argument("--boundary", type=int, default=256)

    q = add("validate", cmd_validate, "sampled check of the injectivity hypotheses")
    q.add_argument("--rays", type=int, default=400)
    q.add_argument("--strict", action="store_true", default=False)

    def fan_args(q, default="32x32"):
        q.add_argument("--fan", default=default, help="NSxNA boundary fan")
        q.add_argument("--random-rays", type=int, default=None, help="random fan of N rays (uses --seed)")

    q = add("trace", cmd_trace, "trace broken rays")
    q.add_argument("--x0", type=float, nargs=2, default=None)
    q.add_argument("--theta0", type=float, default=0.0)
    q.add_argument("--record-max", type=int, default=64, help="write paths for fans up to this many rays")
    fan_args(q)

    q = add("jacobi", cmd_jacobi, "Jacobi field along a broken ray with a finite-difference check")
    q.add_argument("--x0", type=float, nargs=2, required=True)
    q.add_argument("--theta0", type=float, required=True)
    q.add_argument("--dx", type=float, nargs=2, default=[0.0, 0.0], help="variation of the start point")
    q.add_argument("--dtheta", type=float, default=1.0, help="variation of the start angle")
    q.add_argument("--J0", type=float, nargs=2, default=None, help="initial J (overrides --dx)")
    q.add_argument("--DJ0", type=float, nargs=2, default=None, help="initial D_tJ (skips the variation check)")
    q.add_argument("--s-values", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])

    q = add("brt", cmd_brt, "broken ray transform over a boundary fan")
    q.add_argument("--field", "--f", dest="f", required=True, help="profile NAME{json params}")
    fan_args(q)

    q = add("pestov", cmd_pestov, "energy identity residuals by quadrature")
    q.add_argument("--u", required=True, help="bundle function NAME{json params}")
    q.add_argument("--grid", type=int, default=128)
    q.add_argument("--ntheta", type=int, default=64)
    q.add_argument("--identity", choices=["auto", "interior", "boundary", "full"], default="auto")

    q = add("invert", cmd_invert, "forward matrix, spectrum and reconstruction")
    q.add_argument("--basis", type=int, default=24)
    fan_args(q, "80x50")
    q.add_argument("--mu", type=float, default=None)
    q.add_argument("--ground-truth", default=None, help="profile NAME{json params}")
    q.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise level (uses --seed)")

    q = add("lens", cmd_lens, "lens data linearization residual")
    q.add_argument("--h", required=True, help="profile NAME{json params}")
    q.add_argument("--x0", type=float, nargs=2, required=True)
    q.add_argument("--theta0", type=float, required=True)
    q.add_argument("--sfd", type=float, default=1e-3)
    q.add_argument("--stencil", type=int, choices=[3, 5], default=5)
    return p


def main(argv=None):
    level = os.environ.get("BRL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except BrokenRayError as exc:  # pragma: no cover - every error is one of the two above
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
