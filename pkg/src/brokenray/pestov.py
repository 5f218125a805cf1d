"""Energy identities on the unit circle bundle, checked by quadrature.

Functions on SM are finite Fourier sums in the fiber angle,
u(x, theta) = sum_m c_m(x) trig_m(k_m theta), with closed-form coefficient
profiles, so every frame derivative is exact and only the quadrature over
(x, theta) introduces error.

In isothermal coordinates, with b = d2 lam cos - d1 lam sin and
b_theta = -d2 lam sin - d1 lam cos:

    X u      = e^{-lam} (cos u_1 + sin u_2 + b u_theta)
    V u      = u_theta
    X_perp u = [X, V] u = e^{-lam} (sin u_1 - cos u_2 - b_theta u_theta)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .geometry import BoundaryCurve, ConformalSurface, signed_curvature
from .profiles import AngularHarmonic, Constant, PolyBump, Profile, RadialQuadratic, profile_from_dict
from .raytrace import Scenario, rk4_step


# ---------------------------------------------------------------------------
# functions on SM


def _trig(kind, k, theta):
    """(T, T', T'') of cos(k theta) or sin(k theta)."""
    if kind == "cos":
        c, s = np.cos(k * theta), np.sin(k * theta)
        return c, -k * s, -k * k * c
    c, s = np.cos(k * theta), np.sin(k * theta)
    return s, k * c, -k * k * s


class BundleFunction:
    """u(x, theta) = sum of coef(x) * cos(k theta) or coef(x) * sin(k theta)."""

    def __init__(self, terms, name="fourier", support="general"):
        self.terms = []
        for k, kind, coef in terms:
            if kind not in ("cos", "sin"):
                raise SchemaError("term kind must be 'cos' or 'sin'")
            self.terms.append((int(k), kind, coef))
        self.name = name
        self.support = support

    def __add__(self, other):
        return BundleFunction(self.terms + other.terms, f"{self.name}+{other.name}", "general")

    def scaled(self, a):
        return BundleFunction([(k, kind, coef * a) for k, kind, coef in self.terms], self.name, self.support)

    def derivs(self, x, theta):
        """Dict of u, u_1, u_2, u_t, u_1t, u_2t, u_tt, u_1tt, u_2tt, u_ttt.

        ``x`` is (n, 2); ``theta`` is (n_theta,) shared by all points or
        (n, n_theta) per point.  Outputs are (n, n_theta).
        """
        x = np.asarray(x, float)
        theta = np.asarray(theta, float)
        n = len(x)
        nt = theta.shape[-1]
        keys = ("u", "u1", "u2", "ut", "u1t", "u2t", "utt", "u1tt", "u2tt", "uttt")
        out = {key: np.zeros((n, nt)) for key in keys}
        for k, kind, coef in self.terms:
            c = coef.value(x)[:, None]
            g = coef.grad(x)
            g1, g2 = g[:, 0:1], g[:, 1:2]
            T, Tp, Tpp = _trig(kind, k, theta)
            if T.ndim == 1:
                T, Tp, Tpp = T[None, :], Tp[None, :], Tpp[None, :]
            out["u"] += c * T
            out["u1"] += g1 * T
            out["u2"] += g2 * T
            out["ut"] += c * Tp
            out["u1t"] += g1 * Tp
            out["u2t"] += g2 * Tp
            out["utt"] += c * Tpp
            out["u1tt"] += g1 * Tpp
            out["u2tt"] += g2 * Tpp
            # third theta derivative: -k^2 times the first
            out["uttt"] += c * (-k * k) * Tp
        return out

    def value(self, x, theta):
        return self.derivs(x, theta)["u"]

    def to_dict(self):
        return {
            "name": self.name,
            "terms": [{"k": k, "kind": kind, "coef": coef.to_dict()} for k, kind, coef in self.terms],
        }


def frame_terms(surface: ConformalSurface, x, theta, d):
    """Xu, X_perp u, Vu, VXu, XVu from the derivative dict ``d``."""
    x = np.asarray(x, float)
    theta = np.asarray(theta, float)
    if theta.ndim == 1:
        theta = np.broadcast_to(theta[None, :], d["u"].shape)
    e = np.exp(-surface.lam_value(x))[:, None]
    g = surface.grad_lambda(x)
    g1, g2 = g[:, 0:1], g[:, 1:2]
    c, s = np.cos(theta), np.sin(theta)
    b = g2 * c - g1 * s
    bt = -g2 * s - g1 * c
    Xu = e * (c * d["u1"] + s * d["u2"] + b * d["ut"])
    VXu = e * (-s * d["u1"] + c * d["u2"] + c * d["u1t"] + s * d["u2t"] + bt * d["ut"] + b * d["utt"])
    XVu = e * (c * d["u1t"] + s * d["u2t"] + b * d["utt"])
    Xperp = XVu - VXu
    VVXu = e * (
        -c * d["u1"] - s * d["u2"] - 2 * s * d["u1t"] + 2 * c * d["u2t"]
        + c * d["u1tt"] + s * d["u2tt"] - b * d["ut"] + 2 * bt * d["utt"] + b * d["uttt"]
    )
    return {"X": Xu, "Xperp": Xperp, "V": d["ut"], "VX": VXu, "XV": XVu, "VVX": VVXu}


def horizontal_gradient(surface: ConformalSurface, u: BundleFunction, x, theta):
    """Horizontal gradient du = grad u - (Xu) v at points ``x`` (n, 2), angles ``theta`` (n,).

    grad u has components exp(-2 lam) delta_j u with delta_1 = d_1 + d2 lam d_theta,
    delta_2 = d_2 - d1 lam d_theta.
    """
    x = np.atleast_2d(np.asarray(x, float))
    theta = np.atleast_1d(np.asarray(theta, float))
    d = u.derivs(x, theta.reshape(-1, 1))
    g = surface.grad_lambda(x)
    ut = d["ut"][:, 0]
    delta = np.stack([d["u1"][:, 0] + g[:, 1] * ut, d["u2"][:, 0] - g[:, 0] * ut], axis=-1)
    grad = np.exp(-2 * surface.lam_value(x))[:, None] * delta
    Xu = frame_apply(surface, u, x, theta)[0]
    return grad - Xu[:, None] * surface.unit_vector(x, theta)


def frame_apply(surface: ConformalSurface, u: BundleFunction, x, theta):
    """(Xu, X_perp u, Vu) at points ``x`` (n, 2) and angles ``theta`` (n,)."""
    x = np.atleast_2d(np.asarray(x, float))
    theta = np.atleast_1d(np.asarray(theta, float))
    th = theta.reshape(-1, 1)
    d = u.derivs(x, th)
    f = frame_terms(surface, x, th, d)
    return f["X"][:, 0], f["Xperp"][:, 0], f["V"][:, 0]


def commutator_check(surface: ConformalSurface, u: BundleFunction, x, theta, h=1e-4):
    """Max |[X, V]u - X_perp u| with [X, V] by finite differences.

    V is a central difference in theta; X is a central difference along the
    geodesic flow (RK4 steps of +-h).
    """
    x = np.atleast_2d(np.asarray(x, float))
    theta = np.atleast_1d(np.asarray(theta, float))

    def Vu_fd(xx, tt):
        return (u.value(xx, (tt + h)[:, None]) - u.value(xx, (tt - h)[:, None]))[:, 0] / (2 * h)

    def Xw_fd(w, xx, tt):
        xp, tp = rk4_step(surface, xx, tt, h)
        xm, tm = rk4_step(surface, xx, tt, -h)
        return (w(xp, tp) - w(xm, tm)) / (2 * h)

    def Xu(xx, tt):
        return frame_apply(surface, u, xx, tt)[0]

    XV = Xw_fd(Vu_fd, x, theta)
    VX = (Xu(x, theta + h) - Xu(x, theta - h)) / (2 * h)
    _, Xperp, _ = frame_apply(surface, u, x, theta)
    return float(np.max(np.abs((XV - VX) - Xperp)))


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class BoundaryGrid:
    curve: BoundaryCurve
    x: np.ndarray
    weights: np.ndarray  # g-arclength weights


@dataclass
class QuadratureGrid:
    """Masked midpoint grid over M times a uniform fiber grid, plus boundary grids.

    Cells well inside M keep their center with weight h^2.  Cells near the
    boundary are split into sub x sub subcells; each subcell is clipped by the
    linearized boundary and contributes its clipped centroid with the clipped
    area as weight.
    """

    surface: ConformalSurface
    x: np.ndarray
    area_weights: np.ndarray  # Euclidean
    theta: np.ndarray
    theta_weight: float
    boundaries: list = field(default_factory=list)
    n: int = 0
    chunk: int = 4096

    @classmethod
    def build(cls, scenario: Scenario, n=128, n_theta=64, n_boundary=None, sub=4, chunk=4096):
        lo, hi = scenario.outer.shape.bbox()
        pad = 1e-9
        lo, hi = lo - pad, hi + pad
        side = float(np.max(hi - lo))
        h = side / n
        centers_1d = lo[0] + (np.arange(n) + 0.5) * h, lo[1] + (np.arange(n) + 0.5) * h
        C = np.stack(np.meshgrid(*centers_1d, indexing="ij"), axis=-1).reshape(-1, 2)
        a = h / sub
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        O = np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1).reshape(-1, 2) * h
        # classify whole cells by the signed distance at their centers
        reach = h * np.sqrt(0.5) + 1e-12
        ev = np.stack([c.event(C) for c in scenario.curves], axis=1)
        full = np.all(ev <= -reach, axis=1)
        cut = ~full & np.all(ev < reach, axis=1)
        pts = [C[full]]
        wts = [np.full(full.sum(), h * h)]
        S = (C[cut][:, None, :] + O[None, :, :]).reshape(-1, 2)
        xs, ws = _clipped_cells(scenario.curves, S, a)
        pts.append(xs)
        wts.append(ws)
        X = np.concatenate(pts)
        W = np.concatenate(wts)
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        nb = n_boundary if n_boundary is not None else max(256, 4 * n)
        bgrids = []
        for curve in scenario.curves:
            t = curve.period * np.arange(nb) / nb
            p = curve.point(t)
            sp = curve.shape.speed(t)
            w = curve.period / nb * sp * np.exp(scenario.surface.lam_value(p))
            bgrids.append(BoundaryGrid(curve, p, w))
        return cls(scenario.surface, X, W, theta, 2 * np.pi / n_theta, bgrids, n, chunk)

    @property
    def cell_count(self):
        return len(self.x) * len(self.theta)

    def interior_weights(self, idx):
        return self.area_weights[idx] * np.exp(2 * self.surface.lam_value(self.x[idx])) * self.theta_weight

    def chunks(self):
        for i in range(0, len(self.x), self.chunk):
            yield slice(i, min(i + self.chunk, len(self.x)))


def _clip(poly, n, d):
    """Clip a convex polygon to {y : n.y + d <= 0}."""
    out = []
    m = len(poly)
    f = poly @ n + d
    for i in range(m):
        j = (i + 1) % m
        if f[i] <= 0:
            out.append(poly[i])
        if (f[i] < 0 < f[j]) or (f[j] < 0 < f[i]):
            r = f[i] / (f[i] - f[j])
            out.append(poly[i] + r * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def _poly_area_centroid(poly):
    if len(poly) < 3:
        return 0.0, np.zeros(2)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum()
    if abs(area) < 1e-300:
        return 0.0, np.zeros(2)
    cx = ((x + xn) * cr).sum() / (6 * area)
    cy = ((y + yn) * cr).sum() / (6 * area)
    return abs(area), np.array([cx, cy])


def _clipped_cells(curves, S, a, fd=1e-7):
    """Centroids and areas of squares of side ``a`` centered at ``S`` intersected with M.

    Each boundary is replaced by its tangent line at the square center.
    """
    half = 0.5 * a
    ev = np.stack([c.event(S) for c in curves], axis=1)
    grads = []
    for c in curves:
        gx = (c.event(S + [fd, 0.0]) - c.event(S - [fd, 0.0])) / (2 * fd)
        gy = (c.event(S + [0.0, fd]) - c.event(S - [0.0, fd])) / (2 * fd)
        grads.append(np.stack([gx, gy], axis=-1))
    G = np.stack(grads, axis=1)  # (n, curves, 2)
    reach = half * np.abs(G).sum(axis=-1)
    inside = np.all(ev <= -reach, axis=1)
    outside = np.any(ev >= reach, axis=1)
    xs = [S[inside]]
    ws = [np.full(inside.sum(), a * a)]
    square = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    for i in np.flatnonzero(~inside & ~outside):
        poly = square.copy()
        for k in range(len(curves)):
            if ev[i, k] > -reach[i, k]:
                poly = _clip(poly, G[i, k], ev[i, k])
                if len(poly) < 3:
                    break
        area, cen = _poly_area_centroid(poly)
        if area > 0:
            xs.append((S[i] + cen)[None, :])
            ws.append(np.array([area]))
    return np.concatenate(xs), np.concatenate(ws)


def l2_inner(grid: QuadratureGrid, u, w, domain="SM"):
    """Quadrature inner product of two bundle functions (or callables (x, theta) -> values)."""

    def ev(f, x, th):
        return f.value(x, th) if hasattr(f, "value") else f(x, th)

    if domain == "SM":
        total = 0.0
        for sl in grid.chunks():
            x = grid.x[sl]
            wt = grid.interior_weights(sl)
            total += float(np.sum(wt[:, None] * ev(u, x, grid.theta) * ev(w, x, grid.theta)))
        return total
    kinds = {"SE": "outer", "SR": "obstacle", "dSM": None}
    if domain not in kinds:
        raise ValueError(f"unknown domain {domain!r}")
    total = 0.0
    for bg in grid.boundaries:
        if kinds[domain] is not None and bg.curve.kind != kinds[domain]:
            continue
        vals = ev(u, bg.x, grid.theta) * ev(w, bg.x, grid.theta)
        total += float(np.sum(bg.weights[:, None] * vals) * grid.theta_weight)
    return total


def _relative(lhs, rhs, eps):
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + eps)


def interior_terms(grid: QuadratureGrid, u: BundleFunction):
    """||VXu||^2, ||XVu||^2, ||Xu||^2 and (K Vu, Vu) over SM."""
    acc = {"VX2": 0.0, "XV2": 0.0, "X2": 0.0, "KVV": 0.0}
    for sl in grid.chunks():
        x = grid.x[sl]
        wt = grid.interior_weights(sl)[:, None]
        d = u.derivs(x, grid.theta)
        f = frame_terms(grid.surface, x, grid.theta, d)
        K = grid.surface.gauss_curvature(x)[:, None]
        acc["VX2"] += float(np.sum(wt * f["VX"] ** 2))
        acc["XV2"] += float(np.sum(wt * f["XV"] ** 2))
        acc["X2"] += float(np.sum(wt * f["X"] ** 2))
        acc["KVV"] += float(np.sum(wt * K * f["V"] ** 2))
    return acc


def _boundary_geometry(surface, curve, x):
    t = curve.param(x, check=False)
    lam = surface.lam_value(x)
    g = surface.grad_lambda(x)
    e = np.exp(-lam)
    te = curve.tangent_e(t)
    T = e[:, None] * te
    c_x = T[:, 0] * g[:, 1] - T[:, 1] * g[:, 0]
    alpha = np.arctan2(te[:, 1], te[:, 0])
    alpha_dot = e * curve.curvature_e(t)
    kappa = signed_curvature(surface, curve, x, check=False)
    return T, c_x, alpha, alpha_dot, kappa


def boundary_terms(grid: QuadratureGrid, u: BundleFunction):
    """Boundary pairings on each component: (nabla_T u, Vu), the even/odd cross terms and (kappa Vu, Vu).

    With u_r(theta) = u(2 alpha - theta) the reflected function,
    nabla_T(u_r) = T.du(2a - th) + 2 alpha' u_t(2a - th) - c u_t(2a - th).
    """
    out = []
    th = grid.theta
    for bg in grid.boundaries:
        x = bg.x
        T, c_x, alpha, alpha_dot, kappa = _boundary_geometry(grid.surface, bg.curve, x)
        d = u.derivs(x, th)
        th_r = 2 * alpha[:, None] - th[None, :]
        dr = u.derivs(x, th_r)
        Tdu = T[:, 0:1] * d["u1"] + T[:, 1:2] * d["u2"]
        Tdu_r = T[:, 0:1] * dr["u1"] + T[:, 1:2] * dr["u2"]
        cx = c_x[:, None]
        ad = alpha_dot[:, None]
        grad_T = Tdu + cx * d["ut"]
        grad_T_refl = Tdu_r + 2 * ad * dr["ut"] - cx * dr["ut"]
        Vu = d["ut"]
        Vu_refl = -dr["ut"]  # V of the reflected function
        grad_e = 0.5 * (grad_T + grad_T_refl)
        grad_o = 0.5 * (grad_T - grad_T_refl)
        V_e = 0.5 * (Vu + Vu_refl)
        V_o = 0.5 * (Vu - Vu_refl)
        w = bg.weights[:, None] * grid.theta_weight
        out.append(
            {
                "kind": bg.curve.kind,
                "gradT_V": float(np.sum(w * grad_T * Vu)),
                "e_o": float(np.sum(w * grad_e * V_o)),
                "o_e": float(np.sum(w * grad_o * V_e)),
                "kVV": float(np.sum(w * kappa[:, None] * Vu * Vu)),
                "u_odd_max": float(np.max(np.abs(0.5 * (d["u"] - dr["u"])))) if d["u"].size else 0.0,
                "u_max": float(np.max(np.abs(d["u"]))) if d["u"].size else 0.0,
            }
        )
    return out


@dataclass
class PestovReport:
    residual: float
    terms: dict
    lhs: float
    rhs: float
    grid_n: int
    n_theta: int

    def to_dict(self):
        return {
            "residual": self.residual,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "terms": self.terms,
            "grid": [self.grid_n, self.grid_n, self.n_theta],
            "conventions": {
                "X_perp": "[X, V]",
                "T": "nu rotated by +90 degrees",
                "kappa": "-<D_t T, nu>",
            },
        }


def _eps(grid):
    return 1e-14 * grid.cell_count


def pestov_interior_identity(grid: QuadratureGrid, u: BundleFunction, include_boundary=None) -> PestovReport:
    """||VXu||^2 = ||XVu||^2 + ||Xu||^2 - (KVu, Vu) + (nabla_T u, Vu)_dSM.

    The boundary term is dropped for functions tagged compactly supported
    (unless ``include_boundary`` says otherwise).
    """
    it = interior_terms(grid, u)
    if include_boundary is None:
        include_boundary = u.support != "compact"
    bterm = sum(b["gradT_V"] for b in boundary_terms(grid, u)) if include_boundary else 0.0
    lhs = it["VX2"]
    rhs = it["XV2"] + it["X2"] - it["KVV"] + bterm
    terms = dict(it, boundary=bterm)
    return PestovReport(_relative(lhs, rhs, _eps(grid)), terms, lhs, rhs, grid.n, len(grid.theta))


def boundary_decomposition(grid: QuadratureGrid, u: BundleFunction) -> PestovReport:
    """(nabla_T u, Vu) = (nabla_T u_e, Vu_o) + (nabla_T u_o, Vu_e) - (kappa Vu, Vu) on dSM."""
    bt = boundary_terms(grid, u)
    lhs = sum(b["gradT_V"] for b in bt)
    rhs = sum(b["e_o"] + b["o_e"] - b["kVV"] for b in bt)
    terms = {b["kind"]: {k: v for k, v in b.items() if k != "kind"} for b in bt}
    return PestovReport(_relative(lhs, rhs, _eps(grid)), terms, lhs, rhs, grid.n, len(grid.theta))


def pestov_full_residual(grid: QuadratureGrid, u: BundleFunction) -> PestovReport:
    """||VXu||^2 = ||XVu||^2 + ||Xu||^2 - (KVu, Vu) - (kappa Vu, Vu)_dSM.

    Valid for u even under the reflection on SR and zero on SE; the report
    records how well the sampled u meets those hypotheses.
    """
    it = interior_terms(grid, u)
    bt = boundary_terms(grid, u)
    kvv = sum(b["kVV"] for b in bt)
    lhs = it["VX2"]
    rhs = it["XV2"] + it["X2"] - it["KVV"] - kvv
    terms = dict(it, kappa_boundary=kvv)
    for b in bt:
        if b["kind"] == "obstacle":
            terms["odd_part_on_R"] = b["u_odd_max"]
        else:
            terms["max_on_E"] = b["u_max"]
    return PestovReport(_relative(lhs, rhs, _eps(grid)), terms, lhs, rhs, grid.n, len(grid.theta))


def vertical_ibp_residual(grid: QuadratureGrid, w: BundleFunction, z: BundleFunction):
    """|(Vw, z) + (w, Vz)| over SM."""
    a = b = 0.0
    for sl in grid.chunks():
        x = grid.x[sl]
        wt = grid.interior_weights(sl)[:, None]
        dw, dz = w.derivs(x, grid.theta), z.derivs(x, grid.theta)
        a += float(np.sum(wt * dw["ut"] * dz["u"]))
        b += float(np.sum(wt * dw["u"] * dz["ut"]))
    return abs(a + b)


def _flow_derivative(surface, fn, x, theta, h):
    """Central difference of fn(x, theta) -> (n, n_theta) along the geodesic flow."""
    X = np.repeat(x, len(theta), axis=0)
    TH = np.tile(theta, len(x))
    xp, tp = rk4_step(surface, X, TH, h)
    xm, tm = rk4_step(surface, X, TH, -h)
    shape = (len(x), len(theta))
    return (fn(xp, tp).reshape(shape) - fn(xm, tm).reshape(shape)) / (2 * h)


def commutator_pairing_check(grid: QuadratureGrid, u: BundleFunction, h=1e-4) -> PestovReport:
    """([P*, P]u, u) = ||Xu||^2 - (K Vu, Vu) - (<v, nu> Xu, u)_dSM with P = VX, P* = XV.

    The left side is (X VVXu, u) + (XXVu, Vu), using (VXXVu, u) = -(XXVu, Vu);
    the outer X is a central difference along the flow.
    """

    def pointwise(key):
        def fn(xx, tt):
            d = u.derivs(xx, tt[:, None])
            return frame_terms(grid.surface, xx, tt[:, None], d)[key][:, 0]

        return fn

    lhs = rhs = 0.0
    for sl in grid.chunks():
        x = grid.x[sl]
        wt = grid.interior_weights(sl)[:, None]
        d = u.derivs(x, grid.theta)
        f = frame_terms(grid.surface, x, grid.theta, d)
        K = grid.surface.gauss_curvature(x)[:, None]
        XVVX = _flow_derivative(grid.surface, pointwise("VVX"), x, grid.theta, h)
        XXV = _flow_derivative(grid.surface, pointwise("XV"), x, grid.theta, h)
        lhs += float(np.sum(wt * (XVVX * d["u"] + XXV * f["V"])))
        rhs += float(np.sum(wt * (f["X"] ** 2 - K * f["V"] ** 2)))
    bterm = 0.0
    for bg in grid.boundaries:
        t = bg.curve.param(bg.x, check=False)
        nu = bg.curve.normal_e(t)
        nu_angle = np.arctan2(nu[:, 1], nu[:, 0])
        incid = np.cos(grid.theta[None, :] - nu_angle[:, None])
        d = u.derivs(bg.x, grid.theta)
        f = frame_terms(grid.surface, bg.x, grid.theta, d)
        bterm += float(np.sum(bg.weights[:, None] * grid.theta_weight * incid * f["X"] * d["u"]))
    rhs -= bterm
    terms = {"commutator_pairing": lhs, "boundary": bterm}
    return PestovReport(_relative(lhs, rhs, _eps(grid)), terms, lhs, rhs, grid.n, len(grid.theta))


def stability_ratio(scenario: Scenario, f: Profile, n_s=64, n_theta=128, n_grid=128):
    """(kappa_0 / 2 pi) ||V u^f||_{L2(SE)} / ||f||_{L2(M)}; report only, NaN when f = 0."""
    from .transform import transform_batch

    E = scenario.outer
    s = (np.arange(n_s) + 0.5) / n_s * E.length
    p = E.shape.param_at_arclength(s)
    xb = E.point(p)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    n_out = E.normal_e(p)
    X = np.repeat(xb, n_theta, axis=0)
    TH = np.tile(th, n_s)
    inward = (np.repeat(n_out, n_theta, axis=0) * np.stack([np.cos(TH), np.sin(TH)], axis=-1)).sum(-1) < 0
    U = np.zeros(len(TH))
    if np.any(inward):
        vals, _ = transform_batch(scenario, [f], X[inward], TH[inward])
        U[inward] = vals[:, 0]
    U = U.reshape(n_s, n_theta)
    dth = 2 * np.pi / n_theta
    Vu = (np.roll(U, -1, axis=1) - np.roll(U, 1, axis=1)) / (2 * dth)
    ds = E.length / n_s * np.exp(scenario.surface.lam_value(xb))
    v_norm = np.sqrt(np.sum(ds[:, None] * dth * Vu**2))
    grid = QuadratureGrid.build(scenario, n=n_grid, n_theta=1)
    f_norm = np.sqrt(np.sum(grid.area_weights * np.exp(2 * scenario.surface.lam_value(grid.x)) * f.value(grid.x) ** 2))
    tE = np.linspace(0, E.period, 1024, endpoint=False)
    kappa0 = float(np.max(signed_curvature(scenario.surface, E, E.point(tE), check=False)))
    if f_norm == 0:
        return float("nan")
    return float(kappa0 / (2 * np.pi) * v_norm / f_norm)


# ---------------------------------------------------------------------------
# registry


def reflection_even(k_max, amplitude: Profile, center=(0.0, 0.0), start=1):
    """Sum over k of amplitude * (sin k psi for odd k, cos k psi for even k), psi = theta - phi(x).

    phi is the polar angle about ``center``.  On a circle about ``center``
    the reflection maps psi to -pi - psi, which fixes every term.
    """
    terms = []
    for k in range(start, k_max + 1):
        ck = AngularHarmonic(k, "cos", center)
        sk = AngularHarmonic(k, "sin", center)
        if k % 2 == 1:
            # sin(k th - k phi) = sin(k th) cos(k phi) - cos(k th) sin(k phi)
            terms += [(k, "sin", amplitude * ck), (k, "cos", amplitude * sk * -1.0)]
        else:
            # cos(k th - k phi) = cos(k th) cos(k phi) + sin(k th) sin(k phi)
            terms += [(k, "cos", amplitude * ck), (k, "sin", amplitude * sk)]
    return terms


def vanishing_on_outer(radius=1.0, center=(0.0, 0.0)) -> Profile:
    """radius^2 - |x - center|^2, zero on the outer circle."""
    return RadialQuadratic(-1.0, center) + radius**2


def _u_zero(p):
    return BundleFunction([], "zero", "compact")


def _u_bump(p):
    b = PolyBump(p.get("amp", 1.0), p.get("center", (0.55, 0.1)), p.get("radius", 0.25), p.get("power", 3))
    terms = [(1, "sin", b)]
    if p.get("mix", False):
        terms += [(0, "cos", b * 0.5), (2, "cos", b * 0.3), (3, "sin", b * -0.2)]
    return BundleFunction(terms, "bump", "compact")


def _u_fourier(p):
    terms = [(t["k"], t.get("kind", "cos"), profile_from_dict(t["coef"])) for t in p["terms"]]
    return BundleFunction(terms, "fourier", p.get("support", "general"))


def _u_radial_sin(p):
    # sin(theta) * (profile in |x|), not reflection-even
    w = RadialQuadratic(p.get("c", -1.0)) + p.get("c0", 1.0)
    return BundleFunction([(1, "sin", w)], "radial_sin", "general")


def _u_even(p):
    center = p.get("center", (0.0, 0.0))
    amp = vanishing_on_outer(p.get("outer_radius", 1.0), center)
    extra = p.get("amplitude")
    if extra is not None:
        amp = amp * profile_from_dict(extra)
    terms = reflection_even(p.get("k_max", 1), amp, center, p.get("k_min", 1))
    if p.get("with_constant", False):
        terms.append((0, "cos", amp))
    return BundleFunction(terms, "reflection_even", "reflection_even")


def _u_const(p):
    return BundleFunction([(0, "cos", Constant(p.get("c", 1.0)))], "constant", "general")


U_REGISTRY = {
    "zero": _u_zero,
    "constant": _u_const,
    "bump": _u_bump,
    "fourier": _u_fourier,
    "radial_sin": _u_radial_sin,
    "reflection_even": _u_even,
}


def bundle_function_from_dict(spec) -> BundleFunction:
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name not in U_REGISTRY:
        raise SchemaError(f"unknown bundle function {name!r}; known: {sorted(U_REGISTRY)}")
    try:
        return U_REGISTRY[name](dict(spec.get("params", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad parameters for bundle function {name!r}: {exc}") from exc
