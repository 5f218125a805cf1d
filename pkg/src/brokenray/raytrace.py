"""Broken ray tracing: geodesic integration, boundary events and reflection.

The geodesic flow is integrated in (x, theta) form with classical RK4,

    dx/dt = exp(-lam) (cos theta, sin theta)
    dtheta/dt = exp(-lam) (d2 lam cos theta - d1 lam sin theta)

which keeps unit speed exactly.  Rays are traced in batches: all active rays
advance together, and rays whose step ends outside M have the crossing time
located by root finding on the RK4 sub-step length.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EventLocalizationFailure, LeftDomain, NoDoubleHit, PointNotOnBoundary, ValidationError
from .geometry import BoundaryCurve, ConformalSurface, boundary_frame, gauss_bonnet_check, signed_curvature


class Termination(str, enum.Enum):
    EXIT_AT_E = "exit_at_E"
    MAX_TIME_EXCEEDED = "max_time_exceeded"
    TANGENTIAL_ABORT = "tangential_abort"
    MAX_REFLECTIONS = "max_reflections"
    RUNNING = "running"


@dataclass(frozen=True)
class Scenario:
    surface: ConformalSurface
    outer: BoundaryCurve
    obstacle: BoundaryCurve | None = None
    a: float = 0.1
    L: float = 20.0
    step: float = 1e-3
    event_tol: float = 1e-10
    max_reflections: int = 10000
    tangential_abort_tol: float = 1e-4
    enclosing_radius: float | None = None
    name: str = "scenario"
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not (0.0 < self.a <= 1.0):
            raise ValidationError(f"a = {self.a} must lie in (0, 1]")
        if not self.L > 0:
            raise ValidationError(f"L = {self.L} must be positive")
        if not self.step > 0:
            raise ValidationError("step must be positive")

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)

    @property
    def curves(self):
        return [self.outer] + ([self.obstacle] if self.obstacle is not None else [])

    @property
    def disc_radius(self) -> float:
        """Radius of the enclosing disc D, centered at the origin."""
        if self.enclosing_radius is not None:
            return float(self.enclosing_radius)
        lo, hi = self.outer.shape.bbox()
        return 1.5 * float(np.max(np.abs(np.concatenate([lo, hi]))))

    def inside(self, x, tol=0.0):
        x = np.asarray(x, float)
        ok = self.outer.event(x) <= tol
        if self.obstacle is not None:
            ok &= self.obstacle.event(x) <= tol
        return ok


@dataclass
class ReflectionEvent:
    t: float
    x: np.ndarray
    theta_in: float
    theta_out: float
    v_in: np.ndarray
    v_out: np.ndarray
    incidence: float
    tangential_flag: bool


@dataclass
class BrokenRay:
    """A traced broken ray with its step-grid samples.

    ``t``, ``x``, ``theta`` hold states at every step end; at a reflection the
    pre- and post-reflection states are both stored (same t and x) and
    ``seg`` increments.
    """

    t: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    seg: np.ndarray
    reflections: list
    termination: Termination
    tau: float
    surface: ConformalSurface = field(repr=False)

    @property
    def reflection_count(self) -> int:
        return len(self.reflections)

    @property
    def velocity(self):
        return self.surface.unit_vector(self.x, self.theta)

    def segments(self):
        """List of (t_start, t_end, slice) for the geodesic segments."""
        out = []
        for k in range(int(self.seg[-1]) + 1 if len(self.seg) else 0):
            idx = np.flatnonzero(self.seg == k)
            out.append((float(self.t[idx[0]]), float(self.t[idx[-1]]), slice(idx[0], idx[-1] + 1)))
        return out

    def state_at(self, tq):
        """Cubic Hermite interpolation of (x, theta) at times ``tq``.

        At a reflection time the post-reflection state is returned.
        """
        tq = np.atleast_1d(np.asarray(tq, float))
        xs, ths, ts = self.x, self.theta, self.t
        # intervals of positive length only (skips the zero-length reflection pairs)
        i = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, len(ts) - 2)
        # a zero-length reflection pair at the very end: use the interval before it
        i = np.where(ts[i + 1] - ts[i] <= 0, np.maximum(i - 1, 0), i)
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = np.where(h > 0, (tq - t0) / np.where(h > 0, h, 1.0), 0.0)
        x0, x1 = xs[i], xs[i + 1]
        th0, th1 = ths[i], ths[i + 1]
        dx0, dth0 = self.surface.geodesic_rhs(x0, th0)
        dx1, dth1 = self.surface.geodesic_rhs(x1, th1)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        x = h00[:, None] * x0 + (h10 * h)[:, None] * dx0 + h01[:, None] * x1 + (h11 * h)[:, None] * dx1
        th = h00 * th0 + h10 * h * dth0 + h01 * th1 + h11 * h * dth1
        return x, th


# ---------------------------------------------------------------------------
# integrator


def rk4_step(surface: ConformalSurface, x, theta, h):
    """One RK4 step of the (x, theta) geodesic system; ``h`` may be an array."""
    h = np.asarray(h, float)
    hx = h[..., None] if h.ndim else h
    k1x, k1t = surface.geodesic_rhs(x, theta)
    k2x, k2t = surface.geodesic_rhs(x + 0.5 * hx * k1x, theta + 0.5 * h * k1t)
    k3x, k3t = surface.geodesic_rhs(x + 0.5 * hx * k2x, theta + 0.5 * h * k2t)
    k4x, k4t = surface.geodesic_rhs(x + hx * k3x, theta + h * k3t)
    xn = x + hx / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    tn = theta + h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
    return xn, tn


def step_geodesic(scenario: Scenario, x, v, dt):
    """Advance a unit-speed geodesic (x, v) by ``dt``; returns (x', v')."""
    surface = scenario.surface
    x = np.asarray(x, float)
    theta = surface.angle_of(v)
    xn, tn = rk4_step(surface, x, theta, dt)
    if np.any(np.linalg.norm(xn, axis=-1) > scenario.disc_radius):
        raise LeftDomain("geodesic left the enclosing disc")
    return xn, surface.unit_vector(xn, tn)


def reflect_angle(curve: BoundaryCurve, t_param, theta):
    """theta -> 2 alpha - theta with alpha the tangent angle of the curve."""
    alpha = curve.tangent_angle(t_param)
    return np.mod(2 * alpha - theta, 2 * np.pi)


def reflect_direction(scenario: Scenario, x, v_in, check=True):
    """rho v = v - 2 <v, nu>_g nu at a point of the obstacle curve."""
    if scenario.obstacle is None:
        raise PointNotOnBoundary("scenario has no obstacle")
    surface = scenario.surface
    nu, _ = boundary_frame(surface, scenario.obstacle, x, check=check)
    v_in = np.asarray(v_in, float)
    vn = surface.inner(x, v_in, nu)
    return v_in - 2 * vn[..., None] * nu


def incidence_of(curve: BoundaryCurve, t_param, theta):
    """<v, nu>_g for the unit vector with angle ``theta`` (conformal: a cosine)."""
    n = curve.normal_e(t_param)
    return n[..., 0] * np.cos(theta) + n[..., 1] * np.sin(theta)


# ---------------------------------------------------------------------------
# batched tracer


class Observer:
    """Callbacks invoked by :func:`trace_rays`; all arguments are arrays over the rays ``ids``."""

    def on_start(self, n):
        pass

    def on_step(self, ids, t0, x0, th0, t1, x1, th1):
        pass

    def on_reflect(self, ids, t, x, th_in, th_out, incidence):
        pass

    def on_finish(self, ids, t, x, th, status):
        pass


class _Recorder(Observer):
    def on_start(self, n):
        self.t = [[] for _ in range(n)]
        self.x = [[] for _ in range(n)]
        self.th = [[] for _ in range(n)]
        self.seg = [[] for _ in range(n)]
        self.refl = [[] for _ in range(n)]
        self.cur = np.zeros(n, dtype=int)

    def push(self, ids, t, x, th):
        for k, i in enumerate(ids):
            self.t[i].append(float(t[k]))
            self.x[i].append(np.array(x[k], dtype=float))
            self.th[i].append(float(th[k]))
            self.seg[i].append(self.cur[i])

    def on_step(self, ids, t0, x0, th0, t1, x1, th1):
        self.push(ids, t1, x1, th1)

    def on_reflect(self, ids, t, x, th_in, th_out, incidence):
        self.cur[ids] += 1
        self.push(ids, t, x, th_out)
        for k, i in enumerate(ids):
            self.refl[i].append((t[k], x[k].copy(), th_in[k], th_out[k], incidence[k]))


@dataclass
class TraceResult:
    """Per-ray summary of a batch trace."""

    status: np.ndarray  # Termination values
    tau: np.ndarray
    x_end: np.ndarray
    theta_end: np.ndarray
    n_reflections: np.ndarray
    n_low_incidence: np.ndarray
    min_incidence: np.ndarray
    rays: list | None = None

    def exited(self):
        return self.status == Termination.EXIT_AT_E.value


def _locate(surface, curve, x0, th0, h, tol, max_iter=200):
    """Smallest sub-step in (0, h] at which the RK4 state reaches the curve.

    Hybrid bisection / Illinois on G(s) = curve.event(RK4(x0, th0, s)), with
    G(h) > 0.  Returns (s, x, theta).
    """
    n = len(h)
    lo = np.zeros(n)
    hi = h.copy()
    glo = curve.event(x0)
    # a start on the curve counts as inside
    glo = np.minimum(glo, 0.0)
    xh, thh = rk4_step(surface, x0, th0, hi)
    ghi = curve.event(xh)
    side = np.zeros(n, dtype=int)
    best_s, best_x, best_t, best_g = hi.copy(), xh, thh, ghi.copy()
    done = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        width = hi - lo
        denom = ghi - glo
        fp = np.where(denom > 0, lo - glo * width / np.where(denom > 0, denom, 1.0), 0.5 * (lo + hi))
        margin = 1e-3 * width
        use_bis = (fp <= lo + margin) | (fp >= hi - margin) | ~np.isfinite(fp)
        c = np.where(use_bis, 0.5 * (lo + hi), fp)
        xc, thc = rk4_step(surface, x0, th0, c)
        gc = curve.event(xc)
        better = np.abs(gc) < np.abs(best_g)
        best_s = np.where(better, c, best_s)
        best_x = np.where(better[:, None], xc, best_x)
        best_t = np.where(better, thc, best_t)
        best_g = np.where(better, gc, best_g)
        pos = gc > 0
        # Illinois: halve the retained end value when the same side repeats
        hi_new = np.where(pos, c, hi)
        lo_new = np.where(pos, lo, c)
        ghi_new = np.where(pos, gc, np.where(side == -1, 0.5 * ghi, ghi))
        glo_new = np.where(pos, np.where(side == 1, 0.5 * glo, glo), gc)
        side = np.where(pos, 1, -1)
        upd = ~done
        lo, hi = np.where(upd, lo_new, lo), np.where(upd, hi_new, hi)
        glo, ghi = np.where(upd, glo_new, glo), np.where(upd, ghi_new, ghi)
        done |= (np.abs(best_g) <= 1e-3 * tol) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300))
        if np.all(done):
            break
    if np.any(np.abs(best_g) > tol):
        raise EventLocalizationFailure(f"boundary event not localized: |g| = {np.max(np.abs(best_g)):.3e}")
    return best_s, best_x, best_t


def trace_rays(scenario: Scenario, x0, theta0, observers=(), record=False, t_max=None) -> TraceResult:
    """Trace a batch of broken rays from (x0, theta0).

    Returns a :class:`TraceResult`; with ``record=True`` it also carries a
    :class:`BrokenRay` per ray.
    """
    sc = scenario
    surface = sc.surface
    x = np.array(np.atleast_2d(x0), dtype=float)
    th = np.array(np.atleast_1d(theta0), dtype=float)
    n = len(x)
    if th.shape != (n,):
        raise ValidationError("x0 and theta0 must describe the same number of rays")
    L = sc.L if t_max is None else t_max
    observers = list(observers)
    rec = _Recorder() if record else None
    if rec is not None:
        observers.append(rec)
    for ob in observers:
        ob.on_start(n)

    t = np.zeros(n)
    status = np.full(n, Termination.RUNNING.value, dtype=object)
    nrefl = np.zeros(n, dtype=int)
    nlow = np.zeros(n, dtype=int)
    mininc = np.full(n, np.inf)

    tol_on = max(1e3 * sc.event_tol, 1e-8)
    if np.any(~sc.inside(x, tol=tol_on)):
        raise ValidationError("start point outside M")

    all_ids = np.arange(n)
    if rec is not None:
        rec.push(all_ids, t, x, th)

    # starts on E pointing outward or tangentially: zero travel time
    gE = sc.outer.event(x)
    onE = np.abs(gE) <= tol_on
    if np.any(onE):
        pE = sc.outer.param(x[onE], check=False)
        inc = incidence_of(sc.outer, pE, th[onE])
        out_idx = all_ids[onE][inc >= 0]
        status[out_idx] = Termination.EXIT_AT_E.value

    def do_reflect(ids, tr, xr, thr):
        """Apply the reflection law at obstacle points; returns ids that continue."""
        pR = sc.obstacle.param(xr, check=False)
        inc = incidence_of(sc.obstacle, pR, thr)
        abort = np.abs(inc) < sc.tangential_abort_tol
        new_th = np.where(abort, thr, reflect_angle(sc.obstacle, pR, thr))
        ok = ~abort
        if np.any(abort):
            status[ids[abort]] = Termination.TANGENTIAL_ABORT.value
        ids_ok = ids[ok]
        if len(ids_ok):
            for ob in observers:
                ob.on_reflect(ids_ok, tr[ok], xr[ok], thr[ok], new_th[ok], np.abs(inc[ok]))
            th[ids_ok] = new_th[ok]
            nrefl[ids_ok] += 1
            nlow[ids_ok] += np.abs(inc[ok]) < sc.a
            mininc[ids_ok] = np.minimum(mininc[ids_ok], np.abs(inc[ok]))
            over = nrefl[ids_ok] > sc.max_reflections
            status[ids_ok[over]] = Termination.MAX_REFLECTIONS.value

    # starts on R pointing into the obstacle reflect at once
    if sc.obstacle is not None:
        gR = sc.obstacle.event(x)
        onR = (np.abs(gR) <= tol_on) & (status == Termination.RUNNING.value)
        if np.any(onR):
            ids = all_ids[onR]
            pR = sc.obstacle.param(x[ids], check=False)
            inc = incidence_of(sc.obstacle, pR, th[ids])
            into = inc > 0
            if np.any(into):
                do_reflect(ids[into], t[ids[into]], x[ids[into]], th[ids[into]])

    R_D = sc.disc_radius
    while True:
        ids = all_ids[status == Termination.RUNNING.value]
        if len(ids) == 0:
            break
        x0s, th0s, t0s = x[ids], th[ids], t[ids]
        h = np.full(len(ids), sc.step)
        x1, th1 = rk4_step(surface, x0s, th0s, h)
        if np.any(np.linalg.norm(x1, axis=-1) > R_D):
            raise LeftDomain("ray left the enclosing disc without a boundary event")
        s_hit = np.full(len(ids), np.inf)
        which = np.zeros(len(ids), dtype=int)  # 0 none, 1 E, 2 R
        xh = x1.copy()
        thh = th1.copy()
        for code, curve in ((1, sc.outer), (2, sc.obstacle)):
            if curve is None:
                continue
            hit = curve.event(x1) > 0
            if not np.any(hit):
                continue
            s, xs, ts = _locate(surface, curve, x0s[hit], th0s[hit], h[hit], sc.event_tol)
            hi = np.flatnonzero(hit)
            first = s < s_hit[hi]
            sel = hi[first]
            s_hit[sel] = s[first]
            xh[sel] = xs[first]
            thh[sel] = ts[first]
            which[sel] = code
        ev = which > 0
        t1 = t0s + np.where(ev, s_hit, h)
        x1 = np.where(ev[:, None], xh, x1)
        th1 = np.where(ev, thh, th1)
        for ob in observers:
            ob.on_step(ids, t0s, x0s, th0s, t1, x1, th1)
        x[ids], th[ids], t[ids] = x1, th1, t1

        exitE = which == 1
        status[ids[exitE]] = Termination.EXIT_AT_E.value
        hitR = which == 2
        if np.any(hitR):
            do_reflect(ids[hitR], t1[hitR], x1[hitR], th1[hitR])
        over = (t1 >= L) & (status[ids] == Termination.RUNNING.value)
        status[ids[over]] = Termination.MAX_TIME_EXCEEDED.value

    for ob in observers:
        ob.on_finish(all_ids, t, x, th, status)

    rays = None
    if rec is not None:
        rays = []
        for i in range(n):
            refl = [
                ReflectionEvent(
                    t=float(tr),
                    x=xr,
                    theta_in=float(ti),
                    theta_out=float(to),
                    v_in=surface.unit_vector(xr, ti),
                    v_out=surface.unit_vector(xr, to),
                    incidence=float(inc),
                    tangential_flag=bool(inc < sc.a),
                )
                for tr, xr, ti, to, inc in rec.refl[i]
            ]
            rays.append(
                BrokenRay(
                    t=np.array(rec.t[i]),
                    x=np.array(rec.x[i]),
                    theta=np.array(rec.th[i]),
                    seg=np.array(rec.seg[i], dtype=int),
                    reflections=refl,
                    termination=Termination(status[i]),
                    tau=float(t[i]),
                    surface=surface,
                )
            )
    return TraceResult(
        status=status.astype(str),
        tau=t.copy(),
        x_end=x.copy(),
        theta_end=th.copy(),
        n_reflections=nrefl,
        n_low_incidence=nlow,
        min_incidence=mininc,
        rays=rays,
    )


def trace_broken_ray(scenario: Scenario, x0, v0=None, theta0=None) -> BrokenRay:
    """Trace one broken ray from ``x0`` with direction ``v0`` (or angle ``theta0``)."""
    x0 = np.asarray(x0, float)
    if theta0 is None:
        theta0 = scenario.surface.angle_of(np.asarray(v0, float))
    res = trace_rays(scenario, x0[None, :], np.array([float(theta0)]), record=True)
    return res.rays[0]


def exit_time(scenario: Scenario, x, v=None, theta=None) -> float:
    """tau^E of the broken ray, or ``inf`` if the time cap is reached first."""
    x = np.asarray(x, float)
    if theta is None:
        theta = scenario.surface.angle_of(np.asarray(v, float))
    res = trace_rays(scenario, x[None, :], np.array([float(theta)]))
    if res.status[0] == Termination.MAX_TIME_EXCEEDED.value:
        return float("inf")
    return float(res.tau[0])


# ---------------------------------------------------------------------------
# fans and the scattering relation


@dataclass
class Fan:
    """Inward-pointing boundary phase points on E on an arclength x angle grid."""

    x: np.ndarray
    theta: np.ndarray
    s: np.ndarray  # arclength position on E
    angle: np.ndarray  # angle from the inward normal, in (-pi/2, pi/2)

    def __len__(self):
        return len(self.theta)

    def subset(self, idx):
        return Fan(self.x[idx], self.theta[idx], self.s[idx], self.angle[idx])


def make_fan(scenario: Scenario, n_s: int, n_angle: int, angle_max=None) -> Fan:
    """Tensor fan: ``n_s`` arclength positions times ``n_angle`` inward angles, endpoints excluded."""
    E = scenario.outer
    length = E.length
    s = (np.arange(n_s) + 0.5) / n_s * length
    amax = np.pi / 2 if angle_max is None else float(angle_max)
    ang = -amax + (np.arange(n_angle) + 0.5) / n_angle * 2 * amax
    S, A = np.meshgrid(s, ang, indexing="ij")
    S, A = S.ravel(), A.ravel()
    p = E.shape.param_at_arclength(S)
    x = E.point(p)
    nin = -E.normal_e(p)
    th = np.mod(np.arctan2(nin[:, 1], nin[:, 0]) + A, 2 * np.pi)
    return Fan(x, th, S, A)


def random_fan(scenario: Scenario, n: int, rng: np.random.Generator) -> Fan:
    E = scenario.outer
    S = rng.uniform(0, E.length, n)
    # cosine-weighted angles cover the bundle like the Liouville boundary measure
    A = np.arcsin(rng.uniform(-1, 1, n))
    p = E.shape.param_at_arclength(S)
    x = E.point(p)
    nin = -E.normal_e(p)
    th = np.mod(np.arctan2(nin[:, 1], nin[:, 0]) + A, 2 * np.pi)
    return Fan(x, th, S, A)


@dataclass
class ScatteringTable:
    x_in: np.ndarray
    theta_in: np.ndarray
    x_out: np.ndarray
    theta_out: np.ndarray
    tau: np.ndarray
    n_reflections: np.ndarray
    status: np.ndarray

    @property
    def flagged(self):
        return self.status != Termination.EXIT_AT_E.value


def scattering_relation(scenario: Scenario, fan: Fan) -> ScatteringTable:
    res = trace_rays(scenario, fan.x, fan.theta)
    return ScatteringTable(fan.x, fan.theta, res.x_end, res.theta_end, res.tau, res.n_reflections, res.status)


# ---------------------------------------------------------------------------
# condition report


@dataclass
class ConditionReport:
    K_max: float
    kappa_E_min: float
    kappa_R_max: float | None
    tau_max: float
    max_reflections: int
    n_multi_low_incidence: int
    n_not_exited: int
    n_tangential_abort: int
    n_rays: int
    n_interior_rays: int
    n_interior_trapped: int
    E_strictly_convex: bool
    K_nonpositive: bool
    condition3_sampled: bool
    condition4_sampled: bool
    obstacle_convex: bool | None

    @property
    def all_conditions(self):
        return self.E_strictly_convex and self.K_nonpositive and self.condition3 and self.condition4_sampled

    @property
    def condition3(self):
        """Sampled statistic, and False whenever the obstacle bulges into M somewhere.

        Near a point where R curves toward M a short chord can graze R twice,
        so the one-low-incidence-hit condition fails there.
        """
        return self.condition3_sampled and self.obstacle_convex is not False


    def to_dict(self):
        return {k: (v.item() if hasattr(v, "item") else v) for k, v in dataclasses.asdict(self).items()}


def sample_interior(scenario: Scenario, n_grid=64):
    lo, hi = scenario.outer.shape.bbox()
    g1 = np.linspace(lo[0], hi[0], n_grid)
    g2 = np.linspace(lo[1], hi[1], n_grid)
    X = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    return X[scenario.inside(X)]


def sample_interior_phase(scenario: Scenario, n: int, seed: int = 0):
    """Deterministic pseudo-random interior phase points (x, theta), away from the boundary."""
    rng = np.random.default_rng(seed)
    lo, hi = scenario.outer.shape.bbox()
    xs = []
    while sum(len(a) for a in xs) < n:
        cand = rng.uniform(lo, hi, (4 * n, 2))
        xs.append(cand[scenario.inside(cand, tol=-1e-3)])
    x = np.concatenate(xs)[:n]
    return x, rng.uniform(0, 2 * np.pi, n)


def validate_scenario(scenario: Scenario, n_rays: int = 400, n_boundary=1024, n_grid=64, n_interior=None) -> ConditionReport:
    """Sampled check of the four injectivity hypotheses.

    Condition 4 ranges over all interior phase points, so besides the boundary
    fan ``n_interior`` (default ``n_rays // 4``) interior starts are traced up
    to time L; a ray still inside M then counts as trapped.  The same number
    of rays leaving R along its normal are added: they find bouncing orbits
    between facing walls, which random starts almost never hit.
    """
    sc = scenario
    pts = sample_interior(sc, n_grid)
    K_max = float(np.max(sc.surface.gauss_curvature(pts))) if len(pts) else 0.0
    tE = np.linspace(0, sc.outer.period, n_boundary, endpoint=False)
    kE = signed_curvature(sc.surface, sc.outer, sc.outer.point(tE), check=False)
    kR_max = None
    if sc.obstacle is not None:
        tR = np.linspace(0, sc.obstacle.period, n_boundary, endpoint=False)
        kR_max = float(np.max(signed_curvature(sc.surface, sc.obstacle, sc.obstacle.point(tR), check=False)))
    n_s = max(1, int(np.sqrt(n_rays)))
    n_a = max(1, n_rays // n_s)
    fan = make_fan(sc, n_s, n_a)
    res = trace_rays(sc, fan.x, fan.theta)
    exited = res.status == Termination.EXIT_AT_E.value
    n_int = n_rays // 4 if n_interior is None else int(n_interior)
    trapped = 0
    low = res.n_low_incidence
    if n_int > 0:
        xi, thi = sample_interior_phase(sc, n_int)
        if sc.obstacle is not None:
            R = sc.obstacle
            tp = (np.arange(n_int) + 0.5) / n_int * R.period
            nrm = R.normal_e(tp)
            xp = R.point(tp) - 1e-7 * nrm
            keep = sc.inside(xp)
            xi = np.concatenate([xi, xp[keep]])
            thi = np.concatenate([thi, np.arctan2(-nrm[keep, 1], -nrm[keep, 0])])
        ri = trace_rays(sc, xi, thi)
        trapped = int(np.sum(ri.status != Termination.EXIT_AT_E.value))
        low = np.concatenate([low, ri.n_low_incidence])
    return ConditionReport(
        K_max=K_max,
        kappa_E_min=float(np.min(kE)),
        kappa_R_max=kR_max,
        tau_max=float(np.max(res.tau)),
        max_reflections=int(np.max(res.n_reflections)),
        n_multi_low_incidence=int(np.sum(low >= 2)),
        n_not_exited=int(np.sum(~exited)),
        n_tangential_abort=int(np.sum(res.status == Termination.TANGENTIAL_ABORT.value)),
        n_rays=len(fan),
        n_interior_rays=len(thi) if n_int > 0 else 0,
        n_interior_trapped=trapped,
        E_strictly_convex=bool(np.min(kE) > 0),
        K_nonpositive=bool(K_max <= 1e-12),
        condition3_sampled=bool(np.sum(low >= 2) == 0),
        condition4_sampled=bool(np.all(exited) and np.max(res.tau) <= sc.L and trapped == 0),
        obstacle_convex=None if kR_max is None else bool(kR_max <= 1e-9),
    )


# ---------------------------------------------------------------------------
# chords with two obstacle hits (Gauss-Bonnet control)


def find_double_hit_chord(scenario: Scenario, fan: Fan, max_report=1):
    """Return recorded broken rays that reflect at least twice on R.

    Raises NoDoubleHit if none of the fan rays reflects twice.
    """
    if scenario.obstacle is None:
        raise NoDoubleHit("scenario has no obstacle")
    res = trace_rays(scenario, fan.x, fan.theta)
    multi = np.flatnonzero(res.n_reflections >= 2)
    if len(multi) == 0:
        raise NoDoubleHit(f"no broken ray among {len(fan)} samples reflects twice")
    pick = multi[:max_report]
    rec = trace_rays(scenario, fan.x[pick], fan.theta[pick], record=True)
    return rec.rays


def chord_between_reflections(ray: BrokenRay, k: int = 0, n: int = 2001):
    """Uniform resampling of the geodesic segment between reflections k and k+1."""
    if ray.reflection_count < k + 2:
        raise NoDoubleHit("ray has fewer than two reflections after index k")
    ta, tb = ray.reflections[k].t, ray.reflections[k + 1].t
    ts = np.linspace(ta, tb, n)
    x, th = ray.state_at(ts)
    # Hermite at the right end would give the post-reflection angle; use the incoming one
    th[-1] = ray.reflections[k + 1].theta_in
    x[0] = ray.reflections[k].x
    x[-1] = ray.reflections[k + 1].x
    th[0] = ray.reflections[k].theta_out
    return x, th, (tb - ta) / (n - 1)


def gauss_bonnet_for_ray(scenario: Scenario, ray: BrokenRay, k: int = 0, n: int = 2001):
    x, th, dt = chord_between_reflections(ray, k, n)
    return gauss_bonnet_check(scenario.surface, scenario.obstacle, x, th, dt)
