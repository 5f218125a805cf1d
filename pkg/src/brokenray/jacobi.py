"""Jacobi fields along broken rays.

Fields are stored in Cartesian components as the pair (J, W) with W = D_t J.
On geodesic segments

    dJ/dt = W - Gamma(v, J)
    dW/dt = -Gamma(v, W) - K (J - <J, v>_g v)

and at a reflection with incoming velocity zeta

    J+ = rho J-,    W+ = rho W- - Phi_zeta J-.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ReflectionPatternChanged, TangentialDirection
from .geometry import BoundaryCurve, ConformalSurface
from .raytrace import BrokenRay, Scenario, trace_rays


# ---------------------------------------------------------------------------
# reflection jump maps


@dataclass
class ReflectionJumpMaps:
    """Linear maps at a boundary point, as 2x2 matrices acting on Cartesian components."""

    x: np.ndarray
    nu: np.ndarray
    T: np.ndarray
    kappa: float
    conf2: float  # exp(2 lam(x)), the metric factor
    tol: float = 1e-4

    @classmethod
    def at(cls, surface: ConformalSurface, curve: BoundaryCurve, x, tol=1e-4, check=True):
        x = np.asarray(x, float)
        t = curve.param(x, check=check)
        p = curve.point(t)
        lam = float(surface.lam_value(p))
        g = surface.grad_lambda(p)
        ne, te = curve.normal_e(t), curve.tangent_e(t)
        e = np.exp(-lam)
        alpha_dot = e * curve.curvature_e(t)
        kappa = float(alpha_dot - e * (g[1] * te[0] - g[0] * te[1]))
        return cls(x=p, nu=e * ne, T=e * te, kappa=kappa, conf2=np.exp(2 * lam), tol=tol)

    def inner(self, a, b):
        return self.conf2 * np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def rho(self):
        return np.eye(2) - 2 * self.conf2 * np.outer(self.nu, self.nu)

    def _check(self, zeta):
        zn = self.inner(zeta, self.nu)
        if abs(zn) < self.tol:
            raise TangentialDirection(f"|<zeta, nu>| = {abs(zn):.2e} below {self.tol:.1e}")
        return zn

    def phi(self, zeta):
        """phi_zeta xi = xi - <xi, nu>/<zeta, nu> zeta."""
        zeta = np.asarray(zeta, float)
        zn = self._check(zeta)
        return np.eye(2) - self.conf2 * np.outer(zeta, self.nu) / zn

    def shape(self):
        """Shape operator X -> nabla_X nu = kappa <X, T> T."""
        return self.kappa * self.conf2 * np.outer(self.T, self.T)

    def Phi(self, zeta):
        """Phi_zeta xi = 2(<s phi xi, zeta> nu + <nu, zeta> s phi xi)."""
        zeta = np.asarray(zeta, float)
        sp = self.shape() @ self.phi(zeta)
        return 2 * (self.conf2 * np.outer(self.nu, zeta) + self.inner(self.nu, zeta) * np.eye(2)) @ sp


def phi_project(maps: ReflectionJumpMaps, zeta, xi):
    return maps.phi(zeta) @ np.asarray(xi, float)


def Phi_map(maps: ReflectionJumpMaps, zeta, xi):
    return maps.Phi(zeta) @ np.asarray(xi, float)


def reflect_jacobi(maps: ReflectionJumpMaps, J_minus, DJ_minus, zeta_minus):
    """Forward jump: (J-, D_tJ-) -> (J+, D_tJ+)."""
    rho = maps.rho()
    Jm = np.asarray(J_minus, float)
    Wm = np.asarray(DJ_minus, float)
    return Jm @ rho.T, Wm @ rho.T - Jm @ maps.Phi(zeta_minus).T


def unreflect_jacobi(maps: ReflectionJumpMaps, J_plus, DJ_plus, zeta_plus):
    """Backward jump: (J+, D_tJ+) -> (J-, D_tJ-), using the outgoing velocity."""
    rho = maps.rho()
    Jp = np.asarray(J_plus, float)
    Wp = np.asarray(DJ_plus, float)
    return Jp @ rho.T, Wp @ rho.T - Jp @ maps.Phi(zeta_plus).T


def reflection_identities(maps: ReflectionJumpMaps, zeta):
    """Max-norm errors of the eight algebraic identities of the jump maps."""
    rho = maps.rho()
    phi = maps.phi(zeta)
    rz = rho @ zeta
    I = np.eye(2)

    def err(a, b):
        return float(np.max(np.abs(a - b)))

    return {
        "rho_rho": err(rho @ rho, I),
        "phi_idempotent": err(phi @ phi, phi),
        "rho_phi": err(rho @ phi, phi),
        "phi_minus": err(maps.phi(-zeta), phi),
        "phi_rho": err(maps.phi(rz) @ rho, phi),
        "phi_zeta_zeta": float(np.max(np.abs(phi @ zeta))),
        "Phi_minus": err(maps.Phi(-zeta), -maps.Phi(zeta)),
        "Phi_rho": err(maps.Phi(rz) @ rho, -rho @ maps.Phi(zeta)),
    }


# ---------------------------------------------------------------------------
# propagation


@dataclass
class JacobiFrame:
    t: np.ndarray
    J: np.ndarray
    DJ: np.ndarray
    seg: np.ndarray
    jumps: list = field(default_factory=list)  # (t, J-, DJ-, J+, DJ+, incidence)
    x: np.ndarray | None = None
    theta: np.ndarray | None = None

    def energy(self, surface: ConformalSurface):
        """|J|_g^2 + |D_tJ|_g^2 at every sample."""
        c2 = np.exp(2 * surface.lam_value(self.x))
        return c2 * (np.sum(self.J**2, axis=-1) + np.sum(self.DJ**2, axis=-1))


def _jacobi_rhs(surface, x, th, J, W):
    lam = surface.lam_value(x)
    g = surface.grad_lambda(x)
    e = np.exp(-lam)
    c, s = np.cos(th), np.sin(th)
    v = e[:, None] * np.stack([c, s], axis=-1)
    dth = e * (g[:, 1] * c - g[:, 0] * s)
    K = surface.gauss_curvature(x)
    Jv = np.exp(2 * lam) * np.sum(J * v, axis=-1)
    dJ = W - surface.gamma_contract(x, v, J)
    dW = -surface.gamma_contract(x, v, W) - K[:, None] * (J - Jv[:, None] * v)
    return v, dth, dJ, dW


def _rk4_jacobi(surface, x, th, J, W, h):
    hx = h[:, None]
    k1 = _jacobi_rhs(surface, x, th, J, W)
    k2 = _jacobi_rhs(surface, x + 0.5 * hx * k1[0], th + 0.5 * h * k1[1], J + 0.5 * hx * k1[2], W + 0.5 * hx * k1[3])
    k3 = _jacobi_rhs(surface, x + 0.5 * hx * k2[0], th + 0.5 * h * k2[1], J + 0.5 * hx * k2[2], W + 0.5 * hx * k2[3])
    k4 = _jacobi_rhs(surface, x + hx * k3[0], th + h * k3[1], J + hx * k3[2], W + hx * k3[3])
    Jn = J + hx / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    Wn = W + hx / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return Jn, Wn


def propagate_jacobi_batch(scenario: Scenario, rays, J0, DJ0):
    """Propagate one Jacobi field per ray along recorded broken rays.

    ``J0``, ``DJ0`` have shape (n_rays, 2).  Rays sharing the same grid may be
    repeated to carry several fields.
    """
    surface = scenario.surface
    n = len(rays)
    if n == 0:
        return []
    for r in rays:
        if r.termination.value == "tangential_abort":
            raise TangentialDirection("ray ended in a tangential reflection")
    lens = np.array([len(r.t) for r in rays])
    N = int(lens.max())
    T = np.full((n, N), np.nan)
    X = np.zeros((n, N, 2))
    TH = np.zeros((n, N))
    for i, r in enumerate(rays):
        T[i, : lens[i]] = r.t
        X[i, : lens[i]] = r.x
        TH[i, : lens[i]] = r.theta
    Jout = np.zeros((n, N, 2))
    Wout = np.zeros((n, N, 2))
    J = np.array(J0, float).reshape(n, 2).copy()
    W = np.array(DJ0, float).reshape(n, 2).copy()
    Jout[:, 0], Wout[:, 0] = J, W
    jumps = [[] for _ in range(n)]
    for k in range(N - 1):
        valid = k + 1 < lens
        if not np.any(valid):
            break
        h = T[:, k + 1] - T[:, k]
        refl = valid & (h <= 0)
        step = valid & (h > 0)
        if np.any(step):
            idx = np.flatnonzero(step)
            Jn, Wn = _rk4_jacobi(surface, X[idx, k], TH[idx, k], J[idx], W[idx], h[idx])
            J[idx], W[idx] = Jn, Wn
        for i in np.flatnonzero(refl):
            maps = ReflectionJumpMaps.at(surface, scenario.obstacle, X[i, k], tol=scenario.tangential_abort_tol, check=False)
            zeta = surface.unit_vector(X[i, k], TH[i, k])
            Jp, Wp = reflect_jacobi(maps, J[i], W[i], zeta)
            inc = float(maps.inner(zeta, maps.nu))
            jumps[i].append((float(T[i, k]), J[i].copy(), W[i].copy(), Jp.copy(), Wp.copy(), inc))
            J[i], W[i] = Jp, Wp
        Jout[valid, k + 1] = J[valid]
        Wout[valid, k + 1] = W[valid]
    return [
        JacobiFrame(
            t=rays[i].t,
            J=Jout[i, : lens[i]],
            DJ=Wout[i, : lens[i]],
            seg=rays[i].seg,
            jumps=jumps[i],
            x=rays[i].x,
            theta=rays[i].theta,
        )
        for i in range(n)
    ]


def propagate_jacobi(scenario: Scenario, ray: BrokenRay, J0, DJ0) -> JacobiFrame:
    return propagate_jacobi_batch(scenario, [ray], np.reshape(J0, (1, 2)), np.reshape(DJ0, (1, 2)))[0]


def initial_covariant_derivative(surface: ConformalSurface, x0, theta0, dx, dtheta):
    """D_s v at s = 0 for the family (x0 + s dx, theta0 + s dtheta)."""
    x0 = np.asarray(x0, float)
    dx = np.asarray(dx, float)
    e = np.exp(-surface.lam_value(x0))
    om = np.array([np.cos(theta0), np.sin(theta0)])
    om_perp = np.array([-np.sin(theta0), np.cos(theta0)])
    gl = surface.grad_lambda(x0)
    dv = e * (-(gl @ dx) * om + dtheta * om_perp)
    v = e * om
    return dv + surface.gamma_contract(x0, dx, v)


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class FDCheck:
    s_values: np.ndarray
    errors: np.ndarray
    order: float
    n_reflections: int
    n_compare: list


def _fit_order(s, e):
    s, e = np.asarray(s, float), np.asarray(e, float)
    ok = e > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(s[ok]), np.log(e[ok]), 1)[0])


def fd_variation_check(scenario: Scenario, x0, theta0, dx, dtheta, s_values=(1e-2, 1e-3, 1e-4)) -> FDCheck:
    """Compare the propagated Jacobi field with central differences of traced rays.

    The variation is (x0 + s dx, theta0 + s dtheta).  Comparison times are
    the base ray's grid times, kept more than 2 s away from every reflection
    time of the base and perturbed rays and from their exit times.
    """
    surface = scenario.surface
    x0 = np.asarray(x0, float)
    dx = np.asarray(dx, float)
    s_values = np.asarray(s_values, float)
    starts_x = [x0]
    starts_t = [theta0]
    for s in s_values:
        for sg in (1.0, -1.0):
            starts_x.append(x0 + sg * s * dx)
            starts_t.append(theta0 + sg * s * dtheta)
    res = trace_rays(scenario, np.array(starts_x), np.array(starts_t), record=True)
    base = res.rays[0]
    J0 = dx
    W0 = initial_covariant_derivative(surface, x0, theta0, dx, dtheta)
    frame = propagate_jacobi(scenario, base, J0, W0)
    errors, counts = [], []
    for k, s in enumerate(s_values):
        rp, rm = res.rays[1 + 2 * k], res.rays[2 + 2 * k]
        if rp.reflection_count != base.reflection_count or rm.reflection_count != base.reflection_count:
            raise ReflectionPatternChanged(
                f"s = {s:g}: reflection counts {rm.reflection_count}, {base.reflection_count}, {rp.reflection_count}"
            )
        bad_t = [ev.t for r in (base, rp, rm) for ev in r.reflections]
        t_end = min(base.tau, rp.tau, rm.tau) - 2 * s
        tq = base.t
        keep = (tq > 2 * s) & (tq < t_end)
        for tb in bad_t:
            keep &= np.abs(tq - tb) > 2 * s
        # drop duplicated reflection samples
        keep &= np.concatenate([[True], np.diff(tq) > 0])
        idx = np.flatnonzero(keep)
        if len(idx) == 0:
            errors.append(np.nan)
            counts.append(0)
            continue
        xp, _ = rp.state_at(tq[idx])
        xm, _ = rm.state_at(tq[idx])
        fd = (xp - xm) / (2 * s)
        errors.append(float(np.max(np.linalg.norm(fd - frame.J[idx], axis=-1))))
        counts.append(len(idx))
    errors = np.array(errors)
    return FDCheck(s_values, errors, _fit_order(s_values, errors), base.reflection_count, counts)


# ---------------------------------------------------------------------------
# growth diagnostics


@dataclass
class Envelope:
    A: float
    B: float
    violations: int
    n_samples: int
    held_out_violations: int | None = None


def _energy_ratios(scenario, frames):
    ts, ratios = [], []
    for f in frames:
        E = f.energy(scenario.surface)
        ts.append(f.t)
        ratios.append(E / E[0])
    return np.concatenate(ts), np.concatenate(ratios)


def fit_envelope(t, ratio, n_grid=2001):
    """Smallest (A, B) with ratio <= A exp(B t), minimizing log A + B t_max / 2."""
    logr = np.log(ratio)
    tmax = float(np.max(t)) if len(t) else 1.0
    # candidate slopes: 0 up to the steepest needed slope from the origin
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(t > 0, logr / t, 0.0)
    bmax = max(float(np.max(slopes)), 0.0)
    best = None
    for B in np.linspace(0.0, bmax, n_grid):
        logA = max(float(np.max(logr - B * t)), 0.0)
        score = logA + B * tmax / 2
        if best is None or score < best[0]:
            best = (score, logA, B)
    _, logA, B = best
    return float(np.exp(logA)), float(B)


def count_violations(t, ratio, A, B, rtol=1e-12):
    return int(np.sum(ratio > A * np.exp(B * t) * (1 + rtol)))


def growth_envelope(scenario: Scenario, frames, held_out=None) -> Envelope:
    """Fit the envelope on ``frames``; optionally count violations on ``held_out`` frames."""
    t, r = _energy_ratios(scenario, frames)
    A, B = fit_envelope(t, r)
    env = Envelope(A, B, count_violations(t, r, A, B), len(t))
    if held_out is not None:
        th, rh = _energy_ratios(scenario, held_out)
        env.held_out_violations = count_violations(th, rh, A, B)
    return env


def gronwall_constant(scenario: Scenario, n_grid=64):
    from .raytrace import sample_interior

    pts = sample_interior(scenario, n_grid)
    kmax = float(np.max(np.abs(scenario.surface.gauss_curvature(pts)))) if len(pts) else 0.0
    return 2.0 * max(1.0, kmax)


def gronwall_segment_check(scenario: Scenario, frame: JacobiFrame, C=None, slack=1e-9):
    """Worst excess of log(E(t)/E(t_start)) - C (t - t_start) over the segments (<= 0 passes)."""
    if C is None:
        C = gronwall_constant(scenario)
    E = frame.energy(scenario.surface)
    worst = -np.inf
    for k in np.unique(frame.seg):
        idx = np.flatnonzero(frame.seg == k)
        t0 = frame.t[idx[0]]
        val = np.log(E[idx] / E[idx[0]]) - C * (frame.t[idx] - t0)
        worst = max(worst, float(np.max(val)))
    return worst - slack


def jump_ratios(scenario: Scenario, frame: JacobiFrame):
    """(incidence, E+/E-) at every reflection of the frame."""
    out = []
    for t, Jm, Wm, Jp, Wp, inc in frame.jumps:
        out.append((abs(inc), (Jp @ Jp + Wp @ Wp) / (Jm @ Jm + Wm @ Wm)))
    return np.array(out).reshape(-1, 2)


@dataclass
class BlowupFit:
    incidences: np.ndarray
    magnitudes: np.ndarray
    exponent: float
    jump_constant_linear: float
    jump_constant_square: float


def blowup_scaling(surface: ConformalSurface, curve: BoundaryCurve, x, incidences=None) -> BlowupFit:
    """Fit |D_tJ+| against the incidence <zeta, nu> for J- perpendicular to zeta, D_tJ- = 0.

    Also reports the smallest C with E+/E- <= C / c and E+/E- <= C / c^2 over
    the sweep, with E = |J|^2 + |D_tJ|^2 and c the incidence.
    """
    if incidences is None:
        incidences = np.geomspace(1e-3, 1e-1, 21)
    maps = ReflectionJumpMaps.at(surface, curve, x, tol=0.0, check=False)
    mags, ratios = [], []
    e = np.sqrt(maps.conf2)
    for c in incidences:
        s = np.sqrt(1 - c * c)
        zeta = c * maps.nu + s * maps.T
        Jm = -s * maps.nu + c * maps.T  # unit, g-orthogonal to zeta
        Jp, Wp = reflect_jacobi(maps, Jm, np.zeros(2), zeta)
        mags.append(e * np.linalg.norm(Wp))
        ratios.append(maps.conf2 * (Jp @ Jp + Wp @ Wp) / (maps.conf2 * (Jm @ Jm)))
    mags, ratios = np.array(mags), np.array(ratios)
    slope = float(np.polyfit(np.log(incidences), np.log(mags), 1)[0])
    return BlowupFit(
        np.asarray(incidences),
        mags,
        slope,
        float(np.max(ratios * incidences)),
        float(np.max(ratios * incidences**2)),
    )
