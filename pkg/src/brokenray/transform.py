"""The broken ray transform u^f(x, v) = int_0^tau f(gamma(t)) dt and its checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ObstacleInTheWay, RayDidNotExit, ReflectionPatternChanged
from .profiles import Profile
from .raytrace import Fan, Observer, Scenario, Termination, rk4_step, trace_rays


class SimpsonObserver(Observer):
    """Accumulates composite Simpson sums of several fields over each traced step.

    The step midpoint comes from the cubic Hermite interpolant of the two
    step-end states, so each step contributes O(h^5) error.
    """

    def __init__(self, surface, fields):
        self.surface = surface
        self.fields = list(fields)

    def on_start(self, n):
        self.acc = np.zeros((n, len(self.fields)))

    def on_step(self, ids, t0, x0, th0, t1, x1, th1):
        h = t1 - t0
        v0, _ = self.surface.geodesic_rhs(x0, th0)
        v1, _ = self.surface.geodesic_rhs(x1, th1)
        xm = 0.5 * (x0 + x1) + (h / 8.0)[:, None] * (v0 - v1)
        for j, f in enumerate(self.fields):
            self.acc[ids, j] += h / 6.0 * (f.value(x0) + 4.0 * f.value(xm) + f.value(x1))


@dataclass
class TransformSample:
    x: np.ndarray
    theta: float
    value: float
    tau: float
    n_reflections: int
    status: str


@dataclass
class FanTransform:
    values: np.ndarray  # (n_rays,) or (n_rays, n_fields)
    tau: np.ndarray
    n_reflections: np.ndarray
    status: np.ndarray

    @property
    def flags(self):
        return self.status != Termination.EXIT_AT_E.value


def _as_list(f):
    return list(f) if isinstance(f, (list, tuple)) else [f]


def transform_batch(scenario: Scenario, fields, x, theta):
    """Values (n, m) of the transform of every field along every ray, plus the trace result."""
    fields = _as_list(fields)
    obs = SimpsonObserver(scenario.surface, fields)
    res = trace_rays(scenario, x, theta, observers=[obs])
    return obs.acc, res


def brt_forward(scenario: Scenario, f: Profile, x, theta) -> TransformSample:
    x = np.asarray(x, float)
    vals, res = transform_batch(scenario, [f], x[None, :], np.array([float(theta)]))
    if res.status[0] != Termination.EXIT_AT_E.value:
        raise RayDidNotExit(f"ray terminated with {res.status[0]}")
    return TransformSample(x, float(theta), float(vals[0, 0]), float(res.tau[0]), int(res.n_reflections[0]), res.status[0])


def fan_transform(scenario: Scenario, f, fan: Fan) -> FanTransform:
    fields = _as_list(f)
    vals, res = transform_batch(scenario, fields, fan.x, fan.theta)
    out = vals[:, 0] if not isinstance(f, (list, tuple)) else vals
    return FanTransform(out, res.tau, res.n_reflections, res.status)


def transport_residual(scenario: Scenario, f: Profile, x, theta, h: float) -> float:
    """|(u^f(phi_h(x, v)) - u^f(x, v)) / h + f(x)| with phi_h the broken-ray flow."""
    x = np.asarray(x, float)
    first = trace_rays(scenario, x[None, :], np.array([float(theta)]), t_max=h)
    if first.n_reflections[0] > 0:
        raise ReflectionPatternChanged("a reflection occurs within the flow step h")
    xh, th_h = rk4_step(scenario.surface, x, float(theta), h)
    vals, res = transform_batch(scenario, [f], np.stack([x, xh]), np.array([float(theta), float(th_h)]))
    if np.any(res.status != Termination.EXIT_AT_E.value):
        raise RayDidNotExit("transport residual needs exiting rays")
    if res.n_reflections[0] != res.n_reflections[1]:
        raise ReflectionPatternChanged("the advanced ray has a different reflection count")
    return float(abs((vals[1, 0] - vals[0, 0]) / h + f.value(x)))


def symmetry_residual(scenario: Scenario, f: Profile, x, theta):
    """|u^f(x, v) + u^f(x, -v) - I(f)| where I(f) integrates f along the whole broken ray through (x, v).

    ``x`` may be (2,) or (n, 2) with matching ``theta``; returns a float or an array.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    th = np.atleast_1d(np.asarray(theta, float))
    n = len(X)
    vals, res = transform_batch(scenario, [f], np.concatenate([X, X]), np.concatenate([th, th + np.pi]))
    if np.any(res.status != Termination.EXIT_AT_E.value):
        raise RayDidNotExit("both halves of the ray must exit")
    # the whole ray, traced from where the backward half leaves M
    full, res_full = transform_batch(scenario, [f], res.x_end[n:], res.theta_end[n:] + np.pi)
    if np.any(res_full.status != Termination.EXIT_AT_E.value):
        raise RayDidNotExit("through-going ray did not exit")
    out = np.abs(vals[:n, 0] + vals[n:, 0] - full[:, 0])
    return float(out[0]) if single else out


@dataclass
class BoundaryEstimate:
    estimate: float
    ratios: np.ndarray
    taus: np.ndarray


def boundary_recovery(scenario: Scenario, data, x, h: float = 0.05) -> BoundaryEstimate:
    """Estimate f(x) at x on E from transform data along short chords.

    ``data`` is a scalar field (its transform is computed) or a callable
    ``data(x, theta) -> u`` returning transform values.  Chords of Euclidean
    length about h, h/2, h/4 start at x nearly tangentially; the ratios
    u / tau are extrapolated quadratically to tau = 0.
    """
    E = scenario.outer
    x = np.asarray(x, float)
    p = E.param(x, check=True)
    te = E.tangent_e(p)
    ke = float(E.curvature_e(p))
    if ke <= 0:
        raise ObstacleInTheWay("E is not strictly convex at this point")
    base = np.arctan2(te[1], te[0])
    lengths = h / np.array([1.0, 2.0, 4.0])
    # inward rotation: the interior lies to the left of tangent_e on E
    psi = np.arcsin(np.clip(lengths * ke / 2, 0, 1))
    thetas = base + psi
    X = np.repeat(x[None, :], 3, axis=0)
    if isinstance(data, Profile):
        vals, res = transform_batch(scenario, [data], X, thetas)
        u = vals[:, 0]
    else:
        res = trace_rays(scenario, X, thetas)
        u = np.array([float(data(x, t)) for t in thetas])
    if np.any(res.n_reflections > 0):
        raise ObstacleInTheWay("a short chord hits the obstacle")
    if np.any(res.status != Termination.EXIT_AT_E.value):
        raise RayDidNotExit("short chord did not exit")
    taus = res.tau
    ratios = u / taus
    coef = np.polyfit(taus, ratios, 2)
    return BoundaryEstimate(float(np.polyval(coef, 0.0)), ratios, taus)


def holder_diagnostic(scenario: Scenario, f: Profile, x_on_R, deltas=None):
    """Empirical Hoelder exponent of theta -> u^f(x, theta) at a tangential direction on R.

    Report-only: fits log|u(theta_t + delta) - u(theta_t + delta_min/2)| against log delta.
    """
    R = scenario.obstacle
    x = np.asarray(x_on_R, float)
    p = R.param(x, check=True)
    te = R.tangent_e(p)
    base = np.arctan2(te[1], te[0])
    if deltas is None:
        deltas = np.geomspace(1e-4, 1e-1, 10)
    # rotating T_e counterclockwise turns it into M (away from the obstacle)
    ref = base + deltas[0] / 2
    thetas = np.concatenate([[ref], base + deltas])
    vals, res = transform_batch(scenario, [f], np.repeat(x[None, :], len(thetas), axis=0), thetas)
    diffs = np.abs(vals[1:, 0] - vals[0, 0])
    ok = diffs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(deltas[ok]), np.log(diffs[ok]), 1)[0])
