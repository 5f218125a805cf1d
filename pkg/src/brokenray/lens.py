"""Linearization of lens data along a conformal family of metrics.

For g_s = exp(2 s h) g_0 and a broken ray of g_s issued from a fixed phase
point, the first variation of length gives

    (1/2) int_0^tau d/ds g_s(gamma', gamma') dt
        = d/ds tau_s - <gamma'(tau), d/ds p_s>_{g_0} + <v_0, d/ds x_s>_{g_0},

whose left side is the broken ray transform of h.  The reflection points
contribute nothing because the velocity jump is normal to the obstacle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RayDidNotExit, ReflectionPatternChanged
from .geometry import ConformalSurface
from .profiles import Constant, Profile
from .raytrace import Scenario, Termination, trace_rays
from .transform import brt_forward

STENCILS = {
    3: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    5: (np.array([-2, -1, 1, 2]), np.array([1, -8, 8, -1]) / 12.0),
}


@dataclass
class MetricFamily:
    """lam_s = lam_0 + s h, i.e. g_s = exp(2 s h) g_0."""

    base: Profile
    h: Profile

    def lam(self, s):
        return self.base if s == 0 else self.base + float(s) * self.h

    def surface(self, s):
        return ConformalSurface(self.lam(s))

    def scenario(self, scenario: Scenario, s):
        return scenario.replace(surface=self.surface(s))

    def metric_derivative(self, x):
        """d/ds g_s at s = 0 as a multiple of g_0: 2 h(x)."""
        return 2.0 * self.h.value(x)


def family_for(scenario: Scenario, h: Profile) -> MetricFamily:
    return MetricFamily(scenario.surface.lam, h)


@dataclass
class TravelData:
    tau: float
    exit_point: np.ndarray
    exit_theta: float
    exit_velocity: np.ndarray  # in g_s
    exit_arclength: float  # Euclidean arclength coordinate on E
    n_reflections: int
    reflection_points: list


def perturbed_travel_data(scenario: Scenario, family: MetricFamily, x0, theta0, s) -> TravelData:
    """Trace the g_s broken ray from x0 with Euclidean direction angle theta0 (g_s-unit)."""
    sc = family.scenario(scenario, s)
    res = trace_rays(sc, np.asarray(x0, float)[None, :], np.array([float(theta0)]), record=True)
    if res.status[0] != Termination.EXIT_AT_E.value:
        raise RayDidNotExit(f"g_s ray at s = {s} terminated with {res.status[0]}")
    p = res.x_end[0]
    th = float(res.theta_end[0])
    E = sc.outer
    sig = float(E.shape.arclength(np.array(E.param(p, check=False))))
    v = sc.surface.unit_vector(p, th)
    pts = [r.x.copy() for r in res.rays[0].reflections]
    return TravelData(float(res.tau[0]), p, th, v, sig, int(res.n_reflections[0]), pts)


def _wrap(d, period):
    return (d + 0.5 * period) % period - 0.5 * period


def _exit_tangent(scenario: Scenario, p):
    """Euclidean unit tangent of E at p in the direction of increasing arclength."""
    t = scenario.outer.param(p, check=False)
    d1 = scenario.outer.shape.d1(np.array(t))
    return d1 / np.linalg.norm(d1)


@dataclass
class LensReport:
    lhs: float
    rhs_tau: float
    rhs_endpoint: float
    rhs_entry: float
    residual: float
    residual_without_endpoint: float
    n_reflections: int
    s_fd: float
    factor: str

    def to_dict(self):
        return dict(self.__dict__)


def _fd(values, s_fd, weights):
    return float(np.dot(weights, values) / s_fd)


def linearization_residual(
    scenario: Scenario,
    family: MetricFamily,
    x0,
    theta0,
    s_fd=1e-3,
    stencil=5,
    factor="first_variation",
    entry_direction=None,
) -> LensReport:
    """|LHS - (d tau - <gamma'(tau), d p> + <v_0, d x_0>)| by central differences in s.

    ``factor='first_variation'`` takes LHS = (1/2) int d/ds g_s(gamma', gamma')
    = int h; ``factor='literal'`` takes 2 int d/ds |gamma'|^2 = 4 int h, kept
    to document that this normalization does not balance.
    ``entry_direction`` (Euclidean unit tangent of E at x0, scaled) moves the
    entry point along E with s; by default x0 is fixed.
    """
    if stencil not in STENCILS:
        raise ValueError("stencil must be 3 or 5")
    offsets, weights = STENCILS[stencil]
    x0 = np.asarray(x0, float)
    # the family's base metric defines the unperturbed scenario
    scenario = family.scenario(scenario, 0.0)
    E = scenario.outer

    def entry(s):
        if entry_direction is None:
            return x0
        # move along E by arclength s * |entry_direction|
        sig0 = float(E.shape.arclength(np.array(E.param(x0, check=False))))
        sign = np.sign(np.dot(entry_direction, _exit_tangent(scenario, x0)))
        sp = E.shape.param_at_arclength(np.array((sig0 + sign * s * np.linalg.norm(entry_direction)) % E.length))
        return E.point(sp)

    base = perturbed_travel_data(scenario, family, x0, theta0, 0.0)
    data = [perturbed_travel_data(scenario, family, entry(k * s_fd), theta0, k * s_fd) for k in offsets]
    counts = {d.n_reflections for d in data}
    if counts != {base.n_reflections}:
        raise ReflectionPatternChanged(
            f"reflection counts {sorted(counts)} across the stencil differ from the base count {base.n_reflections}"
        )
    d_tau = _fd([d.tau for d in data], s_fd, weights)
    d_sig = _fd([_wrap(d.exit_arclength - base.exit_arclength, E.length) for d in data], s_fd, weights)
    dp = d_sig * _exit_tangent(scenario, base.exit_point)
    sf = scenario.surface
    end_term = float(sf.inner(base.exit_point, base.exit_velocity, dp))
    entry_term = 0.0
    if entry_direction is not None:
        v0 = sf.unit_vector(x0, float(theta0))
        dx0 = np.linalg.norm(entry_direction) * np.sign(np.dot(entry_direction, _exit_tangent(scenario, x0)))
        entry_term = float(sf.inner(x0, v0, dx0 * _exit_tangent(scenario, x0)))
    integral = brt_forward(scenario, family.h, x0, theta0).value
    if factor == "first_variation":
        lhs = integral
    elif factor == "literal":
        lhs = 4.0 * integral
    else:
        raise ValueError("factor must be 'first_variation' or 'literal'")
    rhs = d_tau - end_term + entry_term
    return LensReport(
        lhs=lhs,
        rhs_tau=d_tau,
        rhs_endpoint=end_term,
        rhs_entry=entry_term,
        residual=abs(lhs - rhs),
        residual_without_endpoint=abs(lhs - (d_tau + entry_term)),
        n_reflections=base.n_reflections,
        s_fd=s_fd,
        factor=factor,
    )


def segment_variation_check(scenario: Scenario, family: MetricFamily, x0, theta0, entry_speed=1.0, s_fd=1e-3, stencil=5):
    """Single-segment first variation with the entry point moving along E.

    The ray must not reach the obstacle for any s in the stencil.
    """
    rep = linearization_residual(
        scenario, family, x0, theta0, s_fd, stencil, entry_direction=entry_speed * _exit_tangent(scenario, np.asarray(x0, float))
    )
    if rep.n_reflections != 0:
        raise ReflectionPatternChanged("segment check needs a ray without reflections")
    return rep


def pattern_stability_threshold(scenario: Scenario, family: MetricFamily, x0, theta0, s_max=0.5, n=24):
    """Largest s on a geometric grid in (0, s_max] with matching reflection counts at +-s (and all below)."""
    base = perturbed_travel_data(scenario, family, x0, theta0, 0.0).n_reflections
    ok = 0.0
    for s in np.geomspace(s_max / 2 ** (n - 1), s_max, n):
        try:
            same = all(perturbed_travel_data(scenario, family, x0, theta0, sg * s).n_reflections == base for sg in (1, -1))
        except RayDidNotExit:
            same = False
        if not same:
            break
        ok = float(s)
    return ok


def _segment_length(surface: ConformalSurface, a, b, n=65):
    """g-length of the straight Euclidean segment a -> b (Simpson)."""
    t = np.linspace(0, 1, n)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    w = np.ones(n)
    w[1:-1:2], w[2:-1:2] = 4, 2
    return float(np.linalg.norm(b - a) * np.sum(w * np.exp(surface.lam_value(pts))) / (3 * (n - 1)))


def is_minimizing(scenario: Scenario, x0, theta0, n_competitors=256):
    """Best-effort: False when a competing polygonal path through one obstacle point is shorter.

    Competitors are straight Euclidean pieces x0 -> q -> p with q on the
    obstacle (and x0 -> p when that chord stays in M), measured in g.  A True
    result only means no shorter competitor was found.
    """
    x0 = np.asarray(x0, float)
    res = trace_rays(scenario, x0[None, :], np.array([float(theta0)]))
    if res.status[0] != Termination.EXIT_AT_E.value:
        raise RayDidNotExit("ray did not exit")
    tau, p = float(res.tau[0]), res.x_end[0]
    sf = scenario.surface

    def in_M(a, b):
        t = np.linspace(0, 1, 200)[1:-1]
        return bool(np.all(scenario.inside(a[None, :] + t[:, None] * (b - a)[None, :], tol=1e-9)))

    best = np.inf
    if in_M(x0, p):
        best = _segment_length(sf, x0, p)
    if scenario.obstacle is not None:
        R = scenario.obstacle
        for t in np.linspace(0, R.period, n_competitors, endpoint=False):
            q = R.point(np.array(t))
            if in_M(x0, q) and in_M(q, p):
                best = min(best, _segment_length(sf, x0, q) + _segment_length(sf, q, p))
    return bool(best >= tau * (1 - 1e-9))


def constant_rescaling_check(scenario: Scenario, x0, theta0, s):
    """tau_s / (exp(s) tau_0) for h = 1; equals 1 on any scenario."""
    fam = MetricFamily(scenario.surface.lam, Constant(1.0))
    t0 = perturbed_travel_data(scenario, fam, x0, theta0, 0.0).tau
    ts = perturbed_travel_data(scenario, fam, x0, theta0, s).tau
    return ts / (np.exp(s) * t0)
