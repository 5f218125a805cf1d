"""Conformal surfaces g = exp(2*lam) * delta, boundary frames and curvature.

Directions on the unit circle bundle are stored as angles: the unit vector at
``x`` with angle ``theta`` is ``exp(-lam(x)) * (cos theta, sin theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NoDoubleHit, PointNotOnBoundary
from .profiles import Constant, Profile
from .shapes import Shape


class ConformalSurface:
    """Metric ``exp(2 lam) delta`` on the plane, ``lam`` given by a profile."""

    def __init__(self, lam: Profile | None = None):
        self.lam = lam if lam is not None else Constant(0.0)

    def lam_value(self, x):
        return self.lam.value(x)

    def grad_lambda(self, x):
        return self.lam.grad(x)

    def hess_lambda(self, x):
        return self.lam.hess(x)

    def conformal_factor(self, x):
        """exp(lam), the ratio of metric length to Euclidean length."""
        return np.exp(self.lam.value(x))

    def metric(self, x):
        x = np.asarray(x, float)
        return np.exp(2 * self.lam.value(x))[..., None, None] * np.eye(2)

    def inner(self, x, a, b):
        return np.exp(2 * self.lam.value(x)) * np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def norm(self, x, a):
        return np.exp(self.lam.value(x)) * np.linalg.norm(a, axis=-1)

    def christoffel(self, x):
        """Gamma[..., l, j, k] for the conformal metric."""
        g = self.lam.grad(x)
        eye = np.eye(2)
        # d_j lam delta^l_k + d_k lam delta^l_j - d_l lam delta_jk
        return (
            np.einsum("...j,lk->...ljk", g, eye)
            + np.einsum("...k,lj->...ljk", g, eye)
            - np.einsum("...l,jk->...ljk", g, eye)
        )

    def gamma_contract(self, x, a, b):
        """Gamma^l_{jk} a^j b^k without forming the full array."""
        g = self.lam.grad(x)
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        ga = np.sum(g * a, axis=-1)[..., None]
        gb = np.sum(g * b, axis=-1)[..., None]
        ab = np.sum(a * b, axis=-1)[..., None]
        return ga * b + gb * a - ab * g

    def gauss_curvature(self, x):
        h = self.lam.hess(x)
        return -np.exp(-2 * self.lam.value(x)) * (h[..., 0, 0] + h[..., 1, 1])

    def unit_vector(self, x, theta):
        theta = np.asarray(theta, float)
        return np.exp(-self.lam.value(x))[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def angle_of(self, v):
        v = np.asarray(v, float)
        return np.mod(np.arctan2(v[..., 1], v[..., 0]), 2 * np.pi)

    def geodesic_rhs(self, x, theta):
        """Time derivatives (dx/dt, dtheta/dt) of the unit-speed geodesic flow."""
        lam = self.lam.value(x)
        g = self.lam.grad(x)
        e = np.exp(-lam)
        c, s = np.cos(theta), np.sin(theta)
        dx = e[..., None] * np.stack([c, s], axis=-1)
        dth = e * (g[..., 1] * c - g[..., 0] * s)
        return dx, dth

    def to_dict(self):
        return self.lam.to_dict()


def christoffel(surface: ConformalSurface, x):
    return surface.christoffel(x)


def gauss_curvature(surface: ConformalSurface, x):
    return surface.gauss_curvature(x)


class BoundaryCurve:
    """A boundary component of M: the outer curve E or the obstacle curve R.

    ``event(x)`` is positive outside M.  The frame convention: ``nu`` points out
    of M (into the obstacle on R), ``T`` is ``nu`` rotated by +90 degrees.
    """

    def __init__(self, kind: str, shape: Shape, tol: float = 1e-8):
        if kind not in ("outer", "obstacle"):
            raise ValueError("kind must be 'outer' or 'obstacle'")
        self.kind = kind
        self.shape = shape
        self.tol = tol
        self._sgn = 1.0 if kind == "outer" else -1.0

    @property
    def period(self):
        return self.shape.period

    @property
    def length(self):
        return self.shape.length

    def event(self, x):
        return self._sgn * self.shape.sdf(x)

    def param(self, x, check=True):
        x = np.asarray(x, float)
        t = self.shape.closest(x)
        if check:
            d = np.abs(self.shape.sdf(x))
            if np.any(d > self.tol):
                raise PointNotOnBoundary(f"point is {np.max(d):.3e} away from the {self.kind} curve")
        return t

    def point(self, t):
        return self.shape.point(t)

    def normal_e(self, t):
        """Euclidean unit normal pointing out of M."""
        return self._sgn * self.shape.normal(t)

    def tangent_e(self, t):
        n = self.normal_e(t)
        return np.stack([-n[..., 1], n[..., 0]], axis=-1)

    def curvature_e(self, t):
        """Euclidean curvature of the curve traversed along ``tangent_e``."""
        return self._sgn * self.shape.curvature(t)

    def tangent_angle(self, t):
        te = self.tangent_e(t)
        return np.arctan2(te[..., 1], te[..., 0])

    def traversal_sign(self):
        """+1 if increasing shape parameter runs along ``tangent_e``."""
        return self._sgn


def boundary_frame(surface: ConformalSurface, curve: BoundaryCurve, x, check=True):
    """g-unit normal ``nu`` (out of M) and tangent ``T`` at boundary points."""
    t = curve.param(x, check=check)
    p = curve.point(t)
    e = np.exp(-surface.lam_value(p))[..., None]
    return e * curve.normal_e(t), e * curve.tangent_e(t)


def signed_curvature(surface: ConformalSurface, curve: BoundaryCurve, x, check=True):
    """kappa = -<D_t T, nu> via alpha' - eta(T).

    alpha' is the rate of turning of the Euclidean tangent angle per unit
    g-length; eta = d2 lam dx1 - d1 lam dx2.
    """
    t = curve.param(x, check=check)
    p = curve.point(t)
    lam = surface.lam_value(p)
    g = surface.grad_lambda(p)
    te = curve.tangent_e(t)
    alpha_dot = np.exp(-lam) * curve.curvature_e(t)
    T = np.exp(-lam)[..., None] * te
    eta = g[..., 1] * T[..., 0] - g[..., 0] * T[..., 1]
    return alpha_dot - eta


def shape_operator(surface: ConformalSurface, curve: BoundaryCurve, x, X, check=True):
    """s(X) = nabla_X nu = kappa <X, T>_g T for X tangent to the curve."""
    nu, T = boundary_frame(surface, curve, x, check=check)
    kappa = signed_curvature(surface, curve, x, check=check)
    xT = surface.inner(x, X, T)
    return (kappa * xT)[..., None] * T


# --------------------------------------------------------------------------
# Gauss-Bonnet diagnostic for a geodesic chord with both endpoints on a curve


@dataclass
class GaussBonnetReport:
    residual: float
    area_term: float
    boundary_term: float
    alpha: float
    beta: float
    chord_length: float


def _simpson_weights(n, h):
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson needs an odd number (>= 3) of samples")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _curvature_integral(surface, pts, dpts, weights, n_gl=32):
    """int K dA_g over the region enclosed by the loop, by Green's theorem.

    With P(x, y) = int_{x_ref}^x F(s, y) ds and F = K exp(2 lam) = -laplace(lam),
    the area integral equals the loop integral of P dy.
    """
    xg, wg = leggauss(n_gl)
    x_ref = float(np.min(pts[:, 0])) - 1.0
    half = 0.5 * (pts[:, 0] - x_ref)
    s = x_ref + half[:, None] * (xg[None, :] + 1.0)
    q = np.stack([s, np.broadcast_to(pts[:, 1:2], s.shape)], axis=-1)
    h = surface.hess_lambda(q)
    P = half * np.sum(wg[None, :] * -(h[..., 0, 0] + h[..., 1, 1]), axis=-1)
    return float(np.sum(weights * P * dpts[:, 1]))


def _turn(u, w):
    return float(np.arctan2(u[0] * w[1] - u[1] * w[0], u @ w))


def gauss_bonnet_check(surface, curve, chord_x, chord_theta, dt, n_arc=512):
    """Gauss-Bonnet residual for the region cut off by a geodesic chord.

    ``chord_x`` (n, 2) and ``chord_theta`` (n,) sample a unit-speed geodesic on
    a uniform time grid of step ``dt`` (n odd), starting and ending on
    ``curve``.  The region is bounded by the chord and the boundary arc that
    closes it counterclockwise.  Returns
    |int K dA + int k_g ds - (2 pi - (alpha + beta))| where alpha, beta are the
    exterior turning angles at the two corners.
    """
    chord_x = np.asarray(chord_x, float)
    chord_theta = np.asarray(chord_theta, float)
    shape = curve.shape
    t_a = float(shape.closest(chord_x[0]))
    t_b = float(shape.closest(chord_x[-1]))
    period = shape.period
    xg, wg = leggauss(n_arc)

    def arc(direction):
        span = np.mod(direction * (t_a - t_b), period)
        tt = t_b + direction * 0.5 * span * (xg + 1.0)
        return tt, 0.5 * span * wg, direction * shape.d1(tt), direction

    w_chord = _simpson_weights(len(chord_x), dt)
    dir_chord = np.stack([np.cos(chord_theta), np.sin(chord_theta)], axis=-1)
    vel_chord = np.exp(-surface.lam_value(chord_x))[:, None] * dir_chord

    best = None
    for direction in (1.0, -1.0):
        tt, wt, dp, _ = arc(direction)
        # enclosed signed area via the loop integral of x dy
        area = np.sum(w_chord * chord_x[:, 0] * vel_chord[:, 1]) + np.sum(wt * shape.point(tt)[:, 0] * dp[:, 1])
        if area > 0:
            best = (tt, wt, dp, direction)
            break
    if best is None:
        raise NoDoubleHit("chord and boundary do not enclose a positively oriented region")
    tt, wt, dp, direction = best
    arc_p = shape.point(tt)

    k_area = _curvature_integral(
        surface,
        np.concatenate([chord_x, arc_p]),
        np.concatenate([vel_chord, dp]),
        np.concatenate([w_chord, wt]),
    )

    # geodesic curvature of the arc w.r.t. the region on its left
    d2 = shape.d2(tt)
    speed = np.linalg.norm(dp, axis=-1)
    ke = (dp[:, 0] * d2[:, 1] - dp[:, 1] * d2[:, 0]) / speed**3
    te = dp / speed[:, None]
    n_out = np.stack([te[:, 1], -te[:, 0]], axis=-1)
    lam = surface.lam_value(arc_p)
    kg = np.exp(-lam) * (ke + np.sum(surface.grad_lambda(arc_p) * n_out, axis=-1))
    b_term = float(np.sum(wt * kg * np.exp(lam) * speed))

    def unit(v):
        return v / np.linalg.norm(v)

    # corner tangents at the arc endpoints themselves, not at the quadrature nodes
    beta = _turn(unit(dir_chord[-1]), unit(direction * shape.d1(np.array(t_b))))
    alpha = _turn(unit(direction * shape.d1(np.array(t_a))), unit(dir_chord[0]))
    residual = abs(k_area + b_term - (2 * np.pi - (alpha + beta)))
    return GaussBonnetReport(residual, k_area, b_term, alpha, beta, dt * (len(chord_x) - 1))
