import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokenray import scenarios
from brokenray.errors import PointNotOnBoundary
from brokenray.geometry import (
    BoundaryCurve,
    ConformalSurface,
    boundary_frame,
    christoffel,
    gauss_curvature,
    shape_operator,
    signed_curvature,
)
from brokenray.profiles import Constant, Gaussian, Polynomial, RadialQuadratic
from brokenray.shapes import Circle, Ellipse

coords = st.floats(-0.9, 0.9)


def test_flat_christoffel_vanishes():
    sf = ConformalSurface(Constant(0.0))
    assert np.all(christoffel(sf, np.array([[0.3, -0.2], [0.0, 0.0]])) == 0)


def test_christoffel_for_linear_lambda():
    sf = ConformalSurface(Polynomial({(1, 0): 1.0}))
    G = christoffel(sf, np.array([0.4, -0.7]))
    # G[l, j, k] = Gamma^l_{jk}
    assert G[0, 0, 0] == pytest.approx(1.0)
    assert G[1, 0, 1] == pytest.approx(1.0) and G[1, 1, 0] == pytest.approx(1.0)
    assert G[0, 1, 1] == pytest.approx(-1.0)
    assert G[1, 0, 0] == pytest.approx(0.0)
    assert G[0, 0, 1] == pytest.approx(0.0) and G[0, 1, 0] == pytest.approx(0.0)
    assert G[1, 1, 1] == pytest.approx(0.0)


def _fd_christoffel(lam, x, h=1e-5):
    """Gamma from finite differences of the metric tensor g = exp(2 lam) I."""
    def g(p):
        return np.exp(2 * lam.value(p)) * np.eye(2)

    dg = np.zeros((2, 2, 2))  # dg[m, i, j] = d_m g_ij
    for m in range(2):
        e = np.zeros(2)
        e[m] = h
        dg[m] = (g(x + e) - g(x - e)) / (2 * h)
    ginv = np.linalg.inv(g(x))
    G = np.zeros((2, 2, 2))
    for l in range(2):
        for j in range(2):
            for k in range(2):
                G[l, j, k] = 0.5 * sum(ginv[l, m] * (dg[j, m, k] + dg[k, m, j] - dg[m, j, k]) for m in range(2))
    return G


@settings(max_examples=30, deadline=None)
@given(coords, coords)
def test_christoffel_matches_metric_derivatives(a, b):
    lam = Gaussian(0.3, (0.1, -0.2), 0.5)
    x = np.array([a, b])
    G = christoffel(ConformalSurface(lam), x)
    assert np.allclose(G, _fd_christoffel(lam, x), atol=1e-7)


def test_curvature_examples():
    assert gauss_curvature(ConformalSurface(Constant(0.0)), np.zeros(2)) == 0
    sf = ConformalSurface(RadialQuadratic(0.1))
    assert gauss_curvature(sf, np.zeros(2)) == pytest.approx(-0.4, abs=1e-14)
    pts = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    assert np.all(gauss_curvature(sf, pts) < 0)


@settings(max_examples=30, deadline=None)
@given(coords, coords)
def test_curvature_matches_laplacian_fd(a, b):
    lam = Gaussian(0.3, (0.1, -0.2), 0.5)
    x = np.array([a, b])
    h = 1e-4
    lap = sum(
        (lam.value(x + e) - 2 * lam.value(x) + lam.value(x - e)) / h**2 for e in (np.array([h, 0]), np.array([0, h]))
    )
    K = gauss_curvature(ConformalSurface(lam), x)
    assert K == pytest.approx(-np.exp(-2 * lam.value(x)) * lap, abs=1e-5)


def test_frame_on_outer_and_obstacle(flat):
    nu, T = boundary_frame(flat.surface, flat.outer, np.array([1.0, 0.0]))
    assert np.allclose(nu, [1, 0]) and np.allclose(T, [0, 1])
    nu, T = boundary_frame(flat.surface, flat.obstacle, np.array([0.25, 0.0]))
    assert np.allclose(nu, [-1, 0]) and np.allclose(T, [0, -1])


def test_frame_orthonormal_in_metric(curved):
    sf = curved.surface
    for curve in curved.curves:
        x = curve.point(np.linspace(0, curve.period, 37))
        nu, T = boundary_frame(sf, curve, x)
        assert np.max(np.abs(sf.inner(x, nu, T))) < 1e-12
        assert np.max(np.abs(sf.norm(x, nu) - 1)) < 1e-12
        assert np.max(np.abs(sf.norm(x, T) - 1)) < 1e-12


def test_point_off_boundary_rejected(flat):
    with pytest.raises(PointNotOnBoundary):
        boundary_frame(flat.surface, flat.outer, np.array([0.5, 0.0]))


def test_signed_curvature_flat_circles(flat):
    t = np.linspace(0, 2 * np.pi, 50)
    assert np.allclose(signed_curvature(flat.surface, flat.outer, flat.outer.point(t)), 1.0, atol=1e-12)
    assert np.allclose(signed_curvature(flat.surface, flat.obstacle, flat.obstacle.point(t)), -4.0, atol=1e-12)


def _fd_kappa(surface, curve, t, h=1e-5):
    """kappa = -<D_s T, nu>_g along the g-arclength, by differencing T(t)."""
    def T_of(tt):
        return boundary_frame(surface, curve, curve.point(tt), check=False)[1]

    p = curve.point(t)
    speed_e = np.linalg.norm((curve.point(t + h) - curve.point(t - h)) / (2 * h))
    ds = speed_e * np.exp(surface.lam_value(p))  # g-length per unit parameter
    sign = curve.traversal_sign()
    dT = sign * (T_of(t + h) - T_of(t - h)) / (2 * h) / ds
    T = T_of(t)
    DT = dT + surface.gamma_contract(p, T, T)
    nu, _ = boundary_frame(surface, curve, p, check=False)
    return -surface.inner(p, DT, nu)


@pytest.mark.parametrize("name", ["neg_curved_annulus", "curved_ellipse_domain"])
def test_signed_curvature_matches_covariant_fd(name):
    sc = scenarios.BUILTIN[name]()
    for curve in sc.curves:
        for t in np.linspace(0.1, curve.period - 0.1, 7):
            k = signed_curvature(sc.surface, curve, curve.point(t))
            assert k == pytest.approx(_fd_kappa(sc.surface, curve, t), abs=1e-6)


def test_shape_operator_is_kappa_times_tangent(curved):
    x = curved.obstacle.point(np.array(0.7))
    nu, T = boundary_frame(curved.surface, curved.obstacle, x)
    k = signed_curvature(curved.surface, curved.obstacle, x)
    assert np.allclose(shape_operator(curved.surface, curved.obstacle, x, 2 * T), 2 * k * T)


def test_ellipse_outer_is_convex():
    E = BoundaryCurve("outer", Ellipse(1.2, 0.9))
    t = np.linspace(0, E.period, 100)
    assert np.all(signed_curvature(ConformalSurface(), E, E.point(t)) > 0)


def test_circle_curve_roundtrip():
    c = BoundaryCurve("obstacle", Circle(0.3, (0.1, 0.2)))
    t = np.linspace(0, c.period, 20, endpoint=False)
    assert np.allclose(c.point(c.param(c.point(t))), c.point(t))
