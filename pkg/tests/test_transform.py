import numpy as np
import pytest
from scipy.integrate import quad

from brokenray import scenarios
from brokenray.errors import ObstacleInTheWay
from brokenray.profiles import Constant, Gaussian, Polynomial
from brokenray.raytrace import make_fan, random_fan, reflect_direction, trace_rays
from brokenray.transform import (
    boundary_recovery,
    brt_forward,
    fan_transform,
    holder_diagnostic,
    symmetry_residual,
    transform_batch,
    transport_residual,
)

GAUSS = Gaussian(1.0, (0.3, 0.2), 0.4)
X1 = Polynomial({(1, 0): 1.0})


def _interior_points(sc, n, rng):
    pts = []
    while len(pts) < n:
        x = rng.uniform(-0.9, 0.9, 2)
        if sc.inside(x[None, :], tol=-0.02)[0]:
            pts.append(x)
    return np.array(pts), rng.uniform(0, 2 * np.pi, n)


def test_head_on_values(flat):
    x, th = np.array([1.0, 0.0]), np.pi
    assert brt_forward(flat, Constant(1.0), x, th).value == pytest.approx(1.5, abs=1e-9)
    assert brt_forward(flat, Constant(0.0), x, th).value == 0.0
    assert brt_forward(flat, X1, x, th).value == pytest.approx(0.9375, abs=1e-9)


def test_flat_transform_against_line_quadrature(flat, rng):
    """Independent oracle: closed-form straight segments integrated by scipy quad."""
    fan = random_fan(flat, 40, rng)
    vals = fan_transform(flat, GAUSS, fan)
    for i in range(len(fan)):
        x0 = fan.x[i]
        d = np.array([np.cos(fan.theta[i]), np.sin(fan.theta[i])])
        # first hit with the obstacle circle r = 0.25, else the unit circle
        b = x0 @ d
        disc = b * b - (x0 @ x0 - 0.0625)
        f = lambda t, p, e: GAUSS.value((p + t * e)[None, :])[0]
        if disc > 0 and -b - np.sqrt(disc) > 0:
            t1 = -b - np.sqrt(disc)
            p = x0 + t1 * d
            n = p / 0.25
            e = d - 2 * (d @ n) * n
            t2 = -2 * (p @ e)  # chord of the unit circle from p along e
            t2 = -(p @ e) + np.sqrt((p @ e) ** 2 - (p @ p - 1))
            ref = quad(f, 0, t1, args=(x0, d), epsabs=1e-13)[0] + quad(f, 0, t2, args=(p, e), epsabs=1e-13)[0]
        else:
            ref = quad(f, 0, -2 * b, args=(x0, d), epsabs=1e-13)[0]
        assert vals.values[i] == pytest.approx(ref, abs=1e-9)


def test_zero_field_and_linearity(curved, rng):
    fan = random_fan(curved, 50, rng)
    f2 = Polynomial({(0, 2): 1.0, (1, 1): -0.5})
    v, _ = transform_batch(curved, [GAUSS, f2, 2.0 * GAUSS - 3.0 * f2, Constant(0.0)], fan.x, fan.theta)
    assert np.all(v[:, 3] == 0)
    assert np.max(np.abs(v[:, 2] - (2 * v[:, 0] - 3 * v[:, 1]))) < 1e-12


def test_constant_field_gives_travel_time(curved, rng):
    fan = random_fan(curved, 50, rng)
    vt = fan_transform(curved, Constant(1.0), fan)
    assert np.max(np.abs(vt.values - vt.tau)) < 1e-12


def test_outward_and_tangential_starts_vanish(flat):
    x = np.array([[1.0, 0.0], [1.0, 0.0]])
    v, res = transform_batch(flat, [GAUSS], x, np.array([0.3, np.pi / 2]))
    assert np.all(v == 0) and np.all(res.tau == 0)


def test_constant_field_transport_exact(curved):
    assert transport_residual(curved, Constant(1.0), np.array([0.5, 0.3]), 2.0, 1e-3) < 1e-6
    assert transport_residual(curved, Constant(0.0), np.array([0.5, 0.3]), 2.0, 1e-3) == 0


def test_transport_order(curved, rng):
    xs, ths = _interior_points(curved, 50, rng)
    res = {h: [] for h in (1e-2, 1e-3, 1e-4)}
    for x, th in zip(xs, ths):
        try:
            r = [transport_residual(curved, GAUSS, x, th, h) for h in res]
        except Exception:
            continue
        for h, v in zip(res, r):
            res[h].append(v)
    worst = {h: max(v) for h, v in res.items()}
    assert len(res[1e-4]) >= 45
    assert worst[1e-4] < 1e-3
    order = np.polyfit(np.log(list(worst)), np.log(list(worst.values())), 1)[0]
    assert order >= 1 - 0.05


def test_flow_invariance(curved, rng):
    x, th = np.array([0.5, 0.3]), 2.0
    res = trace_rays(curved, x[None, :], np.array([th]), record=True)
    ray = res.rays[0]
    total = brt_forward(curved, GAUSS, x, th).value
    for t in (0.2, 0.5, 0.9):
        if t >= ray.tau:
            continue
        xt, tht = ray.state_at(t)
        partial, _ = transform_batch(curved, [GAUSS], x[None, :], np.array([th]))
        rest = brt_forward(curved, GAUSS, xt[0], tht[0]).value
        head = quad(lambda s: GAUSS.value(ray.state_at(s)[0])[0], 0, t, epsabs=1e-12,
                    points=[r.t for r in ray.reflections if r.t < t] or None)[0]
        assert total == pytest.approx(rest + head, abs=1e-6)
        assert partial[0, 0] == pytest.approx(total)


def test_symmetry(curved, rng):
    xs, ths = _interior_points(curved, 100, rng)
    worst = np.max(symmetry_residual(curved, GAUSS, xs, ths))
    assert worst < 1e-6
    assert symmetry_residual(curved, Constant(1.0), xs[0], ths[0]) < 1e-8
    assert symmetry_residual(curved, Constant(0.0), xs[0], ths[0]) == 0


def test_reflection_evenness(curved, rng):
    R = curved.obstacle
    for t in rng.uniform(0, R.period, 20):
        x = R.point(np.array(t))
        ang = rng.uniform(0.2, np.pi - 0.2)
        v = -np.cos(ang) * R.tangent_e(np.array(t)) - np.sin(ang) * R.normal_e(np.array(t))  # into M
        w = reflect_direction(curved, x, v)
        a = brt_forward(curved, GAUSS, x, np.arctan2(v[1], v[0])).value
        b = brt_forward(curved, GAUSS, x, np.arctan2(w[1], w[0])).value
        assert a == pytest.approx(b, abs=1e-6)


def test_boundary_recovery(flat):
    for s in (0.0, 1.0, 2.5):
        x = flat.outer.point(np.array(s))
        assert boundary_recovery(flat, Constant(1.0), x).estimate == pytest.approx(1.0, abs=1e-3)
    est = [boundary_recovery(flat, X1, np.array([1.0, 0.0]), h=h).estimate for h in (0.2, 0.1, 0.05)]
    assert abs(est[-1] - 1.0) < 1e-6
    assert boundary_recovery(flat, lambda x, th: 0.0, np.array([1.0, 0.0])).estimate == 0.0


def test_boundary_recovery_needs_clear_chords():
    sc = scenarios.flat_annulus(r_obstacle=0.95)
    with pytest.raises(ObstacleInTheWay):
        boundary_recovery(sc, Constant(1.0), np.array([1.0, 0.0]), h=1.0)


def test_holder_diagnostic_reports_number(flat):
    val = holder_diagnostic(flat, GAUSS, np.array([0.25, 0.0]))
    assert np.isfinite(val)


def test_fan_flags(flat):
    fan = make_fan(flat, 8, 8)
    ft = fan_transform(flat, GAUSS, fan)
    assert not np.any(ft.flags)
