import numpy as np
import pytest

from brokenray import scenarios
from brokenray.errors import TangentialDirection
from brokenray.jacobi import (
    Phi_map,
    ReflectionJumpMaps,
    blowup_scaling,
    fd_variation_check,
    growth_envelope,
    gronwall_segment_check,
    initial_covariant_derivative,
    jump_ratios,
    phi_project,
    propagate_jacobi,
    propagate_jacobi_batch,
    reflect_jacobi,
    reflection_identities,
    unreflect_jacobi,
)
from brokenray.raytrace import random_fan, trace_broken_ray, trace_rays


def _random_configs(sc, n, rng):
    sf, R = sc.surface, sc.obstacle
    for _ in range(n):
        x = R.point(np.array(rng.uniform(0, R.period)))
        maps = ReflectionJumpMaps.at(sf, R, x)
        # incoming velocity: pointing into the obstacle, away from tangential
        ang = rng.uniform(0.05, np.pi - 0.05)
        zeta = np.cos(ang) * maps.T + np.sin(ang) * maps.nu
        yield maps, zeta


def test_eight_identities(rng):
    sc = scenarios.curved_ellipse_domain()
    worst = 0.0
    for maps, zeta in _random_configs(sc, 500, rng):
        worst = max(worst, max(reflection_identities(maps, zeta).values()))
    assert worst < 1e-12


def test_forward_backward_jumps_inverse(rng):
    sc = scenarios.neg_curved_annulus()
    for maps, zeta in _random_configs(sc, 200, rng):
        J, W = rng.normal(size=2), rng.normal(size=2)
        Jp, Wp = reflect_jacobi(maps, J, W, zeta)
        Jb, Wb = unreflect_jacobi(maps, Jp, Wp, maps.rho() @ zeta)
        assert np.allclose(Jb, J, atol=1e-10) and np.allclose(Wb, W, atol=1e-10)


def test_projection_examples(curved):
    x = curved.obstacle.point(np.array(1.0))
    maps = ReflectionJumpMaps.at(curved.surface, curved.obstacle, x)
    zeta = 0.6 * maps.T + 0.8 * maps.nu
    assert np.allclose(phi_project(maps, zeta, zeta), 0, atol=1e-14)
    assert np.allclose(phi_project(maps, zeta, maps.T), maps.T, atol=1e-14)
    assert np.allclose(Phi_map(maps, zeta, zeta), 0, atol=1e-13)


def test_tangential_direction_rejected(curved):
    x = curved.obstacle.point(np.array(0.0))
    maps = ReflectionJumpMaps.at(curved.surface, curved.obstacle, x)
    with pytest.raises(TangentialDirection):
        maps.phi(maps.T)


def test_head_on_jump_value(flat):
    maps = ReflectionJumpMaps.at(flat.surface, flat.obstacle, np.array([0.25, 0.0]))
    assert np.allclose(maps.rho(), np.diag([-1.0, 1.0]))
    Jp, Wp = reflect_jacobi(maps, np.array([0.0, 1.0]), np.zeros(2), np.array([-1.0, 0.0]))
    assert np.allclose(Jp, [0.0, 1.0], atol=1e-14)
    assert np.allclose(Wp, [0.0, 8.0], atol=1e-13)


def test_velocity_field_is_jacobi(curved):
    ray = trace_broken_ray(curved, np.array([1.0, 0.0]), theta0=3.3)
    assert ray.reflection_count == 1
    v0 = ray.velocity[0]
    fr = propagate_jacobi(curved, ray, v0, np.zeros(2))
    assert np.max(np.abs(fr.J - ray.velocity)) < 1e-9
    assert np.max(np.abs(fr.DJ)) < 1e-9
    Jm, Wm = fr.jumps[0][1], fr.jumps[0][2]
    assert np.allclose(fr.jumps[0][3], ray.reflections[0].v_out, atol=1e-9)
    assert np.allclose(Wm, 0, atol=1e-9) and np.allclose(Jm, ray.reflections[0].v_in, atol=1e-9)


def test_fd_oracle_head_on(flat):
    chk = fd_variation_check(flat, np.array([1.0, 0.0]), np.pi, np.zeros(2), 1.0)
    assert chk.n_reflections == 1
    assert chk.order >= 1
    assert np.all(np.diff(chk.errors) < 0)


def test_fd_oracle_zero_variation(flat):
    chk = fd_variation_check(flat, np.array([1.0, 0.0]), np.pi, np.zeros(2), 0.0)
    assert np.all(chk.errors == 0)


def test_fd_oracle_curved_with_position_variation(curved):
    x0 = np.array([0.0, 0.9])
    chk = fd_variation_check(curved, x0, -np.pi / 2 + 0.1, np.array([0.3, -0.1]), 0.5)
    assert chk.n_reflections == 1
    assert chk.order >= 1


def test_variation_along_the_flow(curved):
    """x_s = gamma(s), v_s = gamma'(s) gives J = gamma'."""
    x0, th0 = np.array([1.0, 0.0]), 3.3
    ray = trace_broken_ray(curved, x0, theta0=th0)
    v0 = ray.velocity[0]
    dth = curved.surface.geodesic_rhs(x0, th0)[1]
    W0 = initial_covariant_derivative(curved.surface, x0, th0, v0, dth)
    assert np.allclose(W0, 0, atol=1e-14)
    fr = propagate_jacobi(curved, ray, v0, W0)
    assert np.max(np.abs(fr.J - ray.velocity)) < 1e-9


def test_velocity_field_envelope(curved):
    ray = trace_broken_ray(curved, np.array([1.0, 0.0]), theta0=3.3)
    fr = propagate_jacobi(curved, ray, ray.velocity[0], np.zeros(2))
    env = growth_envelope(curved, [fr])
    assert env.A == pytest.approx(1.0, abs=1e-8) and env.B == pytest.approx(0.0, abs=1e-6)
    assert env.violations == 0


def test_flat_growth_is_polynomial(rng):
    sc = scenarios.flat_disc()
    fan = random_fan(sc, 20, rng)
    rays = trace_rays(sc, fan.x, fan.theta, record=True).rays
    a = rng.normal(size=(20, 4))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    frames = propagate_jacobi_batch(sc, rays, a[:, :2], a[:, 2:])
    for fr in frames:
        E = fr.energy(sc.surface)
        # |J0 + t W0|^2 + |W0|^2 <= 1 + t + t^2 for |J0|^2 + |W0|^2 = 1
        assert np.all(E <= 1 + fr.t + fr.t**2 + 1e-12)


def _battery(sc, n, rng):
    fan = random_fan(sc, n, rng)
    rays = trace_rays(sc, fan.x, fan.theta, record=True).rays
    a = rng.normal(size=(n, 4))
    return propagate_jacobi_batch(sc, rays, a[:, :2], a[:, 2:])


def test_envelope_battery_and_gronwall(curved, rng):
    frames = _battery(curved, 100, rng)
    held = _battery(curved, 50, rng)
    env = growth_envelope(curved, frames, held_out=held)
    assert env.violations == 0
    assert env.held_out_violations is not None
    for fr in frames:
        assert gronwall_segment_check(curved, fr) <= 0


def test_jump_ratios_recorded(curved, rng):
    frames = _battery(curved, 20, rng)
    r = np.concatenate([jump_ratios(curved, f) for f in frames])
    assert r.shape[1] == 2 and np.all(r[:, 1] > 0)


@pytest.mark.parametrize("name", ["flat_annulus", "neg_curved_annulus", "ellipse_obstacle"])
def test_blowup_exponent(name):
    sc = scenarios.BUILTIN[name]()
    x = sc.obstacle.point(np.array(0.4))
    fit = blowup_scaling(sc.surface, sc.obstacle, x)
    assert abs(fit.exponent + 1) < 0.1
    # halving the incidence roughly doubles the jump
    m = blowup_scaling(sc.surface, sc.obstacle, x, np.array([2e-3, 1e-3])).magnitudes
    assert m[1] / m[0] == pytest.approx(2.0, rel=0.05)
