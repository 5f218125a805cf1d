import numpy as np
import pytest

from brokenray import scenarios
from brokenray.errors import SchemaError
from brokenray.geometry import ConformalSurface
from brokenray.pestov import (
    BundleFunction,
    QuadratureGrid,
    boundary_decomposition,
    bundle_function_from_dict,
    commutator_check,
    commutator_pairing_check,
    frame_apply,
    horizontal_gradient,
    l2_inner,
    pestov_full_residual,
    pestov_interior_identity,
    stability_ratio,
    vertical_ibp_residual,
)
from brokenray.profiles import Constant, Gaussian, Polynomial

EVEN = [
    {"name": "reflection_even", "params": {"k_max": 1}},
    {"name": "reflection_even", "params": {"k_max": 2, "with_constant": True}},
    {"name": "reflection_even", "params": {"k_max": 3, "amplitude": {"profile": "gaussian", "params": {"amp": 1.0, "center": [0.3, 0.1], "width": 0.6}}}},
]


@pytest.fixture(scope="module")
def flat_grid():
    return QuadratureGrid.build(scenarios.flat_annulus(), n=64, n_theta=32)


@pytest.fixture(scope="module")
def curved_grid():
    return QuadratureGrid.build(scenarios.neg_curved_annulus(), n=64, n_theta=32)


def test_bundle_volume(flat_grid):
    vol = l2_inner(flat_grid, lambda x, th: np.ones((len(x), len(th))), lambda x, th: 1.0)
    assert vol == pytest.approx(2 * np.pi**2 * 0.9375, rel=1e-6)


def test_fiber_orthogonality(flat_grid):
    val = l2_inner(flat_grid, lambda x, th: np.sin(th)[None, :] + 0 * x[:, :1], lambda x, th: np.cos(th)[None, :])
    assert abs(val) < 1e-12


def test_cauchy_schwarz(curved_grid, rng):
    for _ in range(5):
        a = bundle_function_from_dict({"name": "fourier", "params": {"terms": [
            {"k": int(rng.integers(0, 4)), "kind": "cos", "coef": {"profile": "gaussian", "params": {"amp": float(rng.normal()), "center": list(rng.uniform(-0.5, 0.5, 2)), "width": 0.5}}}]}})
        b = bundle_function_from_dict({"name": "radial_sin", "params": {"c": float(rng.normal())}})
        ab = l2_inner(curved_grid, a, b)
        assert ab**2 <= l2_inner(curved_grid, a, a) * l2_inner(curved_grid, b, b) * (1 + 1e-12)


def test_flat_frame_on_coordinate():
    u = BundleFunction([(0, "cos", Polynomial({(1, 0): 1.0}))], "x1", "general")
    th = np.linspace(0, 2 * np.pi, 9)
    x = np.tile([[0.3, -0.4]], (9, 1))
    Xu, Xp, Vu = frame_apply(ConformalSurface(), u, x, th)
    assert np.allclose(Xu, np.cos(th)) and np.allclose(Xp, np.sin(th)) and np.allclose(Vu, 0)


def test_flat_frame_on_angle_function():
    u = BundleFunction([(2, "sin", Constant(1.0))], "sin2", "general")
    th = np.linspace(0, 2 * np.pi, 9)
    x = np.tile([[0.3, -0.4]], (9, 1))
    Xu, _, Vu = frame_apply(ConformalSurface(), u, x, th)
    assert np.allclose(Xu, 0) and np.allclose(Vu, 2 * np.cos(2 * th))


@pytest.mark.parametrize("name", ["bump", "radial_sin"] + [e["name"] for e in EVEN[:1]])
def test_commutator_structure(name, rng):
    sf = ConformalSurface(Gaussian(0.3, (0.1, 0.2), 0.5))
    u = bundle_function_from_dict({"name": name, "params": {"mix": True}} if name == "bump" else name)
    # points of the annulus M; the polar angle in the even members is singular at 0
    r = rng.uniform(0.3, 0.95, 200)
    a = rng.uniform(0, 2 * np.pi, 200)
    x = np.stack([r * np.cos(a), r * np.sin(a)], -1)
    th = rng.uniform(0, 2 * np.pi, 200)
    assert commutator_check(sf, u, x, th) < 1e-5


def test_horizontal_gradient_orthogonal_to_velocity(rng):
    sf = ConformalSurface(Gaussian(0.3, (0.1, 0.2), 0.5))
    u = bundle_function_from_dict({"name": "bump", "params": {"mix": True}})
    x = rng.uniform(-0.2, 0.8, (50, 2))
    th = rng.uniform(0, 2 * np.pi, 50)
    grad = horizontal_gradient(sf, u, x, th)
    assert np.max(np.abs(sf.inner(x, sf.unit_vector(x, th), grad))) < 1e-14


def test_interior_identity_compact(curved):
    u = bundle_function_from_dict({"name": "bump", "params": {"mix": True}})
    res = [pestov_interior_identity(QuadratureGrid.build(curved, n=n, n_theta=32), u).residual for n in (32, 64)]
    assert res[1] < 1e-3 and res[1] < res[0] / 2


def test_constant_has_zero_terms(flat_grid):
    rep = pestov_interior_identity(flat_grid, bundle_function_from_dict("constant"))
    assert rep.residual == 0 and all(v == 0 for v in rep.terms.values())


@pytest.mark.parametrize("spec", ["bump", "radial_sin", "constant"] + EVEN[:2])
def test_boundary_decomposition(flat_grid, spec):
    assert boundary_decomposition(flat_grid, bundle_function_from_dict(spec)).residual < 1e-3


def test_boundary_decomposition_angle_independent(flat_grid):
    u = BundleFunction([(0, "cos", Gaussian(1.0, (0.2, 0.0), 0.5))], "radial", "general")
    rep = boundary_decomposition(flat_grid, u)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.residual == 0


def test_full_identity_zero(flat_grid):
    assert pestov_full_residual(flat_grid, bundle_function_from_dict("zero")).residual == 0


@pytest.mark.parametrize("spec", EVEN)
def test_full_identity_reflection_even(spec, flat):
    u = bundle_function_from_dict(spec)
    r = [pestov_full_residual(QuadratureGrid.build(flat, n=n, n_theta=32), u) for n in (32, 64)]
    assert r[1].residual < 1e-2 and r[1].residual < r[0].residual
    assert r[1].terms["odd_part_on_R"] < 1e-10 and r[1].terms["max_on_E"] < 1e-12


def test_full_identity_needs_evenness(flat_grid):
    u = bundle_function_from_dict("radial_sin")
    assert pestov_full_residual(flat_grid, u).residual > 1e-2


def test_reflection_even_members_are_even(flat, rng):
    R = flat.obstacle
    t = rng.uniform(0, R.period, 30)
    x = R.point(t)
    alpha = R.tangent_angle(t)
    th = rng.uniform(0, 2 * np.pi, 30)
    for spec in EVEN:
        u = bundle_function_from_dict(spec)
        a = u.value(x, th[:, None])[:, 0]
        b = u.value(x, (2 * alpha - th)[:, None])[:, 0]
        assert np.max(np.abs(a - b)) < 1e-10


def test_vertical_integration_by_parts(curved_grid):
    w = bundle_function_from_dict({"name": "bump", "params": {"mix": True}})
    z = bundle_function_from_dict(EVEN[1])
    assert vertical_ibp_residual(curved_grid, w, z) < 1e-12


def test_commutator_pairing(curved):
    u = bundle_function_from_dict(EVEN[1])
    r = [commutator_pairing_check(QuadratureGrid.build(curved, n=n, n_theta=32), u).residual for n in (32, 64)]
    assert r[1] < r[0] / 2 and r[1] < 1e-3


def test_stability_ratio(flat):
    f = Gaussian(1.0, (0.4, 0.3), 0.3)
    assert np.isnan(stability_ratio(flat, Constant(0.0), n_s=16, n_theta=32, n_grid=32))
    r1 = stability_ratio(flat, f, n_s=16, n_theta=32, n_grid=32)
    r2 = stability_ratio(flat, 2.0 * f, n_s=16, n_theta=32, n_grid=32)
    assert np.isfinite(r1) and r1 > 0 and r2 == pytest.approx(r1, rel=1e-12)


def test_registry_errors():
    with pytest.raises(SchemaError):
        bundle_function_from_dict("nope")
    with pytest.raises(SchemaError):
        bundle_function_from_dict({"name": "fourier", "params": {}})
