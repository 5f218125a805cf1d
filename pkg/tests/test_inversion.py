import numpy as np
import pytest

from brokenray import scenarios
from brokenray.errors import DimensionMismatch, NotATubeScenario, SingularSystem
from brokenray.inversion import (
    PixelBasis,
    TikhonovReconstruction,
    TubeFunction,
    assemble_forward_matrix,
    null_check,
    reconstruct,
    singular_spectrum,
    tube_concentration,
    tube_null_function,
)
from brokenray.profiles import Constant, Gaussian
from brokenray.raytrace import make_fan, random_fan
from brokenray.transform import fan_transform

GAUSS = Gaussian(1.0, (0.4, 0.3), 0.3)


@pytest.fixture(scope="module")
def small_op():
    sc = scenarios.flat_annulus()
    return assemble_forward_matrix(sc, PixelBasis(sc, 12), make_fan(sc, 36, 24))


def test_single_cell_basis_gives_lengths():
    sc = scenarios.flat_disc()
    basis = PixelBasis(sc, 1)
    op = assemble_forward_matrix(sc, basis, make_fan(sc, 6, 5))
    assert op.A.shape == (30, 1)
    assert np.allclose(op.A[:, 0], op.tau, atol=1e-12)


def test_partition_of_unity(small_op):
    assert small_op.partition_of_unity_error() < 1e-6
    assert small_op.basis.n_active > 0


def test_adjoint_consistency(small_op, rng):
    A = small_op.A
    x, y = rng.normal(size=A.shape[1]), rng.normal(size=A.shape[0])
    assert (A @ x) @ y == pytest.approx(x @ (A.T @ y), rel=1e-12)


def test_step_must_resolve_pixels():
    sc = scenarios.flat_annulus(step=0.2)
    with pytest.raises(DimensionMismatch):
        assemble_forward_matrix(sc, PixelBasis(sc, 12), make_fan(sc, 4, 4))


def test_spectrum_of_identity():
    sp = singular_spectrum(np.eye(5))
    assert sp.sigma_min == 1 and sp.sigma_max == 1 and sp.ratio == 1


def test_spectrum_ignores_row_order(small_op, rng):
    perm = rng.permutation(small_op.A.shape[0])
    a, b = singular_spectrum(small_op.A), singular_spectrum(small_op.A[perm])
    assert b.ratio == pytest.approx(a.ratio, rel=1e-10)


def test_spectrum_stable_across_random_fans():
    sc = scenarios.flat_annulus()
    basis = PixelBasis(sc, 24)
    r = [singular_spectrum(assemble_forward_matrix(sc, basis, random_fan(sc, 4000, np.random.default_rng(s))).A).ratio
         for s in (1, 2)]
    assert min(r) > 0 and abs(r[0] - r[1]) / r[0] < 0.2


def test_inverse_crime_gaussian(small_op):
    truth = small_op.basis.discretize(GAUSS)
    rec = reconstruct(small_op.A, small_op.A @ truth, mu=1e-8 * singular_spectrum(small_op.A).sigma_max ** 2, truth=truth)
    assert rec.relative_error < 0.05


def test_zero_and_constant_data(small_op):
    assert np.all(reconstruct(small_op.A, np.zeros(small_op.A.shape[0])).x == 0)
    truth = small_op.basis.discretize(Constant(2.0))
    rec = reconstruct(small_op.A, small_op.A @ truth)
    assert abs(rec.x.mean() - 2.0) / 2.0 < 0.02


def test_estimator_interface(small_op):
    truth = small_op.basis.discretize(GAUSS)
    d = small_op.A @ truth
    est = TikhonovReconstruction().fit(small_op.A, d)
    assert est.score(small_op.A, d) > 0.999
    assert est.get_params() == {"mu": None, "rank_tol": 1e-12}


def test_unregularized_rank_deficient_raises():
    with pytest.raises(SingularSystem):
        TikhonovReconstruction(mu=0).fit(np.ones((3, 2)), np.ones(3))
    with pytest.raises(DimensionMismatch):
        TikhonovReconstruction().fit(np.ones((3, 2)), np.ones(4))


def test_mesh_refinement_reduces_error():
    """Data from the continuous transform; compare with cell-center samples."""
    sc = scenarios.flat_annulus()
    errs = []
    for n, fan in [(8, (24, 16)), (12, (36, 24)), (16, (48, 32))]:
        basis = PixelBasis(sc, n)
        op = assemble_forward_matrix(sc, basis, make_fan(sc, *fan))
        d = fan_transform(sc, GAUSS, op.fan).values
        errs.append(reconstruct(op.A, d, truth=basis.discretize(GAUSS)).relative_error)
    assert errs[1] < 1.1 * errs[0] and errs[2] < 1.1 * errs[1] and errs[2] < errs[0]


def test_tube_function_requires_tube(flat):
    with pytest.raises(NotATubeScenario):
        tube_null_function(flat)


def test_tube_function_norm():
    g = TubeFunction((0.0, 0.0), (1.0, 0.0), 0.1, inset=0.1)
    # independent midpoint quadrature of g^2 over its support box
    xs = np.linspace(0.1, 0.9, 4001)
    ys = np.linspace(-0.1, 0.1, 21)
    X, Y = np.meshgrid(0.5 * (xs[1:] + xs[:-1]), 0.5 * (ys[1:] + ys[:-1]))
    vals = g.value(np.stack([X.ravel(), Y.ravel()], -1)) ** 2
    assert np.sqrt(vals.sum() * (xs[1] - xs[0]) * (ys[1] - ys[0])) == pytest.approx(g.l2_norm(), rel=1e-6)


@pytest.mark.slow
def test_tube_null_function():
    sc = scenarios.c_ring_tube()
    g = tube_null_function(sc)
    fan = make_fan(sc, 30, 20)
    chk = null_check(sc, g, fan)
    assert chk.passed and chk.l2_norm > 0.1 and chk.ratio < 1e-4
    g3 = tube_null_function(sc, amplitude=3.0)
    v1 = fan_transform(sc, g, fan).values
    v3 = fan_transform(sc, g3, fan).values
    assert np.allclose(v3, 3 * v1, atol=1e-14)


def test_tube_function_not_null_on_annulus(flat):
    tube = scenarios.c_ring_tube().meta["tube"]
    g = TubeFunction(tube["start"], tube["end"], tube["half_width"], tube["inset"])
    chk = null_check(flat, g, make_fan(flat, 30, 20))
    assert chk.max_transform > 1e-2 * chk.l2_norm


def test_tube_concentration_of_indicator():
    sc = scenarios.c_ring_tube()
    basis = PixelBasis(sc, 24)
    tube = sc.meta["tube"]
    v = TubeFunction(tube["start"], tube["end"], tube["half_width"]).value(basis.centers)
    assert tube_concentration(basis, v, tube) == pytest.approx(1.0)
