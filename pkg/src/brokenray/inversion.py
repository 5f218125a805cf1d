"""Discrete forward operator on a pixel basis, its spectrum, and regularized reconstruction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lstsq, svd
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import DimensionMismatch, NotATubeScenario, SingularSystem
from .profiles import Profile
from .raytrace import Fan, Observer, Scenario, Termination, trace_rays
from .transform import fan_transform


class PixelBasis:
    """Axis-aligned n x n grid over the bounding box of E; active cells have centers in M.

    Points of M lying in an inactive cell (boundary slivers) are charged to the
    nearest active cell, so the active indicators form a partition of unity on M.
    """

    def __init__(self, scenario: Scenario, n: int):
        lo, hi = scenario.outer.shape.bbox()
        side = float(np.max(hi - lo))
        mid = 0.5 * (lo + hi)
        self.n = int(n)
        self.lo = mid - side / 2
        self.h = side / n
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        self.centers_all = self.lo + (np.stack([i, j], axis=-1).reshape(-1, 2) + 0.5) * self.h
        active = scenario.inside(self.centers_all)
        if not np.any(active):
            raise DimensionMismatch("no active cells; the grid is too coarse for this domain")
        self.active_mask = active
        self.active_index = np.flatnonzero(active)
        self.centers = self.centers_all[active]
        # every cell -> column of the nearest active cell (itself when active)
        _, near = cKDTree(self.centers).query(self.centers_all)
        self.column_of_cell = near.astype(int)

    @property
    def n_active(self):
        return len(self.active_index)

    @property
    def cell_area(self):
        return self.h * self.h

    def column(self, x):
        """Active column owning each point of ``x`` (n, 2)."""
        ij = np.floor((np.asarray(x, float) - self.lo) / self.h).astype(int)
        ij = np.clip(ij, 0, self.n - 1)
        return self.column_of_cell[ij[:, 0] * self.n + ij[:, 1]]

    def discretize(self, f: Profile):
        """Cell-center samples of ``f`` on the active cells."""
        return f.value(self.centers)

    def grid_values(self, coef):
        """Full n x n array with NaN outside the active cells."""
        out = np.full(self.n * self.n, np.nan)
        out[self.active_index] = coef
        return out.reshape(self.n, self.n)


class _RowAssembler(Observer):
    """Splits every traced step at pixel grid lines and charges each piece's duration to its cell."""

    def __init__(self, basis: PixelBasis, n_rays: int):
        self.basis = basis
        self.A = np.zeros((n_rays, basis.n_active))

    def on_step(self, ids, t0, x0, th0, t1, x1, th1):
        b = self.basis
        dt = t1 - t0
        d = x1 - x0
        # grid-line crossings of the chord x0 -> x1, as fractions in (0, 1)
        cuts = [np.zeros(len(ids)), np.ones(len(ids))]
        for k in range(2):
            g0 = np.floor((x0[:, k] - b.lo[k]) / b.h)
            g1 = np.floor((x1[:, k] - b.lo[k]) / b.h)
            line = b.lo[k] + np.maximum(g0, g1) * b.h
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(g0 != g1, (line - x0[:, k]) / d[:, k], 1.0)
            cuts.append(np.clip(r, 0.0, 1.0))
        C = np.sort(np.stack(cuts, axis=1), axis=1)
        for a, c in zip(C[:, :-1].T, C[:, 1:].T):
            w = (c - a) * dt
            keep = w > 0
            if not np.any(keep):
                continue
            mid = x0[keep] + (0.5 * (a + c))[keep, None] * d[keep]
            np.add.at(self.A, (ids[keep], b.column(mid)), w[keep])


@dataclass
class ForwardOperator:
    A: np.ndarray  # rows: exiting rays; columns: active cells
    tau: np.ndarray
    fan: Fan
    kept: np.ndarray  # indices into the original fan
    flagged: np.ndarray  # indices of rays that did not exit
    basis: PixelBasis
    meta: dict = field(default_factory=dict)

    def partition_of_unity_error(self):
        return float(np.max(np.abs(self.A.sum(axis=1) - self.tau))) if len(self.tau) else 0.0


def assemble_forward_matrix(scenario: Scenario, basis: PixelBasis, fan: Fan) -> ForwardOperator:
    """Dense matrix of ray durations per cell; rays that do not exit are excluded and flagged."""
    if scenario.step >= basis.h:
        raise DimensionMismatch("integration step must be smaller than the pixel size")
    asm = _RowAssembler(basis, len(fan))
    res = trace_rays(scenario, fan.x, fan.theta, observers=[asm])
    ok = res.status == Termination.EXIT_AT_E.value
    kept = np.flatnonzero(ok)
    meta = {
        "scenario": scenario.name,
        "basis_n": basis.n,
        "n_active": basis.n_active,
        "n_rays": len(fan),
        "n_flagged": int((~ok).sum()),
        "max_reflections": int(res.n_reflections[ok].max()) if ok.any() else 0,
    }
    return ForwardOperator(asm.A[ok], res.tau[ok], fan.subset(kept), kept, np.flatnonzero(~ok), basis, meta)


@dataclass
class Spectrum:
    sigma: np.ndarray
    sigma_min: float
    sigma_max: float
    ratio: float
    effective_rank: int
    right_vectors: np.ndarray | None = None


def singular_spectrum(A, threshold=1e-10, vectors=False) -> Spectrum:
    """Dense SVD summary; ``effective_rank`` counts sigma > threshold * sigma_max."""
    A = np.asarray(A, float)
    if A.ndim != 2 or min(A.shape) == 0:
        raise DimensionMismatch(f"expected a non-empty 2-d matrix, got shape {A.shape}")
    if vectors:
        _, s, Vt = svd(A, full_matrices=False)
    else:
        s, Vt = svd(A, compute_uv=False), None
    smax = float(s[0])
    # a wide matrix has min(m, n) singular values; the others are structural zeros
    smin = float(s[-1]) if A.shape[0] >= A.shape[1] else 0.0
    return Spectrum(s, smin, smax, smin / smax if smax > 0 else 0.0, int(np.sum(s > threshold * smax)), Vt)


class TikhonovReconstruction(RegressorMixin, BaseEstimator):
    """Minimizer of ||A x - d||^2 + mu ||x||^2.

    ``mu=None`` uses 1e-8 * sigma_max(A)^2.  ``fit(A, d)`` stores ``coef_``;
    ``predict(A)`` returns ``A @ coef_``.
    """

    def __init__(self, mu=None, rank_tol=1e-12):
        self.mu = mu
        self.rank_tol = rank_tol

    def fit(self, A, d):
        A = np.asarray(A, float)
        d = np.asarray(d, float)
        if A.ndim != 2 or d.shape != (A.shape[0],):
            raise DimensionMismatch(f"data length {d.shape} does not match operator rows {A.shape[0]}")
        smax = float(svd(A, compute_uv=False)[0]) if A.size else 0.0
        mu = 1e-8 * smax**2 if self.mu is None else float(self.mu)
        if mu < 0:
            raise ValueError("mu must be non-negative")
        n = A.shape[1]
        if mu == 0:
            sol, _, rank, _ = lstsq(A, d, cond=self.rank_tol)
            if rank < n:
                raise SingularSystem(f"normal equations have rank {rank} < {n} and mu = 0")
        else:
            # stacked least squares avoids squaring the condition number
            aug = np.vstack([A, np.sqrt(mu) * np.eye(n)])
            sol = lstsq(aug, np.concatenate([d, np.zeros(n)]))[0]
        self.coef_ = sol
        self.mu_ = mu
        self.sigma_max_ = smax
        self.n_features_in_ = n
        return self

    def predict(self, A):
        return np.asarray(A, float) @ self.coef_


@dataclass
class Reconstruction:
    x: np.ndarray
    residual: float  # ||A x - d|| / ||d||
    relative_error: float | None
    mu: float


def reconstruct(A, data, mu=None, truth=None) -> Reconstruction:
    est = TikhonovReconstruction(mu=mu).fit(A, data)
    d = np.asarray(data, float)
    dn = np.linalg.norm(d)
    r = np.linalg.norm(est.predict(A) - d)
    rel = None
    if truth is not None:
        truth = np.asarray(truth, float)
        tn = np.linalg.norm(truth)
        rel = float(np.linalg.norm(est.coef_ - truth) / tn) if tn > 0 else float(np.linalg.norm(est.coef_))
    return Reconstruction(est.coef_, float(r / dn) if dn > 0 else float(r), rel, est.mu_)


# ---------------------------------------------------------------------------
# tube null functions


class TubeFunction(Profile):
    """sin(2 pi xi) for xi in [0, 1] along a straight tube, zero elsewhere.

    xi is the normalized axial coordinate over the inset support
    [start + inset, end - inset]; the function ignores the transversal
    coordinate within ``half_width`` of the axis.
    """

    name = "tube_sine"
    smoothness = "C0"

    def __init__(self, start, end, half_width, inset=0.0, amplitude=1.0):
        self.start = np.asarray(start, float)
        self.end = np.asarray(end, float)
        self.half_width = float(half_width)
        self.inset = float(inset)
        self.amplitude = float(amplitude)
        axis = self.end - self.start
        self.length_total = float(np.linalg.norm(axis))
        self.axis = axis / self.length_total
        self.normal = np.array([-self.axis[1], self.axis[0]])
        self.support_length = self.length_total - 2 * self.inset
        if self.support_length <= 0:
            raise ValueError("inset leaves no support")

    def _coords(self, x):
        y = np.asarray(x, float) - self.start
        return y @ self.axis - self.inset, y @ self.normal

    def value(self, x):
        a, t = self._coords(x)
        xi = a / self.support_length
        on = (xi >= 0) & (xi <= 1) & (np.abs(t) <= self.half_width * (1 + 1e-9))
        return np.where(on, self.amplitude * np.sin(2 * np.pi * xi), 0.0)

    def grad(self, x):
        a, t = self._coords(x)
        xi = a / self.support_length
        on = (xi > 0) & (xi < 1) & (np.abs(t) < self.half_width)
        da = np.where(on, self.amplitude * 2 * np.pi / self.support_length * np.cos(2 * np.pi * xi), 0.0)
        return da[..., None] * self.axis

    def hess(self, x):
        a, t = self._coords(x)
        xi = a / self.support_length
        on = (xi > 0) & (xi < 1) & (np.abs(t) < self.half_width)
        k = 2 * np.pi / self.support_length
        daa = np.where(on, -self.amplitude * k * k * np.sin(2 * np.pi * xi), 0.0)
        return daa[..., None, None] * np.outer(self.axis, self.axis)

    def l2_norm(self):
        # int sin^2 over one period is half the support length
        return float(abs(self.amplitude) * np.sqrt(0.5 * self.support_length * 2 * self.half_width))

    def to_dict(self):
        return {
            "profile": self.name,
            "params": {
                "start": self.start.tolist(),
                "end": self.end.tolist(),
                "half_width": self.half_width,
                "inset": self.inset,
                "amplitude": self.amplitude,
            },
        }


def tube_null_function(scenario: Scenario, amplitude=1.0) -> TubeFunction:
    """Axial sine on the tube recorded in ``scenario.meta['tube']``."""
    tube = scenario.meta.get("tube") if scenario.meta else None
    if not tube:
        raise NotATubeScenario(f"scenario {scenario.name!r} has no tube geometry")
    return TubeFunction(tube["start"], tube["end"], tube["half_width"], tube.get("inset", 0.0), amplitude)


@dataclass
class NullCheck:
    max_transform: float
    l2_norm: float
    ratio: float
    n_rays: int
    n_flagged: int
    passed: bool


def null_check(scenario: Scenario, g: TubeFunction, fan: Fan, null_tol=1e-4) -> NullCheck:
    """max |transform of g| over the exiting rays of ``fan``, relative to ||g||_L2."""
    ft = fan_transform(scenario, g, fan)
    ok = ~ft.flags
    m = float(np.max(np.abs(ft.values[ok]))) if ok.any() else float("nan")
    norm = g.l2_norm()
    ratio = m / norm if norm > 0 else float("nan")
    return NullCheck(m, norm, ratio, int(ok.sum()), int((~ok).sum()), bool(ratio < null_tol))


def tube_concentration(basis: PixelBasis, vector, tube: dict) -> float:
    """Fraction of ||vector||^2 carried by active cells whose centers lie in the tube."""
    start = np.asarray(tube["start"], float)
    end = np.asarray(tube["end"], float)
    axis = (end - start) / np.linalg.norm(end - start)
    y = basis.centers - start
    a = y @ axis
    t = y @ np.array([-axis[1], axis[0]])
    inside = (a >= 0) & (a <= np.linalg.norm(end - start)) & (np.abs(t) <= tube["half_width"])
    v = np.asarray(vector, float)
    tot = float(v @ v)
    return float(v[inside] @ v[inside] / tot) if tot > 0 else 0.0
