"""Closed-form scalar fields on the plane with analytic derivatives.

Every profile evaluates on arrays of points with shape ``(..., 2)`` and returns
values ``(...)``, gradients ``(..., 2)`` and Hessians ``(..., 2, 2)``.  Profiles
compose with ``+``, ``-`` and ``*`` so that derived fields keep exact
derivatives.
"""
from __future__ import annotations

import numpy as np

from .errors import SchemaError


def _pts(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"points must have trailing dimension 2, got {x.shape}")
    return x


class Profile:
    """Base class; subclasses implement value/grad/hess."""

    name = "profile"
    smoothness = "C2"

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other):
        return Sum(self, _as_profile(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Sum(self, Scaled(_as_profile(other), -1.0))

    def __rsub__(self, other):
        return Sum(_as_profile(other), Scaled(self, -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return Scaled(self, float(other))
        return Product(self, _as_profile(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Scaled(self, -1.0)

    def to_dict(self):
        raise NotImplementedError(f"{type(self).__name__} is not serializable")


def _as_profile(p):
    if isinstance(p, Profile):
        return p
    if np.isscalar(p):
        return Constant(float(p))
    raise TypeError(f"cannot combine profile with {type(p).__name__}")


class Constant(Profile):
    name = "constant"

    def __init__(self, c=0.0):
        self.c = float(c)

    def value(self, x):
        x = _pts(x)
        return np.full(x.shape[:-1], self.c)

    def grad(self, x):
        x = _pts(x)
        return np.zeros(x.shape)

    def hess(self, x):
        x = _pts(x)
        return np.zeros(x.shape + (2,))

    def to_dict(self):
        return {"profile": self.name, "params": {"c": self.c}}


class Polynomial(Profile):
    """Sum of monomials ``c * x1**i * x2**j`` given as ``{(i, j): c}``."""

    name = "polynomial"

    def __init__(self, coeffs):
        self.coeffs = {tuple(int(v) for v in k): float(c) for k, c in dict(coeffs).items()}

    @staticmethod
    def _mono(x, p):
        # x**p with the convention d/dx x**0 = 0, safe at x = 0
        if p < 0:
            return np.zeros_like(x)
        return x**p

    def value(self, x):
        x = _pts(x)
        out = np.zeros(x.shape[:-1])
        for (i, j), c in self.coeffs.items():
            out = out + c * self._mono(x[..., 0], i) * self._mono(x[..., 1], j)
        return out

    def grad(self, x):
        x = _pts(x)
        g = np.zeros(x.shape)
        m = self._mono
        for (i, j), c in self.coeffs.items():
            if i:
                g[..., 0] += c * i * m(x[..., 0], i - 1) * m(x[..., 1], j)
            if j:
                g[..., 1] += c * j * m(x[..., 0], i) * m(x[..., 1], j - 1)
        return g

    def hess(self, x):
        x = _pts(x)
        h = np.zeros(x.shape + (2,))
        m = self._mono
        for (i, j), c in self.coeffs.items():
            if i > 1:
                h[..., 0, 0] += c * i * (i - 1) * m(x[..., 0], i - 2) * m(x[..., 1], j)
            if j > 1:
                h[..., 1, 1] += c * j * (j - 1) * m(x[..., 0], i) * m(x[..., 1], j - 2)
            if i and j:
                v = c * i * j * m(x[..., 0], i - 1) * m(x[..., 1], j - 1)
                h[..., 0, 1] += v
                h[..., 1, 0] += v
        return h

    def to_dict(self):
        return {
            "profile": self.name,
            "params": {"coeffs": [[i, j, c] for (i, j), c in sorted(self.coeffs.items())]},
        }


class RadialQuadratic(Profile):
    """``c * |x - center|**2``."""

    name = "radial_quadratic"

    def __init__(self, c, center=(0.0, 0.0)):
        self.c = float(c)
        self.center = np.asarray(center, dtype=float)

    def value(self, x):
        d = _pts(x) - self.center
        return self.c * np.sum(d * d, axis=-1)

    def grad(self, x):
        return 2.0 * self.c * (_pts(x) - self.center)

    def hess(self, x):
        x = _pts(x)
        return np.broadcast_to(2.0 * self.c * np.eye(2), x.shape + (2,)).copy()

    def to_dict(self):
        return {"profile": self.name, "params": {"c": self.c, "center": self.center.tolist()}}


class Gaussian(Profile):
    """``amp * exp(-|x - center|**2 / width**2)``."""

    name = "gaussian_bump"

    def __init__(self, amp, center=(0.0, 0.0), width=1.0):
        self.amp = float(amp)
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        if self.width <= 0:
            raise SchemaError("gaussian width must be positive")

    def value(self, x):
        d = _pts(x) - self.center
        return self.amp * np.exp(-np.sum(d * d, axis=-1) / self.width**2)

    def grad(self, x):
        d = _pts(x) - self.center
        v = self.value(x)
        return (-2.0 / self.width**2) * v[..., None] * d

    def hess(self, x):
        d = _pts(x) - self.center
        v = self.value(x)
        w2 = self.width**2
        outer = d[..., :, None] * d[..., None, :]
        return v[..., None, None] * (4.0 / w2**2 * outer - 2.0 / w2 * np.eye(2))

    def to_dict(self):
        return {
            "profile": self.name,
            "params": {"amp": self.amp, "center": self.center.tolist(), "width": self.width},
        }


class PolyBump(Profile):
    """``amp * (1 - |x - center|**2 / radius**2)**power`` inside the disc, zero outside.

    ``power = p`` gives a C^(p-1) field with compact support.
    """

    name = "poly_bump"

    def __init__(self, amp=1.0, center=(0.0, 0.0), radius=1.0, power=3):
        self.amp = float(amp)
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.power = int(power)
        if self.power < 2:
            raise SchemaError("poly_bump power must be >= 2")
        self.smoothness = "C2" if self.power >= 3 else "C1"

    def _q(self, x):
        d = _pts(x) - self.center
        return d, 1.0 - np.sum(d * d, axis=-1) / self.radius**2

    def value(self, x):
        _, q = self._q(x)
        return self.amp * np.where(q > 0, np.maximum(q, 0.0) ** self.power, 0.0)

    def grad(self, x):
        d, q = self._q(x)
        qp = np.maximum(q, 0.0)
        c = self.amp * self.power * qp ** (self.power - 1) * (-2.0 / self.radius**2)
        return c[..., None] * d

    def hess(self, x):
        d, q = self._q(x)
        qp = np.maximum(q, 0.0)
        p, r2 = self.power, self.radius**2
        outer = d[..., :, None] * d[..., None, :]
        a = self.amp * p * (p - 1) * qp ** (p - 2) * 4.0 / r2**2
        b = self.amp * p * qp ** (p - 1) * (-2.0 / r2)
        return a[..., None, None] * outer + b[..., None, None] * np.eye(2)

    def to_dict(self):
        return {
            "profile": self.name,
            "params": {
                "amp": self.amp,
                "center": self.center.tolist(),
                "radius": self.radius,
                "power": self.power,
            },
        }


class AngularHarmonic(Profile):
    """``cos(k * phi)`` or ``sin(k * phi)`` with ``phi`` the polar angle about ``center``.

    Singular at the center; only evaluate away from it.
    """

    name = "angular_harmonic"

    def __init__(self, k, kind="cos", center=(0.0, 0.0)):
        self.k = int(k)
        if kind not in ("cos", "sin"):
            raise SchemaError("angular harmonic kind must be 'cos' or 'sin'")
        self.kind = kind
        self.center = np.asarray(center, dtype=float)

    def _polar(self, x):
        d = _pts(x) - self.center
        r2 = np.sum(d * d, axis=-1)
        phi = np.arctan2(d[..., 1], d[..., 0])
        return d, r2, phi

    def _f(self, phi):
        k = self.k
        if self.kind == "cos":
            return np.cos(k * phi), -k * np.sin(k * phi), -k * k * np.cos(k * phi)
        return np.sin(k * phi), k * np.cos(k * phi), -k * k * np.sin(k * phi)

    def value(self, x):
        return self._f(self._polar(x)[2])[0]

    def grad(self, x):
        d, r2, phi = self._polar(x)
        _, f1, _ = self._f(phi)
        gphi = np.stack([-d[..., 1] / r2, d[..., 0] / r2], axis=-1)
        return f1[..., None] * gphi

    def hess(self, x):
        d, r2, phi = self._polar(x)
        _, f1, f2 = self._f(phi)
        gphi = np.stack([-d[..., 1] / r2, d[..., 0] / r2], axis=-1)
        x1, x2 = d[..., 0], d[..., 1]
        r4 = r2 * r2
        hphi = np.empty(d.shape + (2,))
        hphi[..., 0, 0] = 2 * x1 * x2 / r4
        hphi[..., 1, 1] = -2 * x1 * x2 / r4
        hphi[..., 0, 1] = hphi[..., 1, 0] = (x2 * x2 - x1 * x1) / r4
        return f2[..., None, None] * gphi[..., :, None] * gphi[..., None, :] + f1[..., None, None] * hphi

    def to_dict(self):
        return {
            "profile": self.name,
            "params": {"k": self.k, "kind": self.kind, "center": self.center.tolist()},
        }


class Sum(Profile):
    name = "sum"

    def __init__(self, *parts):
        self.parts = list(parts)
        self.smoothness = min((p.smoothness for p in self.parts), default="C2")

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def grad(self, x):
        return sum(p.grad(x) for p in self.parts)

    def hess(self, x):
        return sum(p.hess(x) for p in self.parts)

    def to_dict(self):
        return {"profile": self.name, "params": {"parts": [p.to_dict() for p in self.parts]}}


class Scaled(Profile):
    name = "scaled"

    def __init__(self, inner, factor):
        self.inner = inner
        self.factor = float(factor)
        self.smoothness = inner.smoothness

    def value(self, x):
        return self.factor * self.inner.value(x)

    def grad(self, x):
        return self.factor * self.inner.grad(x)

    def hess(self, x):
        return self.factor * self.inner.hess(x)

    def to_dict(self):
        return {"profile": self.name, "params": {"factor": self.factor, "inner": self.inner.to_dict()}}


class Product(Profile):
    name = "product"

    def __init__(self, a, b):
        self.a, self.b = a, b
        self.smoothness = min(a.smoothness, b.smoothness)

    def value(self, x):
        return self.a.value(x) * self.b.value(x)

    def grad(self, x):
        return self.a.grad(x) * self.b.value(x)[..., None] + self.a.value(x)[..., None] * self.b.grad(x)

    def hess(self, x):
        va, vb = self.a.value(x), self.b.value(x)
        ga, gb = self.a.grad(x), self.b.grad(x)
        cross = ga[..., :, None] * gb[..., None, :]
        return (
            self.a.hess(x) * vb[..., None, None]
            + va[..., None, None] * self.b.hess(x)
            + cross
            + np.swapaxes(cross, -1, -2)
        )

    def to_dict(self):
        return {"profile": self.name, "params": {"a": self.a.to_dict(), "b": self.b.to_dict()}}


def _poly_from_params(coeffs):
    if isinstance(coeffs, dict):
        items = {tuple(int(s) for s in k.split(",")): v for k, v in coeffs.items()}
    else:
        items = {(int(i), int(j)): c for i, j, c in coeffs}
    return Polynomial(items)


REGISTRY = {
    "constant": lambda p: Constant(p.get("c", 0.0)),
    "radial_quadratic": lambda p: RadialQuadratic(p["c"], p.get("center", (0.0, 0.0))),
    "gaussian_bump": lambda p: Gaussian(p.get("amp", 1.0), p.get("center", (0.0, 0.0)), p.get("width", 1.0)),
    "gaussian": lambda p: Gaussian(p.get("amp", 1.0), p.get("center", (0.0, 0.0)), p.get("width", 1.0)),
    "poly_bump": lambda p: PolyBump(p.get("amp", 1.0), p.get("center", (0.0, 0.0)), p.get("radius", 1.0), p.get("power", 3)),
    "polynomial": lambda p: _poly_from_params(p["coeffs"]),
    "linear": lambda p: Polynomial({(1, 0): p.get("a", [1.0, 0.0])[0], (0, 1): p.get("a", [1.0, 0.0])[1], (0, 0): p.get("b", 0.0)}),
    "angular_harmonic": lambda p: AngularHarmonic(p["k"], p.get("kind", "cos"), p.get("center", (0.0, 0.0))),
    "sum": lambda p: Sum(*[profile_from_dict(q) for q in p["parts"]]),
    "scaled": lambda p: Scaled(profile_from_dict(p["inner"]), p["factor"]),
    "product": lambda p: Product(profile_from_dict(p["a"]), profile_from_dict(p["b"])),
}


def profile_from_dict(spec):
    """Build a profile from ``{"profile": name, "params": {...}}``."""
    if not isinstance(spec, dict) or "profile" not in spec:
        raise SchemaError(f"profile spec must be a mapping with a 'profile' key, got {spec!r}")
    name = spec["profile"]
    if name not in REGISTRY:
        raise SchemaError(f"unknown profile {name!r}; known: {sorted(REGISTRY)}")
    try:
        return REGISTRY[name](dict(spec.get("params", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad parameters for profile {name!r}: {exc}") from exc
