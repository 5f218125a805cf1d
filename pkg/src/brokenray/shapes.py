"""Closed planar curves with exact signed distance and Euclidean differential data.

All shapes are oriented counterclockwise.  ``sdf`` is negative inside the
enclosed region and positive outside.  ``normal`` is the outward unit normal,
``tangent`` the CCW unit tangent, ``curvature`` the CCW signed curvature
(positive for a convex region).  Parameters ``t`` live in ``[0, period)``.
"""
from __future__ import annotations

import numpy as np

from .errors import SchemaError


def _left(d):
    return np.stack([-d[..., 1], d[..., 0]], axis=-1)


class Shape:
    name = "shape"
    period = 2 * np.pi

    def sdf(self, x):
        raise NotImplementedError

    def closest(self, x):
        """Curve parameter of the closest point."""
        raise NotImplementedError

    def point(self, t):
        raise NotImplementedError

    def d1(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def tangent(self, t):
        d = self.d1(t)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, t):
        tt = self.tangent(t)
        return np.stack([tt[..., 1], -tt[..., 0]], axis=-1)

    def curvature(self, t):
        d1, d2 = self.d1(t), self.d2(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def speed(self, t):
        return np.linalg.norm(self.d1(t), axis=-1)

    @property
    def length(self):
        return float(self.arclength(np.array(self.period)))

    def arclength(self, t):
        raise NotImplementedError

    def param_at_arclength(self, s):
        raise NotImplementedError

    def bbox(self):
        t = np.linspace(0, self.period, 2049)
        p = self.point(t)
        return p.min(axis=0), p.max(axis=0)

    def is_convex(self):
        t = np.linspace(0, self.period, 4096, endpoint=False)
        return bool(np.all(self.curvature(t) > 0))

    def to_dict(self):
        raise NotImplementedError


class Circle(Shape):
    name = "circle"

    def __init__(self, radius=1.0, center=(0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)
        if self.radius <= 0:
            raise SchemaError("circle radius must be positive")

    def sdf(self, x):
        return np.linalg.norm(np.asarray(x, float) - self.center, axis=-1) - self.radius

    def closest(self, x):
        d = np.asarray(x, float) - self.center
        return np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)

    def point(self, t):
        t = np.asarray(t, float)
        return self.center + self.radius * np.stack([np.cos(t), np.sin(t)], axis=-1)

    def d1(self, t):
        t = np.asarray(t, float)
        return self.radius * np.stack([-np.sin(t), np.cos(t)], axis=-1)

    def d2(self, t):
        t = np.asarray(t, float)
        return -self.radius * np.stack([np.cos(t), np.sin(t)], axis=-1)

    def curvature(self, t):
        return np.full(np.shape(t), 1.0 / self.radius)

    def arclength(self, t):
        return self.radius * np.asarray(t, float)

    def param_at_arclength(self, s):
        return np.asarray(s, float) / self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def is_convex(self):
        return True

    def to_dict(self):
        return {"shape": self.name, "params": {"radius": self.radius, "center": self.center.tolist()}}


class Ellipse(Shape):
    """Axis-aligned ellipse with semi-axes ``a`` (x) and ``b`` (y)."""

    name = "ellipse"

    def __init__(self, a, b, center=(0.0, 0.0), n_table=4096):
        self.a, self.b = float(a), float(b)
        if self.a <= 0 or self.b <= 0:
            raise SchemaError("ellipse semi-axes must be positive")
        self.center = np.asarray(center, dtype=float)
        # cumulative arclength table, composite Simpson on a fine grid
        t = np.linspace(0, 2 * np.pi, 2 * n_table + 1)
        sp = self.speed(t)
        h = t[1] - t[0]
        pair = h / 3 * (sp[0:-2:2] + 4 * sp[1:-1:2] + sp[2::2])
        self._t_tab = t[::2]
        self._s_tab = np.concatenate([[0.0], np.cumsum(pair)])

    def point(self, t):
        t = np.asarray(t, float)
        return self.center + np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=-1)

    def d1(self, t):
        t = np.asarray(t, float)
        return np.stack([-self.a * np.sin(t), self.b * np.cos(t)], axis=-1)

    def d2(self, t):
        t = np.asarray(t, float)
        return np.stack([-self.a * np.cos(t), -self.b * np.sin(t)], axis=-1)

    def closest(self, x):
        d = np.asarray(x, float) - self.center
        t = np.arctan2(self.a * d[..., 1], self.b * d[..., 0])
        for _ in range(50):
            p = self.point(t) - self.center
            p1 = self.d1(t)
            p2 = self.d2(t)
            r = p - d
            f = np.sum(r * p1, axis=-1)
            fp = np.sum(p1 * p1, axis=-1) + np.sum(r * p2, axis=-1)
            # keep the Newton step on the convex side of the distance function
            fp = np.where(fp > 1e-12, fp, np.sum(p1 * p1, axis=-1))
            dt = np.clip(f / fp, -0.5, 0.5)
            t = t - dt
            if np.all(np.abs(dt) < 1e-15):
                break
        return np.mod(t, 2 * np.pi)

    def sdf(self, x):
        x = np.asarray(x, float)
        t = self.closest(x)
        dist = np.linalg.norm(x - self.point(t), axis=-1)
        d = x - self.center
        inside = (d[..., 0] / self.a) ** 2 + (d[..., 1] / self.b) ** 2 < 1.0
        return np.where(inside, -dist, dist)

    def arclength(self, t):
        t = np.asarray(t, float)
        n = np.floor(t / (2 * np.pi))
        tr = t - 2 * np.pi * n
        # interpolate the table, then correct with local Simpson from the nearest node
        idx = np.clip(np.searchsorted(self._t_tab, tr) - 1, 0, len(self._t_tab) - 2)
        t0 = self._t_tab[idx]
        mid = 0.5 * (t0 + tr)
        local = (tr - t0) / 6 * (self.speed(t0) + 4 * self.speed(mid) + self.speed(tr))
        return n * self._s_tab[-1] + self._s_tab[idx] + local

    def param_at_arclength(self, s):
        s = np.asarray(s, float)
        t = np.interp(np.mod(s, self._s_tab[-1]), self._s_tab, self._t_tab)
        n = np.floor(s / self._s_tab[-1])
        t = t + 2 * np.pi * n
        for _ in range(4):
            t = t - (self.arclength(t) - s) / self.speed(t)
        return t

    def bbox(self):
        r = np.array([self.a, self.b])
        return self.center - r, self.center + r

    def is_convex(self):
        return True

    def to_dict(self):
        return {"shape": self.name, "params": {"a": self.a, "b": self.b, "center": self.center.tolist()}}


class RoundedPolygon(Shape):
    """Simple polygon with every corner replaced by a circular fillet.

    The result is C^1 with piecewise constant curvature: lines (0), convex
    fillets (+1/r) and reflex fillets (-1/r).  Parametrized by arclength.
    """

    name = "rounded_polygon"

    def __init__(self, vertices, corner_radius=0.02):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise SchemaError("rounded_polygon needs at least 3 vertices (x, y)")
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 < 0:
            v = v[::-1].copy()
        self.vertices = v
        self.r = float(corner_radius)
        if self.r <= 0:
            raise SchemaError("corner_radius must be positive")
        self._build()

    def _build(self):
        v, r = self.vertices, self.r
        n = len(v)
        fillets = []
        for i in range(n):
            d_in = v[i] - v[i - 1]
            d_out = v[(i + 1) % n] - v[i]
            d_in = d_in / np.linalg.norm(d_in)
            d_out = d_out / np.linalg.norm(d_out)
            turn = np.arctan2(d_in[0] * d_out[1] - d_in[1] * d_out[0], d_in @ d_out)
            delta = r * np.tan(abs(turn) / 2)
            p_in = v[i] - delta * d_in
            p_out = v[i] + delta * d_out
            sign = 1.0 if turn > 0 else -1.0
            center = p_in + sign * r * _left(d_in)
            beta0 = np.arctan2(*(p_in - center)[::-1])
            fillets.append((p_in, p_out, center, beta0, turn, sign))
        # pieces: arc at vertex i then the line to vertex i+1
        pieces = []
        for i in range(n):
            p_in, p_out, center, beta0, turn, sign = fillets[i]
            pieces.append(("arc", center, beta0, sign, r * abs(turn), p_in))
            nxt = fillets[(i + 1) % n][0]
            seg = nxt - p_out
            ln = np.linalg.norm(seg)
            if ln <= 0 or (seg @ (v[(i + 1) % n] - v[i])) <= 0:
                raise SchemaError("corner radius too large for polygon edge")
            pieces.append(("line", p_out, seg / ln, 0.0, ln, p_out))
        self._pieces = pieces
        self._lens = np.array([p[4] for p in pieces])
        self._starts = np.concatenate([[0.0], np.cumsum(self._lens)[:-1]])
        self.period = float(np.sum(self._lens))
        # arrays for vectorized evaluation
        self._is_arc = np.array([p[0] == "arc" for p in pieces])
        self._a = np.array([p[1] for p in pieces])  # center or line start
        self._b = np.array([p[2] if p[0] == "line" else np.array([p[2], 0.0]) for p in pieces])
        self._beta0 = np.array([p[2] if p[0] == "arc" else 0.0 for p in pieces])
        self._sign = np.array([p[3] if p[0] == "arc" else 0.0 for p in pieces])

    def _locate(self, t):
        t = np.mod(np.asarray(t, float), self.period)
        k = np.clip(np.searchsorted(self._starts, t, side="right") - 1, 0, len(self._lens) - 1)
        return k, t - self._starts[k]

    def point(self, t):
        k, u = self._locate(t)
        arc = self._is_arc[k]
        ang = self._beta0[k] + self._sign[k] * u / self.r
        pa = self._a[k] + self.r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        pl = self._a[k] + u[..., None] * self._b[k]
        return np.where(arc[..., None], pa, pl)

    def d1(self, t):
        k, u = self._locate(t)
        arc = self._is_arc[k]
        ang = self._beta0[k] + self._sign[k] * u / self.r
        ta = self._sign[k][..., None] * np.stack([-np.sin(ang), np.cos(ang)], axis=-1)
        return np.where(arc[..., None], ta, self._b[k])

    def d2(self, t):
        k, u = self._locate(t)
        arc = self._is_arc[k]
        ang = self._beta0[k] + self._sign[k] * u / self.r
        na = -np.stack([np.cos(ang), np.sin(ang)], axis=-1) / self.r
        return np.where(arc[..., None], na, 0.0)

    def curvature(self, t):
        k, _ = self._locate(t)
        return np.where(self._is_arc[k], self._sign[k] / self.r, 0.0)

    def tangent(self, t):
        return self.d1(t)

    def arclength(self, t):
        return np.asarray(t, float)

    def param_at_arclength(self, s):
        return np.asarray(s, float)

    def _piece_closest(self, x):
        """Distance and parameter of the closest point on every piece, shape (..., P)."""
        x = np.asarray(x, float)[..., None, :]
        # lines
        rel = x - self._a
        u_line = np.clip(np.sum(rel * self._b, axis=-1), 0.0, self._lens)
        # arcs: angle offset along the sweep direction
        ang = np.arctan2(rel[..., 1], rel[..., 0])
        off = np.mod(self._sign * (ang - self._beta0), 2 * np.pi)
        sweep = self._lens / self.r
        # outside the sweep snap to the nearer end
        over = off - sweep
        snap_end = np.where(off > sweep, np.where(over < (2 * np.pi - off), sweep, 0.0), off)
        u_arc = snap_end * self.r
        u = np.where(self._is_arc, u_arc, u_line)
        ang_p = self._beta0 + self._sign * u / self.r
        pa = self._a + self.r * np.stack([np.cos(ang_p), np.sin(ang_p)], axis=-1)
        pl = self._a + u[..., None] * self._b
        p = np.where(self._is_arc[:, None], pa, pl)
        dist = np.linalg.norm(x - p, axis=-1)
        return dist, u

    def closest(self, x):
        dist, u = self._piece_closest(x)
        k = np.argmin(dist, axis=-1)
        uk = np.take_along_axis(u, k[..., None], axis=-1)[..., 0]
        return np.mod(self._starts[k] + uk, self.period)

    def sdf(self, x):
        x = np.asarray(x, float)
        t = self.closest(x)
        p = self.point(t)
        d = x - p
        dist = np.linalg.norm(d, axis=-1)
        side = np.sum(d * self.normal(t), axis=-1)
        return np.where(side < 0, -dist, dist)

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_convex(self):
        return bool(np.all(self._sign[self._is_arc] > 0))

    def to_dict(self):
        return {
            "shape": self.name,
            "params": {"vertices": self.vertices.tolist(), "corner_radius": self.r},
        }


def rounded_rectangle(x0, y0, x1, y1, corner_radius=0.02):
    return RoundedPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], corner_radius)


class ShapeUnion(Shape):
    """Disjoint union of closed curves; parameters are concatenated."""

    name = "union"

    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise SchemaError("union needs at least one part")
        self._periods = np.array([p.period for p in self.parts])
        self._offsets = np.concatenate([[0.0], np.cumsum(self._periods)[:-1]])
        self.period = float(np.sum(self._periods))

    def _split(self, t):
        t = np.mod(np.asarray(t, float), self.period)
        k = np.clip(np.searchsorted(self._offsets, t, side="right") - 1, 0, len(self.parts) - 1)
        return k, t - self._offsets[k]

    def _dispatch(self, method, t, extra_shape):
        k, u = self._split(t)
        out = np.zeros(np.shape(k) + extra_shape)
        for i, p in enumerate(self.parts):
            m = k == i
            if np.any(m):
                out[m] = getattr(p, method)(u[m])
        return out

    def point(self, t):
        return self._dispatch("point", t, (2,))

    def d1(self, t):
        return self._dispatch("d1", t, (2,))

    def d2(self, t):
        return self._dispatch("d2", t, (2,))

    def curvature(self, t):
        return self._dispatch("curvature", t, ())

    def tangent(self, t):
        return self._dispatch("tangent", t, (2,))

    def sdf(self, x):
        return np.min(np.stack([p.sdf(x) for p in self.parts], axis=-1), axis=-1)

    def closest(self, x):
        d = np.stack([np.abs(p.sdf(x)) for p in self.parts], axis=-1)
        k = np.argmin(d, axis=-1)
        out = np.zeros(np.shape(k))
        for i, p in enumerate(self.parts):
            m = k == i
            if np.any(m):
                out[m] = self._offsets[i] + p.closest(np.asarray(x, float)[m])
        return out

    def arclength(self, t):
        k, u = self._split(t)
        cum = np.concatenate([[0.0], np.cumsum([p.length for p in self.parts])])
        out = np.zeros(np.shape(k))
        for i, p in enumerate(self.parts):
            m = k == i
            if np.any(m):
                out[m] = cum[i] + p.arclength(u[m])
        return out

    def param_at_arclength(self, s):
        lens = np.array([p.length for p in self.parts])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        s = np.mod(np.asarray(s, float), cum[-1])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(self.parts) - 1)
        out = np.zeros(np.shape(k))
        for i, p in enumerate(self.parts):
            m = k == i
            if np.any(m):
                out[m] = self._offsets[i] + p.param_at_arclength(s[m] - cum[i])
        return out

    def bbox(self):
        boxes = [p.bbox() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def is_convex(self):
        return all(p.is_convex() for p in self.parts)

    def to_dict(self):
        return {"shape": self.name, "params": {"parts": [p.to_dict() for p in self.parts]}}


class Complement(Shape):
    """The same curve with the inside and outside swapped (orientation reversed)."""

    name = "complement"

    def __init__(self, inner):
        self.inner = inner
        self.period = inner.period

    def sdf(self, x):
        return -self.inner.sdf(x)

    def closest(self, x):
        return self.period - self.inner.closest(x)

    def point(self, t):
        return self.inner.point(self.period - np.asarray(t, float))

    def d1(self, t):
        return -self.inner.d1(self.period - np.asarray(t, float))

    def d2(self, t):
        return self.inner.d2(self.period - np.asarray(t, float))

    def tangent(self, t):
        return -self.inner.tangent(self.period - np.asarray(t, float))

    def curvature(self, t):
        return -self.inner.curvature(self.period - np.asarray(t, float))

    def arclength(self, t):
        return self.inner.length - self.inner.arclength(self.period - np.asarray(t, float))

    def param_at_arclength(self, s):
        return self.period - self.inner.param_at_arclength(self.inner.length - np.asarray(s, float))

    def bbox(self):
        return self.inner.bbox()

    def is_convex(self):
        return False

    def to_dict(self):
        return {"shape": self.name, "params": {"inner": self.inner.to_dict()}}


SHAPES = {
    "circle": lambda p: Circle(p.get("radius", 1.0), p.get("center", (0.0, 0.0))),
    "ellipse": lambda p: Ellipse(p["a"], p["b"], p.get("center", (0.0, 0.0))),
    "rounded_polygon": lambda p: RoundedPolygon(p["vertices"], p.get("corner_radius", 0.02)),
    "rounded_rectangle": lambda p: rounded_rectangle(*p["corners"], p.get("corner_radius", 0.02)),
    "union": lambda p: ShapeUnion([shape_from_dict(q) for q in p["parts"]]),
    "complement": lambda p: Complement(shape_from_dict(p["inner"])),
}


def shape_from_dict(spec):
    if not isinstance(spec, dict) or "shape" not in spec:
        raise SchemaError(f"shape spec must be a mapping with a 'shape' key, got {spec!r}")
    name = spec["shape"]
    if name not in SHAPES:
        raise SchemaError(f"unknown shape {name!r}; known: {sorted(SHAPES)}")
    try:
        return SHAPES[name](dict(spec.get("params", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad parameters for shape {name!r}: {exc}") from exc
