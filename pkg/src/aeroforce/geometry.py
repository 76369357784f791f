"""Surface geometry: infinite planes, analytic height-fields and triangle meshes.

Every geometry answers three queries:

* ``probe(point, t)`` - signed distance along the outward normal, the normal,
  and the surface velocity at the closest point (contact model);
* ``intersect(origins, dirs, t)`` - ray ranges, ``inf`` on a miss (camera);
* ``closest_point(point)`` - closest surface point and outward normal (planner).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError

_NO_CONTACT = (np.inf, np.array([0.0, 0.0, 1.0]), np.zeros(3))


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValidationError("normal must be non-zero")
    return v / n


@dataclass
class Plane:
    """Infinite plane through ``point`` with outward ``normal``.

    ``motion`` optionally translates the plane along its normal with
    piecewise-linear keyframes ``[(t, offset), ...]``.
    """

    point: np.ndarray
    normal: np.ndarray
    motion: list = field(default_factory=list)

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float).reshape(3)
        self.normal = _unit(self.normal)
        self.motion = [(float(t), float(d)) for t, d in self.motion]
        if any(b[0] <= a[0] for a, b in zip(self.motion, self.motion[1:])):
            raise ValidationError("plane motion keyframes must have increasing times")
        self._n = tuple(self.normal.tolist())
        self._p = tuple(self.point.tolist())
        self._ts = [k[0] for k in self.motion]

    def offset(self, t: float) -> tuple[float, float]:
        """Offset along the normal and its rate at time ``t``."""
        if not self.motion:
            return 0.0, 0.0
        ts = self._ts
        ds = [k[1] for k in self.motion]
        if t <= ts[0]:
            return ds[0], 0.0
        if t >= ts[-1]:
            return ds[-1], 0.0
        i = bisect.bisect_right(ts, t) - 1
        rate = (ds[i + 1] - ds[i]) / (ts[i + 1] - ts[i])
        return ds[i] + rate * (t - ts[i]), rate

    def probe(self, x, t: float = 0.0):
        d, rate = self.offset(t)
        dist = float(self.normal @ (np.asarray(x, dtype=float) - self.point)) - d
        return dist, self.normal, rate * self.normal

    def probe_fast(self, x, t: float = 0.0):
        """:meth:`probe` on plain floats: ``(dist, normal tuple, velocity tuple)``."""
        n, c = self._n, self._p
        d, rate = self.offset(t) if self.motion else (0.0, 0.0)
        dist = n[0] * (x[0] - c[0]) + n[1] * (x[1] - c[1]) + n[2] * (x[2] - c[2]) - d
        return dist, n, (rate * n[0], rate * n[1], rate * n[2])

    def intersect(self, origins, dirs, t: float = 0.0) -> np.ndarray:
        d, _ = self.offset(t)
        p0 = self.point + d * self.normal
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            r = ((p0 - origins) @ self.normal) / denom
        # only the outward face is observable
        ok = (denom < -1e-12) & (r > 0.0)
        return np.where(ok, r, np.inf)

    def closest_point(self, x):
        x = np.asarray(x, dtype=float)
        dist = float(self.normal @ (x - self.point))
        return x - dist * self.normal, self.normal.copy()


@dataclass
class HeightField:
    """Surface ``z = h(x, y)`` in a local frame placed at ``origin`` with ``rotation`` (local -> world).

    ``h`` is a sum of sinusoids ``a * sin(kx x + ky y + phase)`` given by
    ``terms``; the free side is local +z.  Outside ``extent``
    ``(xmin, xmax, ymin, ymax)`` there is no surface.
    """

    origin: np.ndarray
    rotation: np.ndarray
    extent: tuple
    terms: list = field(default_factory=list)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.extent = tuple(float(e) for e in self.extent)
        arr = np.asarray(self.terms, dtype=float).reshape(-1, 4)
        self._a, self._kx, self._ky, self._ph = arr.T
        self.terms = [tuple(row) for row in arr.tolist()]
        self._R = tuple(tuple(row) for row in self.rotation.tolist())
        self._o = tuple(self.origin.tolist())

    @classmethod
    def procedural(cls, origin, rotation, size=(1.0, 1.8), amplitude=0.06, n_terms=5, seed=0):
        """Doubly curved random surface of roughly ``amplitude`` relief."""
        rng = np.random.default_rng(seed)
        terms = []
        for _ in range(n_terms):
            wavelength = rng.uniform(0.6, 1.6)
            heading = rng.uniform(0.0, np.pi)
            k = 2.0 * np.pi / wavelength
            terms.append((
                amplitude / np.sqrt(n_terms) * rng.uniform(0.5, 1.0),
                k * np.cos(heading), k * np.sin(heading), rng.uniform(0.0, 2 * np.pi),
            ))
        hx, hy = 0.5 * size[0], 0.5 * size[1]
        return cls(origin, rotation, (-hx, hx, -hy, hy), terms)

    def height(self, x, y):
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        return np.sum(self._a * np.sin(self._kx * x + self._ky * y + self._ph), axis=-1)

    def gradient(self, x, y):
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        c = self._a * np.cos(self._kx * x + self._ky * y + self._ph)
        return np.sum(c * self._kx, axis=-1), np.sum(c * self._ky, axis=-1)

    def _inside(self, x, y):
        x0, x1, y0, y1 = self.extent
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)

    def local_normal(self, x, y) -> np.ndarray:
        gx, gy = self.gradient(x, y)
        n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def probe(self, x, t: float = 0.0):
        xl = self.rotation.T @ (np.asarray(x, dtype=float) - self.origin)
        if not self._inside(xl[0], xl[1]):
            return _NO_CONTACT
        n_l = self.local_normal(xl[0], xl[1])
        dz = xl[2] - float(self.height(xl[0], xl[1]))
        # first-order distance along the normal; exact for a locally flat patch
        return dz * float(n_l[2]), self.rotation @ n_l, np.zeros(3)

    def probe_fast(self, x, t: float = 0.0):
        """:meth:`probe` on plain floats: ``(dist, normal tuple, velocity tuple)``."""
        R, o = self._R, self._o
        dx, dy, dz = x[0] - o[0], x[1] - o[1], x[2] - o[2]
        xl = R[0][0] * dx + R[1][0] * dy + R[2][0] * dz
        yl = R[0][1] * dx + R[1][1] * dy + R[2][1] * dz
        zl = R[0][2] * dx + R[1][2] * dy + R[2][2] * dz
        x0, x1, y0, y1 = self.extent
        if not (x0 <= xl <= x1 and y0 <= yl <= y1):
            return math.inf, (0.0, 0.0, 1.0), (0.0, 0.0, 0.0)
        h = gx = gy = 0.0
        for a, kx, ky, ph in self.terms:
            arg = kx * xl + ky * yl + ph
            h += a * math.sin(arg)
            c = a * math.cos(arg)
            gx += c * kx
            gy += c * ky
        inv = 1.0 / math.sqrt(gx * gx + gy * gy + 1.0)
        nl = (-gx * inv, -gy * inv, inv)
        n = tuple(R[i][0] * nl[0] + R[i][1] * nl[1] + R[i][2] * nl[2] for i in range(3))
        return (zl - h) * nl[2], n, (0.0, 0.0, 0.0)

    def intersect(self, origins, dirs, t: float = 0.0, iters: int = 20, tol: float = 1e-10) -> np.ndarray:
        o = (np.asarray(origins, dtype=float) - self.origin) @ self.rotation
        d = np.asarray(dirs, dtype=float) @ self.rotation
        o = np.broadcast_to(o, d.shape)
        dz = d[:, 2]
        valid = dz < -1e-9
        safe_dz = np.where(valid, dz, -1.0)
        # phase of every term is affine in the range: A + r B
        A = o[:, :1] * self._kx + o[:, 1:2] * self._ky + self._ph
        B = d[:, :1] * self._kx + d[:, 1:2] * self._ky
        aB = self._a * B
        r = -o[:, 2] / safe_dz
        step = np.full(len(r), np.inf)
        # Newton on f(r) = o_z + r d_z - h(r), started on the mean plane
        for _ in range(iters):
            ph = A + r[:, None] * B
            f = o[:, 2] + r * dz - np.sin(ph) @ self._a
            df = dz - np.einsum("ij,ij->i", np.cos(ph), aB)
            step = f / np.where(df < -1e-9, df, -1e-9)
            r = r - step
            if not np.any(np.abs(step[valid]) > tol):
                break
        px = o[:, 0] + r * d[:, 0]
        py = o[:, 1] + r * d[:, 1]
        ok = valid & (r > 0.0) & self._inside(px, py) & (np.abs(step) <= tol)
        return np.where(ok, r, np.inf)

    def to_mesh(self, resolution: float = 0.02) -> "TriangleMesh":
        x0, x1, y0, y1 = self.extent
        nx = max(2, int(round((x1 - x0) / resolution)) + 1)
        ny = max(2, int(round((y1 - y0) / resolution)) + 1)
        xs, ys = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), indexing="ij")
        local = np.stack([xs, ys, self.height(xs, ys)], axis=-1).reshape(-1, 3)
        verts = local @ self.rotation.T + self.origin
        idx = np.arange(nx * ny).reshape(nx, ny)
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
        return TriangleMesh(verts, faces)

    def closest_point(self, x):
        mesh = self.to_mesh()
        c, _ = mesh.closest_point(x)
        cl = self.rotation.T @ (c - self.origin)
        cl[2] = float(self.height(cl[0], cl[1]))
        return self.rotation @ cl + self.origin, self.rotation @ self.local_normal(cl[0], cl[1])


def closest_points_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest point to ``p`` on each triangle ``(a[i], b[i], c[i])`` (vectorized region test)."""
    p = np.asarray(p, dtype=float)
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
        out = a + ab * v_in[:, None] + ac * w_in[:, None]

        # edge regions
        v_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out[m] = (a + ab * v_ab[:, None])[m]
        w_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out[m] = (a + ac * w_ac[:, None])[m]
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out[m] = (b + (c - b) * w_bc[:, None])[m]

    # vertex regions
    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    m = (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    m = (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    return out


@dataclass
class TriangleMesh:
    """Triangle soup; face normals follow counter-clockwise winding and point to the free side."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=int).reshape(-1, 3)
        if len(self.faces) == 0:
            raise ValidationError("mesh has no faces")
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        area2 = np.linalg.norm(n, axis=1)
        if np.any(area2 <= 0.0):
            raise ValidationError("mesh contains degenerate triangles")
        self._a, self._b, self._c = a, b, c
        self.normals = n / area2[:, None]

    def closest_point(self, x, return_face: bool = False):
        x = np.asarray(x, dtype=float)
        pts = closest_points_on_triangles(x, self._a, self._b, self._c)
        d2 = np.sum((pts - x) ** 2, axis=1)
        i = int(np.argmin(d2))
        if return_face:
            return pts[i], self.normals[i].copy(), i
        return pts[i], self.normals[i].copy()

    def probe(self, x, t: float = 0.0, max_depth: float = 0.05):
        c, n = self.closest_point(x)
        dist = float(n @ (np.asarray(x, dtype=float) - c))
        if dist < -max_depth:
            return _NO_CONTACT
        return dist, n, np.zeros(3)

    def intersect(self, origins, dirs, t: float = 0.0) -> np.ndarray:
        """Moller-Trumbore against all front faces; nearest positive hit per ray."""
        dirs = np.asarray(dirs, dtype=float)
        origins = np.broadcast_to(np.asarray(origins, dtype=float), dirs.shape)
        e1 = self._b - self._a
        e2 = self._c - self._a
        best = np.full(len(dirs), np.inf)
        for k in range(len(self.faces)):
            pvec = np.cross(dirs, e2[k])
            det = pvec @ e1[k]
            front = (dirs @ self.normals[k]) < 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                tvec = origins - self._a[k]
                u = np.einsum("ij,ij->i", tvec, pvec) * inv
                qvec = np.cross(tvec, e1[k])
                v = np.einsum("ij,ij->i", dirs, qvec) * inv
                r = (qvec @ e2[k]) * inv
            hit = front & (np.abs(det) > 1e-14) & (u >= 0) & (v >= 0) & (u + v <= 1) & (r > 0)
            best = np.where(hit & (r < best), r, best)
        return best
