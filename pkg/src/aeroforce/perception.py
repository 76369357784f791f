"""Synthetic time-of-flight camera and the surface distance/normal estimator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FrameId, Pose, ValidationError

E_Z = np.array([0.0, 0.0, 1.0])


def _default_R_TC() -> np.ndarray:
    return np.eye(3)


@dataclass
class CameraModel:
    """Pinhole depth camera rigidly mounted on the tool.

    The optical frame looks along its +z axis.  ``roi_half_angle`` optionally
    restricts rendering to pixels within a cone about the optical axis; the
    estimator only keeps points near the tool axis, so a cone covering that
    cylinder gives the same patch at a fraction of the cost.
    """

    R_TC: np.ndarray = field(default_factory=_default_R_TC)
    p_TC: np.ndarray = field(default_factory=lambda: np.array([0.05, 0.0, -0.45]))
    fov: tuple = (math.radians(62.0), math.radians(45.0))  # (horizontal, vertical)
    resolution: tuple = (172, 224)  # (rows, cols)
    sigma: float = 0.0  # range noise [m]
    max_range: float = 4.0
    roi_half_angle: float | None = None

    def __post_init__(self):
        self.R_TC = np.asarray(self.R_TC, dtype=float).reshape(3, 3)
        self.p_TC = np.asarray(self.p_TC, dtype=float).reshape(3)
        rows, cols = (int(r) for r in self.resolution)
        if rows <= 0 or cols <= 0:
            raise ValidationError("camera resolution must be positive")
        if self.sigma < 0:
            raise ValidationError("range noise must be non-negative")
        self.resolution = (rows, cols)
        self._rays = None

    @property
    def rays(self) -> np.ndarray:
        """Unit ray directions in C, one per (selected) pixel."""
        if self._rays is None:
            rows, cols = self.resolution
            fx = 0.5 * cols / math.tan(0.5 * self.fov[0])
            fy = 0.5 * rows / math.tan(0.5 * self.fov[1])
            u = np.arange(cols) - 0.5 * (cols - 1)
            v = np.arange(rows) - 0.5 * (rows - 1)
            uu, vv = np.meshgrid(u, v)
            d = np.stack([uu / fx, vv / fy, np.ones_like(uu)], axis=-1).reshape(-1, 3)
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            if self.roi_half_angle is not None:
                d = d[d[:, 2] >= math.cos(self.roi_half_angle)]
            self._rays = d
        return self._rays

    def pose_in_world(self, tool_pose: Pose) -> Pose:
        return Pose(tool_pose.position + tool_pose.rotation @ self.p_TC,
                    tool_pose.rotation @ self.R_TC, FrameId.W, FrameId.C)


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) in C
    t: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("point cloud contains non-finite points")

    def __len__(self):
        return len(self.points)


def render_cloud(camera: CameraModel, tool_pose: Pose, surfaces, t: float = 0.0,
                 rng: np.random.Generator | None = None, rays=None) -> PointCloud:
    """Cast one ray per pixel against the visible surfaces; misses are dropped.

    ``rays`` optionally replaces ``camera.rays`` with a subset (unit vectors in C).
    """
    cam = camera.pose_in_world(tool_pose)
    rays_C = camera.rays if rays is None else np.asarray(rays, dtype=float).reshape(-1, 3)
    rays_W = rays_C @ cam.rotation.T
    r = np.full(len(rays_C), np.inf)
    for s in surfaces:
        if getattr(s, "visible", True):
            geom = getattr(s, "geometry", s)
            r = np.minimum(r, geom.intersect(cam.position, rays_W, t))
    hit = r <= camera.max_range
    r = r[hit]
    if camera.sigma > 0.0 and len(r):
        if rng is None:
            raise ValidationError("a random generator is required for noisy rendering")
        r = r + rng.normal(0.0, camera.sigma, size=len(r))
    return PointCloud(rays_C[hit] * r[:, None], t)


def cloud_to_tool(cloud: PointCloud, camera: CameraModel) -> np.ndarray:
    return cloud.points @ camera.R_TC.T + camera.p_TC


def select_cylinder(points_T, d_pi: float = 0.1) -> np.ndarray:
    """Points whose distance to the tool z axis is at most ``d_pi``."""
    pts = np.asarray(points_T, dtype=float).reshape(-1, 3)
    # |p x (p - e_z)| reduces to the radial distance sqrt(x^2 + y^2); the
    # boundary is inclusive up to rounding
    r2 = pts[:, 0] * pts[:, 0] + pts[:, 1] * pts[:, 1]
    return pts[r2 <= (d_pi * (1.0 + 1e-12)) ** 2]


@dataclass(frozen=True)
class SurfacePatch:
    center: np.ndarray  # patch center in T
    normal: np.ndarray  # unit normal in T, facing the tool
    distance: float  # d_t along the tool z axis
    count: int

    @property
    def contact_point(self) -> np.ndarray:
        return self.distance * E_Z


def fit_patch(points, parallel_tol: float = 0.05, rank_tol: float = 1e-9) -> SurfacePatch | None:
    """Plane fit by SVD of the centered points and tool-axis intersection.

    Returns ``None`` (no estimate) for fewer than three points, collinear
    support, or a plane nearly parallel to the tool axis.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        return None
    center = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - center, full_matrices=False)
    if s[1] <= rank_tol * max(s[0], 1e-300):
        return None
    n = vt[-1]
    n = n / np.linalg.norm(n)
    if n[2] > 0.0:
        n = -n
    if abs(n[2]) < parallel_tol:
        return None
    gamma = float(center @ n) / float(n[2])
    return SurfacePatch(center, n, gamma, len(pts))


def scatter_normal(points) -> np.ndarray:
    """Smallest-eigenvalue eigenvector of the scatter matrix (reference implementation)."""
    pts = np.asarray(points, dtype=float)
    c = pts - pts.mean(axis=0)
    _, v = np.linalg.eigh(c.T @ c)
    n = v[:, 0]
    return -n if n[2] > 0.0 else n


def cylinder_rays(camera: CameraModel, d_pi: float, z_min: float) -> np.ndarray:
    """Indices of the camera rays that pass within ``d_pi`` of the tool axis at tool depth ``z >= z_min``.

    Only these rays can produce points that survive :func:`select_cylinder`
    for surfaces no closer than ``z_min`` along the tool axis.
    """
    u = camera.rays @ camera.R_TC.T  # directions in T
    c = camera.p_TC
    with np.errstate(divide="ignore", invalid="ignore"):
        r_lo = np.where(u[:, 2] > 0.0, (z_min - c[2]) / u[:, 2], np.inf)
    r_lo = np.maximum(r_lo, 0.0)
    r_hi = np.full(len(u), camera.max_range)
    uu = u[:, 0] ** 2 + u[:, 1] ** 2
    cu = c[0] * u[:, 0] + c[1] * u[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r_star = np.where(uu > 0.0, -cu / uu, r_lo)
    r_star = np.clip(r_star, r_lo, r_hi)
    r_star = np.where(np.isfinite(r_star), r_star, r_hi)
    rad2 = (c[0] + r_star * u[:, 0]) ** 2 + (c[1] + r_star * u[:, 1]) ** 2
    keep = (r_lo <= r_hi) & (rad2 <= (d_pi * (1.0 + 1e-9)) ** 2)
    return np.flatnonzero(keep)


class DistanceEstimator:
    """Camera-rate patch estimator with a latch read by the control loop.

    Rays that cannot reach the selection cylinder at tool depth ``z_min`` or
    beyond are not rendered; this changes nothing unless a surface comes
    closer than ``-z_min`` behind the tool tip.  ``z_min=None`` renders every pixel.
    """

    def __init__(self, camera: CameraModel, d_pi: float = 0.1, rate: float = 30.0,
                 dump_dir: str | Path | None = None, z_min: float | None = -0.1):
        if rate <= 0:
            raise ValidationError("camera rate must be positive")
        self.camera = camera
        self.d_pi = d_pi
        self._rays = None if z_min is None else camera.rays[cylinder_rays(camera, d_pi, z_min)]
        self.period = 1.0 / rate
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        self.latest: SurfacePatch | None = None
        self.last_count = 0
        self.frames = 0
        self._next = 0.0

    def due(self, t: float) -> bool:
        return t + 1e-9 >= self._next

    def update(self, t: float, tool_pose: Pose, surfaces, rng=None) -> SurfacePatch | None:
        """Render and fit if a frame is due; always returns the latched patch."""
        if not self.due(t):
            return self.latest
        self._next += self.period
        while self._next <= t:
            self._next += self.period
        cloud = render_cloud(self.camera, tool_pose, surfaces, t, rng, self._rays)
        sel = select_cylinder(cloud_to_tool(cloud, self.camera), self.d_pi)
        self.last_count = len(sel)
        self.latest = fit_patch(sel)
        if self.dump_dir is not None:
            self._dump(sel)
        self.frames += 1
        return self.latest

    def _dump(self, pts):
        self.dump_dir.mkdir(parents=True, exist_ok=True)
        with open(self.dump_dir / f"cloud_{self.frames:06d}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z"])
            w.writerows(pts.tolist())


__all__ = [
    "CameraModel", "PointCloud", "SurfacePatch", "DistanceEstimator", "render_cloud",
    "cloud_to_tool", "select_cylinder", "fit_patch", "scatter_normal", "cylinder_rays",
]
