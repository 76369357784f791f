import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeroforce.core import FrameId, Pose, ValidationError, rot_z
from aeroforce.geometry import HeightField, Plane
from aeroforce.perception import (
    CameraModel,
    DistanceEstimator,
    PointCloud,
    cloud_to_tool,
    cylinder_rays,
    fit_patch,
    render_cloud,
    scatter_normal,
    select_cylinder,
)

E_Z = np.array([0.0, 0.0, 1.0])


def tool_facing_plane(distance, camera=None):
    """A tool pose looking along world +x at the plane x = distance (outward normal -x)."""
    R_WT = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])  # T z -> W x
    pose = Pose(np.zeros(3), R_WT, FrameId.W, FrameId.T)
    return pose, Plane([distance, 0.0, 0.0], [-1.0, 0.0, 0.0])


def angle(a, b):
    return math.acos(min(1.0, abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))))


def test_empty_scene_renders_empty_cloud():
    cam = CameraModel()
    pose, _ = tool_facing_plane(1.0)
    assert len(render_cloud(cam, pose, [])) == 0


def test_center_pixel_range_on_plane_one_metre_ahead():
    cam = CameraModel(p_TC=np.zeros(3), resolution=(3, 3))
    pose, plane = tool_facing_plane(1.0)
    cloud = render_cloud(cam, pose, [plane])
    center = cloud.points[4]
    np.testing.assert_allclose(center, [0.0, 0.0, 1.0], atol=1e-15)


def test_selected_point_count_order_of_magnitude():
    cam = CameraModel()
    pose, plane = tool_facing_plane(1.0)
    cloud = render_cloud(cam, pose, [plane])
    sel = select_cylinder(cloud_to_tool(cloud, cam), 0.1)
    assert len(cloud) > 20_000
    assert 100 <= len(sel) <= 2500


def test_noisy_render_requires_generator():
    cam = CameraModel(sigma=0.01, resolution=(4, 4))
    pose, plane = tool_facing_plane(1.0)
    with pytest.raises(ValidationError):
        render_cloud(cam, pose, [plane])
    assert len(render_cloud(cam, pose, [plane], rng=np.random.default_rng(0))) == 16


def test_invisible_surface_is_not_rendered():
    cam = CameraModel(resolution=(4, 4))
    pose, plane = tool_facing_plane(1.0)

    class Hidden:
        visible = False
        geometry = plane

    assert len(render_cloud(cam, pose, [Hidden()])) == 0


def test_point_cloud_rejects_non_finite():
    with pytest.raises(ValidationError):
        PointCloud([[0.0, np.inf, 1.0]])


def test_cylinder_selection_examples():
    pts = np.array([[0.0, 0.0, 0.7], [0.1, 0.0, 0.5], [0.2, 0.0, 0.5]])
    np.testing.assert_array_equal(select_cylinder(pts[:1], 1e-6), pts[:1])
    np.testing.assert_array_equal(select_cylinder(pts, 0.1), pts[:2])


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.01, 0.5))
def test_selection_matches_cross_product_form(p, d_pi):
    p = np.array(p)
    radial = np.linalg.norm(np.cross(p, p - E_Z))
    kept = len(select_cylinder(p[None], d_pi)) == 1
    if abs(radial - d_pi) > 1e-9:
        assert kept == (radial <= d_pi)


def test_fit_axis_aligned_plane():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-0.1, 0.1, 50), rng.uniform(-0.1, 0.1, 50), np.ones(50)])
    patch = fit_patch(pts)
    np.testing.assert_allclose(patch.normal, [0, 0, -1], atol=1e-12)
    assert patch.center[2] == pytest.approx(1.0)
    assert patch.distance == pytest.approx(1.0)
    np.testing.assert_allclose(patch.contact_point, [0, 0, 1.0])


def test_fit_inclined_plane_intersection():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-0.05, 0.05, (2, 80))
    pts = np.column_stack([x, y, 2.0 - x])
    patch = fit_patch(pts)
    np.testing.assert_allclose(patch.normal, -np.array([1, 0, 1]) / math.sqrt(2), atol=1e-12)
    assert patch.distance == pytest.approx(2.0, abs=1e-12)


def test_fit_noisy_plane_monte_carlo():
    rng = np.random.default_rng(2)
    n = 1000
    pts = np.column_stack([rng.uniform(-0.1, 0.1, n), rng.uniform(-0.1, 0.1, n), 0.5 + rng.normal(0, 0.005, n)])
    patch = fit_patch(pts)
    assert abs(patch.distance - 0.5) < 1e-3
    assert math.degrees(angle(patch.normal, E_Z)) < 0.5


def test_fit_degenerate_inputs_return_none():
    assert fit_patch(np.zeros((2, 3))) is None
    line = np.outer(np.linspace(0, 1, 10), [1.0, 0.0, 1.0])
    assert fit_patch(line) is None
    # plane containing the tool axis: the intersection is ill-posed
    rng = np.random.default_rng(3)
    wall = np.column_stack([np.zeros(30), rng.uniform(-1, 1, 30), rng.uniform(0, 1, 30)])
    assert fit_patch(wall) is None


def plane_samples(seed, n=40):
    rng = np.random.default_rng(seed)
    normal = rng.normal(size=3)
    normal[2] = abs(normal[2]) + 0.3
    normal /= np.linalg.norm(normal)
    uv = rng.uniform(-0.1, 0.1, (n, 2))
    basis = np.linalg.svd(normal[None])[2][1:]
    pts = uv @ basis + rng.uniform(0.3, 1.5) * normal
    return pts + rng.normal(0.0, 0.002, (n, 3))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_sign_convention_and_unit_normal(seed):
    patch = fit_patch(plane_samples(seed))
    if patch is not None:
        assert abs(np.linalg.norm(patch.normal) - 1.0) < 1e-9
        assert patch.normal[2] < 0.0


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_svd_normal_matches_scatter_eigenvector(seed):
    pts = plane_samples(seed)
    patch = fit_patch(pts)
    if patch is not None:
        assert angle(patch.normal, scatter_normal(pts)) < 1e-6


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.permutations(list(range(40))))
def test_fit_invariant_to_order_and_duplication(seed, perm):
    pts = plane_samples(seed)
    a = fit_patch(pts)
    if a is None:
        return
    b = fit_patch(pts[perm])
    c = fit_patch(np.vstack([pts, pts]))
    for other in (b, c):
        assert other.distance == pytest.approx(a.distance, abs=1e-9)
        assert angle(other.normal, a.normal) < 1e-9


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi))
def test_rotation_about_tool_axis_keeps_distance(seed, yaw):
    pts = plane_samples(seed)
    a = fit_patch(pts)
    if a is None:
        return
    b = fit_patch(pts @ rot_z(yaw).T)
    assert b.distance == pytest.approx(a.distance, abs=1e-9)


def test_cylinder_rays_give_the_same_selection_as_a_full_render():
    cam = CameraModel(resolution=(86, 112))
    surf = HeightField.procedural([0.0, 0.0, 0.0], np.eye(3), seed=3)
    R_WT = np.diag([1.0, -1.0, -1.0])  # tool z down onto the height-field
    for height in (0.3, 0.6, 1.0):
        pose = Pose([0.05, -0.1, height], R_WT, FrameId.W, FrameId.T)
        full = select_cylinder(cloud_to_tool(render_cloud(cam, pose, [surf]), cam), 0.1)
        sub = cam.rays[cylinder_rays(cam, 0.1, -0.1)]
        part = select_cylinder(cloud_to_tool(render_cloud(cam, pose, [surf], rays=sub), cam), 0.1)
        assert len(full) > 50
        np.testing.assert_array_equal(np.sort(full, axis=0), np.sort(part, axis=0))


def test_estimator_latches_between_frames():
    cam = CameraModel(resolution=(43, 56))
    est = DistanceEstimator(cam, rate=30.0)
    pose, plane = tool_facing_plane(0.8)
    p0 = est.update(0.0, pose, [plane])
    assert est.frames == 1 and p0 is not None
    assert p0.distance == pytest.approx(0.8, abs=1e-9)
    assert est.update(0.01, pose, [plane]) is p0 and est.frames == 1
    est.update(1 / 30, pose, [plane])
    assert est.frames == 2


def test_estimator_dumps_clouds(tmp_path):
    cam = CameraModel(resolution=(43, 56))
    est = DistanceEstimator(cam, dump_dir=tmp_path)
    pose, plane = tool_facing_plane(0.8)
    est.update(0.0, pose, [plane])
    lines = (tmp_path / "cloud_000000.csv").read_text().splitlines()
    assert lines[0] == "x,y,z" and len(lines) == est.last_count + 1
