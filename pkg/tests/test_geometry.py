import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeroforce.core import ValidationError
from aeroforce.geometry import HeightField, Plane, TriangleMesh, closest_points_on_triangles

coord = st.floats(-0.3, 0.3)


def wavy(seed=7):
    return HeightField.procedural([0.0, 0.0, 0.0], np.eye(3), size=(1.0, 1.8), amplitude=0.06, seed=seed)


def test_plane_probe_and_intersect():
    p = Plane([0, 0, 0], [1, 0, 0])
    d, n, v = p.probe([0.3, 1.0, 2.0])
    assert d == pytest.approx(0.3) and np.array_equal(n, [1, 0, 0]) and np.array_equal(v, np.zeros(3))
    r = p.intersect(np.array([1.0, 0, 0]), np.array([[-1.0, 0, 0], [1.0, 0, 0], [-1.0, 1.0, 0] / np.sqrt(2)]))
    assert r[0] == pytest.approx(1.0)
    assert r[1] == np.inf  # pointing away
    assert r[2] == pytest.approx(np.sqrt(2))


def test_plane_back_face_is_invisible():
    p = Plane([0, 0, 0], [1, 0, 0])
    assert p.intersect(np.array([-1.0, 0, 0]), np.array([[1.0, 0, 0]]))[0] == np.inf


def test_moving_plane_offset_and_rate():
    p = Plane([0, 0, 0], [1, 0, 0], motion=[(0.0, 0.0), (1.0, 0.1)])
    d, _, v = p.probe([0.5, 0, 0], 0.5)
    assert d == pytest.approx(0.45)
    np.testing.assert_allclose(v, [0.1, 0, 0])
    assert p.offset(5.0) == (0.1, 0.0)
    with pytest.raises(ValidationError):
        Plane([0, 0, 0], [1, 0, 0], motion=[(1.0, 0.0), (1.0, 0.1)])


def test_zero_normal_rejected():
    with pytest.raises(ValidationError):
        Plane([0, 0, 0], [0, 0, 0])


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_plane_fast_probe_matches_probe(x):
    p = Plane([0.1, -0.2, 0.3], [1, 2, -0.5], motion=[(0.0, 0.0), (2.0, 0.2)])
    d, n, v = p.probe(x, 0.7)
    df, nf, vf = p.probe_fast(x, 0.7)
    assert df == pytest.approx(d, abs=1e-12)
    np.testing.assert_allclose(nf, n, atol=1e-15)
    np.testing.assert_allclose(vf, v, atol=1e-15)


@given(coord, coord, st.floats(-0.1, 0.2))
def test_heightfield_fast_probe_matches_probe(x, y, z):
    h = wavy()
    d, n, _ = h.probe([x, y, z])
    df, nf, _ = h.probe_fast((x, y, z))
    assert df == pytest.approx(d, abs=1e-12)
    np.testing.assert_allclose(nf, n, atol=1e-12)


def test_heightfield_outside_extent_has_no_contact():
    d, _, _ = wavy().probe([5.0, 0.0, -0.01])
    assert d == np.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_heightfield_rays_land_on_the_surface(seed):
    rng = np.random.default_rng(seed)
    h = wavy()
    origin = np.array([0.0, 0.0, 0.8])
    dirs = np.column_stack([rng.uniform(-0.4, 0.4, 200), rng.uniform(-0.4, 0.4, 200), -np.ones(200)])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = h.intersect(origin, dirs)
    hit = np.isfinite(r)
    assert hit.mean() > 0.9
    p = origin + r[hit, None] * dirs[hit]
    assert np.abs(p[:, 2] - h.height(p[:, 0], p[:, 1])).max() < 1e-9


def test_heightfield_rays_from_below_miss():
    r = wavy().intersect(np.array([0.0, 0.0, -0.8]), np.array([[0.0, 0.0, 1.0]]))
    assert r[0] == np.inf


def test_closest_point_on_triangle_regions():
    a, b, c = np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]), np.array([[0.0, 1, 0]])
    cases = {
        (0.2, 0.2, 1.0): (0.2, 0.2, 0.0),  # face
        (-1.0, -1.0, 0.0): (0.0, 0.0, 0.0),  # vertex a
        (2.0, -0.5, 0.0): (1.0, 0.0, 0.0),  # vertex b
        (0.5, -1.0, 0.0): (0.5, 0.0, 0.0),  # edge ab
        (1.0, 1.0, 0.0): (0.5, 0.5, 0.0),  # edge bc
    }
    for p, expect in cases.items():
        np.testing.assert_allclose(closest_points_on_triangles(np.array(p), a, b, c)[0], expect, atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_closest_point_beats_random_barycentric_samples(p):
    rng = np.random.default_rng(0)
    tri = np.array([[0.0, 0, 0], [1.0, 0.2, 0.1], [0.3, 1.0, -0.2]])
    q = closest_points_on_triangles(np.array(p), tri[:1], tri[1:2], tri[2:])[0]
    w = rng.dirichlet(np.ones(3), size=2000)
    samples = w @ tri
    assert np.linalg.norm(q - p) <= np.linalg.norm(samples - p, axis=1).min() + 1e-12


def test_mesh_intersect_and_probe_agree_with_plane():
    verts = [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]]
    mesh = TriangleMesh(verts, [[0, 1, 2], [0, 2, 3]])
    np.testing.assert_allclose(mesh.normals, [[0, 0, 1], [0, 0, 1]])
    r = mesh.intersect(np.array([0.2, 0.3, 1.0]), np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]))
    assert r[0] == pytest.approx(1.0) and r[1] == np.inf
    d, n, _ = mesh.probe([0.2, 0.3, -0.01])
    assert d == pytest.approx(-0.01) and np.array_equal(n, [0, 0, 1])


def test_degenerate_mesh_rejected():
    with pytest.raises(ValidationError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_heightfield_mesh_tracks_surface():
    h = wavy()
    mesh = h.to_mesh(0.02)
    c, n = h.closest_point([0.1, -0.2, 0.3])
    assert c[2] == pytest.approx(float(h.height(c[0], c[1])), abs=1e-12)
    assert n[2] > 0.9
    assert mesh.vertices.shape[1] == 3
