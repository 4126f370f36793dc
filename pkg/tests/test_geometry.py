import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from s2hreg.geometry import (PointCloud, RigidMotion, apply_motion, compose, euler_to_rotation, inverse, knn,
                             nearest_neighbor, pairwise_sq_dists, rot_z, rotation_angle_deg, rotation_to_euler)

from conftest import random_motion


def test_cloud_rejects_bad_input():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 1.0]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))


def test_cloud_is_read_only():
    c = PointCloud(np.ones((3, 3)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 5.0


def test_identity_and_axis_rotation():
    c = PointCloud(np.random.default_rng(0).normal(size=(20, 3)))
    assert np.array_equal(apply_motion(c, RigidMotion.identity()).points, c.points)
    out = apply_motion(PointCloud([[1.0, 0.0, 0.0]]), RigidMotion(rot_z(90), np.zeros(3)))
    np.testing.assert_allclose(out.points, [[0.0, 1.0, 0.0]], atol=1e-15)


def test_round_trip_and_rigidity(rng):
    pts = rng.normal(size=(50, 3))
    m = random_motion(rng)
    moved = m.apply(pts)
    np.testing.assert_allclose(inverse(m).apply(moved), pts, atol=1e-12)
    d0 = np.sqrt(pairwise_sq_dists(pts, pts))
    d1 = np.sqrt(pairwise_sq_dists(moved, moved))
    np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-12)


def test_compose_semantics(rng):
    a, b = random_motion(rng), random_motion(rng)
    x = rng.normal(size=(10, 3))
    np.testing.assert_allclose(compose(a, b).apply(x), a.apply(b.apply(x)), atol=1e-12)
    np.testing.assert_allclose((a @ b).apply(x), a.apply(b.apply(x)), atol=1e-12)
    ident = compose(a, inverse(a))
    np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(ident.translation, 0, atol=1e-12)
    c = compose(RigidMotion.identity(), a)
    np.testing.assert_allclose(c.rotation, a.rotation, atol=1e-15)
    q = compose(RigidMotion(rot_z(45), np.zeros(3)), RigidMotion(rot_z(45), np.zeros(3)))
    np.testing.assert_allclose(q.rotation, rot_z(90), atol=1e-15)


def test_inverse_cases(rng):
    i = inverse(RigidMotion.identity())
    np.testing.assert_allclose(i.rotation, np.eye(3))
    m = random_motion(rng)
    inv = inverse(m)
    np.testing.assert_allclose(inv.rotation, m.rotation.T, atol=1e-15)
    np.testing.assert_allclose(inv.translation, -m.rotation.T @ m.translation, atol=1e-15)
    mm = inverse(inverse(m))
    np.testing.assert_allclose(mm.rotation, m.rotation, atol=1e-12)
    np.testing.assert_allclose(mm.translation, m.translation, atol=1e-12)


def test_motion_reprojects_or_rejects(rng):
    R = Rotation.random(random_state=1).as_matrix()
    m = RigidMotion(R + 1e-8 * rng.normal(size=(3, 3)), np.zeros(3))
    np.testing.assert_allclose(m.rotation.T @ m.rotation, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(m.rotation) - 1) < 1e-12
    with pytest.raises(ValueError):
        RigidMotion(R + 1e-3, np.zeros(3))
    with pytest.raises(ValueError):
        RigidMotion(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_motion_dict_round_trip(rng):
    m = random_motion(rng)
    back = RigidMotion.from_dict(m.to_dict())
    assert np.array_equal(back.rotation, m.rotation) and np.array_equal(back.translation, m.translation)


def test_nearest_neighbor_examples():
    idx, dist = nearest_neighbor(PointCloud([[0.0, 0.0, 0.0]]), PointCloud([[1.0, 0, 0], [0, 2.0, 0]]))
    assert idx[0] == 0 and dist[0] == 1.0
    pts = np.random.default_rng(3).normal(size=(30, 3))
    idx, dist = nearest_neighbor(pts, pts)
    assert np.array_equal(idx, np.arange(30)) and np.all(dist == 0)


def test_nearest_neighbor_empty_reference():
    with pytest.raises(ValueError):
        nearest_neighbor(np.zeros((1, 3)), np.zeros((0, 3)))


def test_nearest_neighbor_ties_go_low():
    idx, _ = nearest_neighbor([[0.0, 0.0, 0.0]], [[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    assert idx[0] == 0


def _brute_nn(q, r):
    out = []
    for p in q:
        best, bj = np.inf, -1
        for j, s in enumerate(r):
            d = float(np.sum((p - s) ** 2))
            if d < best:
                best, bj = d, j
        out.append(bj)
    return np.array(out)


def test_nearest_neighbor_vs_exhaustive(rng):
    q, r = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
    assert np.array_equal(nearest_neighbor(q, r)[0], _brute_nn(q, r))


def test_knn_vs_exhaustive_sort(rng):
    r = rng.normal(size=(10, 3))
    for p in rng.normal(size=(20, 3)):
        d = [float(np.sum((p - s) ** 2)) for s in r]
        expect = sorted(range(10), key=lambda j: (d[j], j))[:3]
        assert knn(p, r, 3).tolist() == expect


def test_knn_k1_matches_nn_and_excludes_self(rng):
    q, r = rng.normal(size=(15, 3)), rng.normal(size=(40, 3))
    assert np.array_equal(knn(q, r, 1)[:, 0], nearest_neighbor(q, r)[0])
    got = knn(r[5], r, 4, exclude_self=True)
    assert 5 not in got.tolist() and len(got) == 4
    with pytest.raises(ValueError):
        knn(r[5], r, 40, exclude_self=True)


def test_euler_examples():
    np.testing.assert_allclose(rotation_to_euler(np.eye(3)), 0, atol=1e-15)
    np.testing.assert_allclose(rotation_to_euler(rot_z(30)), [30, 0, 0], atol=1e-12)


def test_euler_matches_scipy_intrinsic_zyx(rng):
    for _ in range(100):
        ang = rng.uniform([-180, -89, -180], [180, 89, 180])
        R = euler_to_rotation(ang)
        np.testing.assert_allclose(R, Rotation.from_euler("ZYX", ang, degrees=True).as_matrix(), atol=1e-12)


def test_euler_round_trip_1000(rng):
    worst = 0.0
    for _ in range(1000):
        ang = rng.uniform([-179.9, -88.9, -179.9], [179.9, 88.9, 179.9])
        back = rotation_to_euler(euler_to_rotation(ang))
        worst = max(worst, float(np.abs(back - ang).max()))
    assert worst < 1e-9


def test_gimbal_lock_canonical_roll_zero():
    R = euler_to_rotation([20.0, 90.0, 35.0])
    e = rotation_to_euler(R)
    assert e[2] == 0.0 and e[1] == 90.0
    np.testing.assert_allclose(euler_to_rotation(e), R, atol=1e-12)


def test_rotation_angle_accurate_and_exact():
    assert rotation_angle_deg(np.eye(3), np.eye(3)) == 0.0
    assert abs(rotation_angle_deg(rot_z(1e-7), np.eye(3)) - 1e-7) < 1e-15
    assert abs(rotation_angle_deg(rot_z(180), np.eye(3)) - 180) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rigidity_property(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(12, 3))
    moved = random_motion(rng).apply(pts)
    d0 = np.sqrt(pairwise_sq_dists(pts, pts))
    d1 = np.sqrt(pairwise_sq_dists(moved, moved))
    np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-12)
