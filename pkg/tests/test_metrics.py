import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2hreg.assignment import PartialPermutationMatrix
from s2hreg.geometry import PointCloud, RigidMotion, rot_z, rotation_to_euler
from s2hreg.metrics import (adaptive_thresholds, aggregate, correspondence_discrepancy_matrix,
                            correspondence_discrepancy_transform, matching_recall, motion_errors, re_te,
                            recall_curve, rmse_mae)
from s2hreg.synthdata import PairSpec, make_pair, procedural_shape

from conftest import random_motion
from oracles import quaternion_angle_deg


def test_perfect_prediction_zero(rng):
    m = random_motion(rng)
    r = aggregate([m], [m])
    assert (r.rmse_r, r.mae_r, r.rmse_t, r.mae_t, r.re_mean, r.te_mean) == (0, 0, 0, 0, 0, 0)
    assert r.success_rate == 100.0
    rt = re_te(m, m)
    assert rt.re == 0 and rt.te == 0 and rt.success


def test_five_degree_yaw():
    r = aggregate([RigidMotion(rot_z(5), np.zeros(3))], [RigidMotion.identity()])
    assert r.mae_r == pytest.approx(5 / 3, abs=1e-12)
    assert r.rmse_r == pytest.approx(math.sqrt(25 / 3), abs=1e-12)


def test_batch_of_two_vs_direct_formula(rng):
    preds = [random_motion(rng) for _ in range(2)]
    gts = [random_motion(rng) for _ in range(2)]
    e = []
    t = []
    for p, g in zip(preds, gts):
        d = rotation_to_euler(p.rotation) - rotation_to_euler(g.rotation)
        e += [abs((x + 180) % 360 - 180) for x in d]
        t += list(np.abs(p.translation - g.translation))
    r = aggregate(preds, gts)
    assert r.rmse_r == pytest.approx(math.sqrt(sum(x * x for x in e) / 6), rel=1e-12)
    assert r.mae_r == pytest.approx(sum(e) / 6, rel=1e-12)
    assert r.rmse_t == pytest.approx(math.sqrt(sum(x * x for x in t) / 6), rel=1e-12)
    assert r.mae_t == pytest.approx(sum(t) / 6, rel=1e-12)


def test_re_half_turn_and_quaternion_oracle(rng):
    assert re_te(RigidMotion(rot_z(180), np.zeros(3)), RigidMotion.identity()).re == pytest.approx(180, abs=1e-9)
    for _ in range(200):
        a, b = random_motion(rng), random_motion(rng)
        assert abs(re_te(a, b).re - quaternion_angle_deg(a.rotation, b.rotation)) < 1e-9


def test_te_and_thresholds():
    a = RigidMotion(np.eye(3), [0.3, 0.4, 0.0])
    r = re_te(a, RigidMotion.identity())
    assert r.te == pytest.approx(0.5) and r.te_squared == pytest.approx(0.25) and not r.success
    assert re_te(a, RigidMotion.identity(), (5.0, 0.6)).success


def test_motion_errors_wrap():
    e = motion_errors(RigidMotion(rot_z(179), np.zeros(3)), RigidMotion(rot_z(-179), np.zeros(3)))
    assert e.euler_deg[0] == pytest.approx(2.0)
    assert e.rotation_deg == pytest.approx(2.0)


def test_rmse_mae_errors():
    with pytest.raises(ValueError):
        rmse_mae([])
    with pytest.raises(ValueError):
        aggregate([], [])


@pytest.fixture(scope="module")
def pair():
    return make_pair(procedural_shape("sphere", 256, 1), PairSpec(seed=2, base_size=256, sample_size=192))


def test_cd_matrix_examples(pair):
    gt = pair.matching
    assert correspondence_discrepancy_matrix(gt, pair.target, gt) == (0.0, 0.0)
    _, mae = correspondence_discrepancy_matrix(PartialPermutationMatrix.empty(gt.shape), pair.target, gt)
    p = gt.pairs()
    assert mae == pytest.approx(np.linalg.norm(pair.target.points[p[:, 1]], axis=1).mean(), rel=1e-12)


def test_cd_matrix_one_wrong_of_four():
    Y = PointCloud(np.array([[0, 0, 0], [1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0], [1.0, 1, 1]]))
    gt = PartialPermutationMatrix.from_pairs([(0, 0), (1, 1), (2, 2), (3, 3)], (4, 5))
    pred = PartialPermutationMatrix.from_pairs([(0, 0), (1, 1), (2, 2), (3, 4)], (4, 5))
    d = np.linalg.norm([1.0, 1, -2])
    rmse, mae = correspondence_discrepancy_matrix(pred, Y, gt)
    assert mae == pytest.approx(d / 4) and rmse == pytest.approx(math.sqrt(d * d / 4))


def test_cd_transform(pair):
    gt = pair.matching
    assert correspondence_discrepancy_transform(pair.motion, pair.source, pair.target, gt) == (0.0, 0.0)
    pv = make_pair(procedural_shape("sphere", 256, 1), PairSpec(seed=2, base_size=256, sample_size=192,
                                                                noise_sigma=0.01))
    got = correspondence_discrepancy_transform(pv.motion, pv.source, pv.target, pv.matching)
    res = []
    moved = pv.motion.apply(pv.source.points)
    for i, j in pv.matching.pairs():
        d = [float(np.sum((moved[i] - y) ** 2)) for y in pv.target.points]
        res.append(float(np.linalg.norm(pv.target.points[int(np.argmin(d))] - pv.target.points[j])))
    assert got == pytest.approx(rmse_mae(res), rel=1e-12)
    worse = correspondence_discrepancy_transform(RigidMotion.identity(), pv.source, pv.target, pv.matching)
    assert worse[0] > got[0] and worse[1] > got[1]


def test_adaptive_thresholds_loop(pair):
    Y = pair.target.points
    idx = pair.matching.pairs()[:10, 1]
    got = adaptive_thresholds(pair.target, idx, 4)
    for g, j in zip(got, idx):
        d = sorted(float(np.linalg.norm(Y[j] - Y[k])) for k in range(len(Y)) if k != j)
        assert g == pytest.approx(sum(d[:4]) / 4, rel=1e-12)
    with pytest.raises(ValueError):
        adaptive_thresholds(pair.target, idx, pair.target.size)


def test_recall_examples(pair):
    gt = pair.matching
    assert matching_recall(gt, gt, pair.target, 0) == 100.0
    empty = PartialPermutationMatrix.empty(gt.shape)
    # sphere points sit at radius 1, far from the origin predicted for unmatched rows
    assert all(r == 0.0 for _, r in recall_curve(empty, gt, pair.target, range(1, 11)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_recall_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    Y = PointCloud(rng.normal(size=(30, 3)))
    gt = np.stack([np.arange(20), rng.permutation(30)[:20]], 1)
    pred = Y.points[gt[:, 1]] + rng.normal(scale=rng.uniform(0.05, 1.0), size=(20, 3))
    full = np.zeros((20, 3))
    full[gt[:, 0]] = pred
    curve = [r for _, r in recall_curve(full, gt, Y, range(11))]
    assert all(0 <= r <= 100 for r in curve)
    assert all(b >= a for a, b in zip(curve, curve[1:]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_re_symmetric_and_rmse_dominates(seed):
    rng = np.random.default_rng(seed)
    a, b = random_motion(rng), random_motion(rng)
    assert abs(re_te(a, b).re - re_te(b, a).re) < 1e-9
    preds = [random_motion(rng) for _ in range(4)]
    gts = [random_motion(rng) for _ in range(4)]
    r = aggregate(preds, gts)
    assert r.rmse_r >= r.mae_r >= 0 and r.rmse_t >= r.mae_t >= 0
