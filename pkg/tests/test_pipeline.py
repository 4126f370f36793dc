import json

import numpy as np
import pytest

from s2hreg.assignment import is_partial_permutation
from s2hreg.geometry import PointCloud, RigidMotion, euler_to_rotation
from s2hreg.pipeline import RegistrationConfig, RegistrationFailed, register, run_manifest
from s2hreg.procrustes import correspondences_from_ppm, weighted_procrustes
from s2hreg.synthdata import PairSpec, make_pair, procedural_shape


@pytest.fixture(scope="module")
def cloud():
    return procedural_shape("composite", 384, 2)


def test_config_validation_and_round_trip():
    cfg = RegistrationConfig(iterations=3, temperature_schedule=(0.1, 0.05, 0.05))
    assert RegistrationConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert RegistrationConfig.training().iterations == 2
    assert [cfg.threshold(k) for k in range(3)] == [0.01, 0.01, 0.5]
    assert RegistrationConfig(iterations=1).threshold(0) == 0.5
    for kw in ({"iterations": 0}, {"min_inliers": 2}, {"temperature_schedule": (0.1,)}, {"spatial_factor": 0.0}):
        with pytest.raises(ValueError):
            RegistrationConfig(**kw)


def test_identity_pair(cloud):
    res = register(cloud, cloud)
    assert np.abs(res.motion.rotation - np.eye(3)).max() < 1e-6
    assert np.abs(res.motion.translation).max() < 1e-6
    assert res.matching.row_to_col.tolist() == list(range(cloud.size))
    assert len(res.history) == 5 and not res.degraded


def test_small_motion_consistent(cloud):
    R = euler_to_rotation([6.0, 5.0, 5.0])
    truth = RigidMotion(R, np.array([0.06, -0.05, 0.06]))
    res = register(cloud, PointCloud(truth.apply(cloud.points)))
    ang = np.degrees(np.arccos(np.clip((np.trace(res.motion.rotation.T @ R) - 1) / 2, -1, 1)))
    assert np.radians(ang) < 1e-3
    assert np.linalg.norm(res.motion.translation - truth.translation) < 1e-3


def test_outlier_pair_valid_and_deterministic():
    base = procedural_shape("composite", 512, 5)
    pair = make_pair(base, PairSpec(seed=5, base_size=512, sample_size=384))
    a = register(pair.source, pair.target)
    b = register(pair.source, pair.target)
    assert is_partial_permutation(a.matching.dense())
    assert np.array_equal(a.motion.rotation, b.motion.rotation)
    assert np.array_equal(a.matching.row_to_col, b.matching.row_to_col)
    assert len(a.inlier_counts) == 5


def test_single_iteration_matches_procrustes_on_its_matching(cloud):
    truth = RigidMotion(euler_to_rotation([3.0, 2.0, 1.0]), np.array([0.02, 0.0, -0.01]))
    tgt = PointCloud(truth.apply(cloud.points))
    res = register(cloud, tgt, RegistrationConfig(iterations=1, inlier_threshold=0.01))
    corr, w = correspondences_from_ppm(res.matching, tgt)
    ref = weighted_procrustes(cloud, corr, w)
    assert np.abs(ref.rotation - res.motion.rotation).max() < 1e-12
    assert np.abs(ref.translation - res.motion.translation).max() < 1e-12
    if res.matching.row_to_col.tolist() == list(range(cloud.size)):
        assert np.abs(res.motion.rotation - truth.rotation).max() < 1e-12


def test_size_limits_and_failure(rng):
    with pytest.raises(ValueError):
        register(PointCloud(rng.normal(size=(3, 3))), PointCloud(rng.normal(size=(10, 3))))
    # spread-out noise with nothing in common gives no confident matches
    a = PointCloud(rng.normal(size=(40, 3)))
    b = PointCloud(rng.normal(size=(40, 3)) * 5 + 20)
    cfg = RegistrationConfig(coarse_threshold=0.99, inlier_threshold=0.99)
    with pytest.raises(RegistrationFailed) as exc:
        register(a, b, cfg)
    assert exc.value.history == []


def test_artifacts(cloud):
    res = register(cloud, cloud, RegistrationConfig(iterations=2), keep_artifacts=True)
    assert set(res.artifacts) == {"target_features", "source_features", "profit"}
    assert res.artifacts["profit"].matrix.shape == (2 * cloud.size, 2 * cloud.size)


def test_run_manifest(tmp_path):
    base = procedural_shape("sphere", 128, 0)
    entries = []
    for s in range(2):
        p = make_pair(base, PairSpec(seed=s, base_size=128, sample_size=128))
        side = p.write(tmp_path / f"pair_{s:04d}")
        entries.append({"source": side["source"], "target": side["target"], "gt": f"pair_{s:04d}.json"})
    entries.append({"source": "missing.xyz", "target": "missing.xyz"})
    (tmp_path / "m.json").write_text(json.dumps(entries))
    fails = run_manifest(tmp_path / "m.json", tmp_path / "out.jsonl", RegistrationConfig(iterations=2),
                         truncate=True, dumps={"features": tmp_path / "f", "profit": tmp_path / "p"})
    recs = [json.loads(x) for x in (tmp_path / "out.jsonl").read_text().splitlines()]
    assert fails == 1 and len(recs) == 3
    assert [r["index"] for r in recs] == [0, 1, 2]
    assert recs[0]["iterations"] == 2 and "rotation_error_deg" in recs[0]
    assert "error" in recs[2] and recs[2]["degraded"]
    assert (tmp_path / "f" / "pair_0000_src_features.csv").exists()
    assert (tmp_path / "p" / "pair_0001_profit.csv").exists()
