import numpy as np
import pytest

from s2hreg.ambiguity import (build_instance, degeneration_report, procrustes_rotation, soft_matrix_family,
                              standard_variants, virtual_points, write_report)
from s2hreg.geometry import PointCloud, rotation_angle_deg
from s2hreg.synthdata import procedural_shape

from conftest import random_motion


@pytest.fixture(scope="module")
def inst():
    rng = np.random.default_rng(0)
    return build_instance(procedural_shape("composite", 1024, 0), random_motion(rng), seed=0)


def test_singular_values_positive_descending(inst):
    assert np.all(inst.D > 0) and np.all(np.diff(inst.D) < 0)


def test_fixed_point_reproduces_truth(inst):
    P = soft_matrix_family(inst, inst.D)
    truth = inst.true_correspondences()
    assert np.abs(virtual_points(inst, P) - truth).max() < 1e-9
    assert rotation_angle_deg(procrustes_rotation(inst, P), inst.R) < 1e-7


def test_family_reconstructs_cross_covariance(inst):
    for D in ([5.0, 3.0, 1.0], 10 * inst.D, [inst.D[0], inst.D[1], inst.D[2] / 2]):
        P = soft_matrix_family(inst, D)
        target = (inst.U * np.asarray(D)) @ inst.V.T
        assert np.abs(inst.X @ P @ inst.Y.T - target).max() < 1e-9 * max(1.0, np.abs(target).max())


def test_same_rotation_different_matrix(inst):
    P0 = soft_matrix_family(inst, inst.D)
    P1 = soft_matrix_family(inst, 10 * inst.D)
    assert np.abs(P1 - P0).max() > 1e-6
    assert rotation_angle_deg(procrustes_rotation(inst, P1), inst.R) < 1e-6


def test_true_matching_yields_rotation(inst):
    # the permutation alone recovers R*: Y M*^T pairs partners with the source
    Yp = inst.Y[:, inst.perm]
    np.testing.assert_allclose(inst.R @ inst.X, Yp, atol=1e-9)


def test_bad_D_rejected(inst):
    for D in ([1.0, 2.0, 3.0], [1.0, 1.0, 0.5], [1.0, 0.5, 0.0], [1.0, 0.5], [1.0, np.nan, 0.1]):
        with pytest.raises(ValueError):
            soft_matrix_family(inst, D)


def test_rank_deficient_rejected(rng):
    flat = np.c_[rng.normal(size=(50, 2)), np.zeros(50)]
    with pytest.raises(ValueError):
        build_instance(PointCloud(flat), random_motion(rng))
    with pytest.raises(ValueError):
        build_instance(PointCloud(rng.normal(size=(3, 3))), random_motion(rng))


def test_report_on_round_shape(tmp_path):
    rng = np.random.default_rng(3)
    inst = build_instance(procedural_shape("sphere", 512, 3), random_motion(rng), seed=3)
    labels, Ds = standard_variants(inst.D)
    assert len(Ds) >= 5 and "10xD*" in labels and "D3/2" in labels
    rows = degeneration_report(inst, Ds, labels)
    for r in rows:
        assert r.rotation_error_deg < 1e-6
        if r.label == "D*":
            assert r.virtual_rmse < 1e-6
        else:
            assert r.relative_rmse > 0.1
    write_report(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == len(rows) + 1 and lines[0].startswith("label,D1,D2,D3")
