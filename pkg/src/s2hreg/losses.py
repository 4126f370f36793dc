"""Matching, inlier-count and motion losses, the straight-through gradient,
and a small gradient-descent demo that learns a similarity matrix.

``L1 = -sum(M_pred * M_gt) / sum(M_gt)`` rewards recovering ground-truth
pairs, ``L2 = -sum(M_pred) / (N_src + N_tgt)`` rewards keeping inliers, and
``L3 = |R_gt^T R_pred - I|_F + |t_gt - t_pred|`` compares motions. Both L1
and L2 are linear in the hard matching, so feeding their gradient straight
to the soft matrix ``P`` is exact in form and well conditioned.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .assignment import PartialPermutationMatrix, project_to_ppm
from .geometry import PointCloud, RigidMotion
from .procrustes import correspondences_from_ppm, weighted_procrustes
from .sinkhorn import SinkhornConfig, sinkhorn_backward, sinkhorn_forward


@dataclass(frozen=True)
class LossConfig:
    lambda_match: float = 1.0
    lambda_inlier: float = 1.0
    lambda_motion: float = 1.0

    def __post_init__(self):
        for v in (self.lambda_match, self.lambda_inlier, self.lambda_motion):
            if not (np.isfinite(v) and v >= 0):
                raise ValueError("loss weights must be finite and non-negative")


@dataclass(frozen=True)
class LossReport:
    match: float  # L1
    inlier: float  # L2
    motion: float  # L3
    total: float
    n_gt: int
    n_pred: int
    n_correct: int


def _dense(M) -> np.ndarray:
    return M.dense() if isinstance(M, PartialPermutationMatrix) else np.asarray(M, dtype=np.float64)


def loss_match(M_pred, M_gt) -> float:
    P, G = _dense(M_pred), _dense(M_gt)
    if P.shape != G.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {G.shape}")
    n = G.sum()
    if n == 0:
        raise ValueError("ground-truth matching has no inliers")
    return float(-(P * G).sum() / n)


def loss_inlier_count(M_pred) -> float:
    P = _dense(M_pred)
    return float(-P.sum() / (P.shape[0] + P.shape[1]))


def loss_motion(pred: RigidMotion, gt: RigidMotion) -> float:
    rot = np.linalg.norm(gt.rotation.T @ pred.rotation - np.eye(3))
    return float(rot + np.linalg.norm(gt.translation - pred.translation))


def grad_loss_match(M_gt) -> np.ndarray:
    G = _dense(M_gt)
    n = G.sum()
    if n == 0:
        raise ValueError("ground-truth matching has no inliers")
    return -G / n


def grad_loss_inlier_count(shape) -> np.ndarray:
    return np.full(shape, -1.0 / (shape[0] + shape[1]))


def straight_through_grad(dM) -> np.ndarray:
    """Gradient w.r.t. the soft matrix: the hard matrix's gradient, unchanged."""
    return np.array(dM, dtype=np.float64, copy=True)


def loss_report(M_pred: PartialPermutationMatrix, M_gt: PartialPermutationMatrix, pred: RigidMotion,
                gt: RigidMotion, cfg: LossConfig | None = None) -> LossReport:
    cfg = cfg or LossConfig()
    l1, l2, l3 = loss_match(M_pred, M_gt), loss_inlier_count(M_pred), loss_motion(pred, gt)
    total = cfg.lambda_match * l1 + cfg.lambda_inlier * l2 + cfg.lambda_motion * l3
    correct = int(np.count_nonzero((M_pred.row_to_col >= 0) & (M_pred.row_to_col == M_gt.row_to_col)))
    return LossReport(l1, l2, l3, float(total), M_gt.n_matched, M_pred.n_matched, correct)


# --------------------------------------------------------------------------
# descent demo


class DescentDiverged(FloatingPointError):
    def __init__(self, msg, trajectory):
        super().__init__(msg)
        self.trajectory = trajectory


def demo_pair(n: int = 16, n_outliers: int = 4, seed: int = 0):
    """Two ``n``-point clouds sharing ``n - n_outliers`` points under a random motion."""
    from .synthdata import LabeledPair, PairSpec, procedural_shape, sample_motion

    if not 0 <= n_outliers < n - 2:
        raise ValueError("need at least 3 shared points")
    rng = np.random.default_rng(seed)
    base = procedural_shape("composite", n + n_outliers, seed).points
    motion = sample_motion(rng)
    order = rng.permutation(n + n_outliers)
    src_idx = order[:n]
    tgt_idx = rng.permutation(order[n_outliers:])
    where = {int(b): j for j, b in enumerate(tgt_idx)}
    pairs = [(i, where[int(b)]) for i, b in enumerate(src_idx) if int(b) in where]
    M = PartialPermutationMatrix.from_pairs(pairs, (n, n))
    return LabeledPair(
        PointCloud(base[src_idx]), PointCloud(motion.apply(base[tgt_idx])), motion, M,
        M.row_to_col >= 0, M.col_to_row >= 0,
        PairSpec(seed=seed, base_size=n + n_outliers, sample_size=n),
    )


def _predicted_motion(M, pair) -> RigidMotion:
    # identity when the matching is too small for Procrustes
    corr, w = correspondences_from_ppm(M, pair.target)
    try:
        return weighted_procrustes(pair.source, corr, w)
    except ValueError:
        return RigidMotion.identity()


def descent_demo(pair, steps: int = 200, lr: float = 1.0, cfg: LossConfig | None = None,
                 sinkhorn: SinkhornConfig | None = None, S0=None, inlier_threshold: float = 0.5) -> list:
    """Learn ``S`` directly by gradient descent on ``l1 * L1 + l2 * L2``.

    Each step runs Sinkhorn for a fixed number of iterations, projects to a
    PPM, and pulls the loss gradient back through the straight-through
    substitution and the unrolled Sinkhorn. Returns one report per step,
    each taken before that step's update.
    """
    cfg = cfg or LossConfig()
    sinkhorn = sinkhorn or SinkhornConfig(max_iterations=20)
    shape = pair.matching.shape
    S = np.zeros(shape) if S0 is None else np.array(S0, dtype=np.float64)
    if S.shape != shape:
        raise ValueError(f"initial similarity must have shape {shape}")
    dM = cfg.lambda_match * grad_loss_match(pair.matching) + cfg.lambda_inlier * grad_loss_inlier_count(shape)
    dP = straight_through_grad(dM)
    trajectory = []
    for step in range(steps):
        trace = sinkhorn_forward(S, sinkhorn)
        M = project_to_ppm(trace.P, inlier_threshold)
        rep = loss_report(M, pair.matching, _predicted_motion(M, pair), pair.motion, cfg)
        trajectory.append(rep)
        if not np.isfinite(rep.total):
            raise DescentDiverged(f"non-finite loss at step {step}", trajectory)
        gS = sinkhorn_backward(S, sinkhorn, dP, trace)
        S = S - lr * gS
        if not np.all(np.isfinite(S)):
            raise DescentDiverged(f"non-finite similarity after step {step}", trajectory)
    return trajectory


def write_trajectory(path, trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "L1", "L2", "L3", "inliers"])
        for k, r in enumerate(trajectory):
            w.writerow([k, repr(r.match), repr(r.inlier), repr(r.motion), r.n_pred])
