"""Registration metrics: Euler/translation errors, RE/TE, correspondence
discrepancy by matching matrix and by transform, and matching recall with
an adaptive per-point threshold.

Batch aggregation treats each Euler angle (and translation component) of
every pair as one sample, so a single 5 degree yaw error gives
``MAE(R) = 5 / 3``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import PartialPermutationMatrix
from .geometry import PointCloud, RigidMotion, nearest_neighbor, rotation_angle_deg, rotation_to_euler

INDOOR_THRESHOLDS = (15.0, 0.30)
OUTDOOR_THRESHOLDS = (5.0, 0.6)


@dataclass(frozen=True)
class MotionErrors:
    euler_deg: np.ndarray  # |euler(pred) - euler(gt)| per ZYX component
    translation_abs: np.ndarray  # |t_pred - t_gt| per component
    rotation_deg: float  # geodesic angle (RE)
    translation: float  # |t_pred - t_gt| (TE)


def _wrap_deg(a):
    return (np.asarray(a) + 180.0) % 360.0 - 180.0


def relative_rotation_deg(R_pred, R_gt) -> float:
    """Angle of ``R_pred^-1 R_gt`` in degrees.

    Equal to ``arccos((trace(R_pred^-1 R_gt) - 1) / 2)`` (clamped), but
    evaluated through the chordal distance so identical rotations give
    exactly 0 and small angles keep full precision.
    """
    return rotation_angle_deg(R_pred, R_gt)


def motion_errors(pred: RigidMotion, gt: RigidMotion) -> MotionErrors:
    e = np.abs(_wrap_deg(rotation_to_euler(pred.rotation) - rotation_to_euler(gt.rotation)))
    dt = pred.translation - gt.translation
    return MotionErrors(e, np.abs(dt), relative_rotation_deg(pred.rotation, gt.rotation),
                        float(np.linalg.norm(dt)))


@dataclass(frozen=True)
class ReTe:
    re: float
    te: float
    te_squared: float
    success: bool


def re_te(pred: RigidMotion, gt: RigidMotion, thresholds=INDOOR_THRESHOLDS) -> ReTe:
    """Rotation error (deg), translation error and the success flag ``RE < a and TE < b``."""
    re = relative_rotation_deg(pred.rotation, gt.rotation)
    te = float(np.linalg.norm(pred.translation - gt.translation))
    return ReTe(re, te, te * te, bool(re < thresholds[0] and te < thresholds[1]))


def rmse_mae(values) -> tuple[float, float]:
    v = np.abs(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("no values to aggregate")
    return float(np.sqrt(np.mean(v * v))), float(np.mean(v))


@dataclass(frozen=True)
class MetricReport:
    rmse_r: float
    mae_r: float
    rmse_t: float
    mae_t: float
    re_mean: float
    te_mean: float
    success_rate: float  # percent of pairs passing the RE/TE thresholds
    n_pairs: int

    def as_row(self) -> dict:
        return dict(self.__dict__)


def aggregate(preds, gts, thresholds=INDOOR_THRESHOLDS) -> MetricReport:
    """RMSE/MAE over all Euler and translation components of a batch."""
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equally many (>= 1) predictions and ground truths")
    errs = [motion_errors(p, g) for p, g in zip(preds, gts)]
    rt = [re_te(p, g, thresholds) for p, g in zip(preds, gts)]
    rmse_r, mae_r = rmse_mae([e.euler_deg for e in errs])
    rmse_t, mae_t = rmse_mae([e.translation_abs for e in errs])
    return MetricReport(
        rmse_r, mae_r, rmse_t, mae_t,
        float(np.mean([r.re for r in rt])), float(np.mean([r.te for r in rt])),
        100.0 * float(np.mean([r.success for r in rt])), len(preds),
    )


# --------------------------------------------------------------------------
# correspondence quality


def _gt_pairs(gt) -> np.ndarray:
    if isinstance(gt, PartialPermutationMatrix):
        p = gt.pairs()
    else:
        p = np.asarray(gt, dtype=np.int64).reshape(-1, 2)
    if p.shape[0] == 0:
        raise ValueError("need at least one ground-truth pair")
    return p


def predicted_points(M: PartialPermutationMatrix, target: PointCloud) -> np.ndarray:
    """Rows of ``Y M^T``: matched target point per source point, origin if unmatched."""
    out = np.zeros((M.shape[0], 3))
    rows = np.flatnonzero(M.row_to_col >= 0)
    out[rows] = target.points[M.row_to_col[rows]]
    return out


def correspondence_discrepancy_matrix(M_pred: PartialPermutationMatrix, target: PointCloud, gt_pairs) -> tuple[float, float]:
    """RMSE/MAE distance between predicted and true partners over gt inliers."""
    p = _gt_pairs(gt_pairs)
    pred = predicted_points(M_pred, target)[p[:, 0]]
    return rmse_mae(np.linalg.norm(pred - target.points[p[:, 1]], axis=1))


def correspondence_discrepancy_transform(motion: RigidMotion, source: PointCloud, target: PointCloud,
                                         gt_pairs) -> tuple[float, float]:
    """Same as the matrix version, with partners found by snapping the moved source to its nearest target."""
    p = _gt_pairs(gt_pairs)
    idx, _ = nearest_neighbor(motion.apply(source.points[p[:, 0]]), target.points)
    return rmse_mae(np.linalg.norm(target.points[idx] - target.points[p[:, 1]], axis=1))


def adaptive_thresholds(target: PointCloud, gt_targets, K: int) -> np.ndarray:
    """Mean distance from each true partner to its ``K`` nearest other target points (0 for K = 0)."""
    gt_targets = np.asarray(gt_targets, dtype=np.int64)
    if K < 0:
        raise ValueError("K must be >= 0")
    if K == 0:
        return np.zeros(gt_targets.shape[0])
    if K > target.size - 1:
        raise ValueError(f"K = {K} exceeds the {target.size - 1} other target points")
    d2 = np.sum((target.points[gt_targets, None, :] - target.points[None, :, :]) ** 2, axis=2)
    d2[np.arange(gt_targets.shape[0]), gt_targets] = np.inf
    part = np.sort(d2, axis=1, kind="stable")[:, :K]
    return np.sqrt(part).mean(axis=1)


def matching_recall(pred_points, gt_pairs, target: PointCloud, K: int) -> float:
    """Percent of gt pairs whose predicted partner lies within the adaptive threshold.

    ``pred_points`` is a PPM (partners as rows of ``Y M^T``) or an ``(N, 3)``
    array of predicted partner positions per source point.
    """
    p = _gt_pairs(gt_pairs)
    if isinstance(pred_points, PartialPermutationMatrix):
        pred_points = predicted_points(pred_points, target)
    pred = np.asarray(pred_points, dtype=np.float64)[p[:, 0]]
    tau = adaptive_thresholds(target, p[:, 1], K)
    d = np.linalg.norm(pred - target.points[p[:, 1]], axis=1)
    return 100.0 * float(np.mean(d <= tau))


def recall_curve(pred_points, gt_pairs, target: PointCloud, ks=range(11)) -> list:
    return [(int(k), matching_recall(pred_points, gt_pairs, target, int(k))) for k in ks]


__all__ = [
    "MotionErrors", "ReTe", "MetricReport", "motion_errors", "re_te", "rmse_mae", "aggregate",
    "relative_rotation_deg", "predicted_points", "correspondence_discrepancy_matrix",
    "correspondence_discrepancy_transform", "adaptive_thresholds", "matching_recall", "recall_curve",
    "INDOOR_THRESHOLDS", "OUTDOOR_THRESHOLDS",
]
