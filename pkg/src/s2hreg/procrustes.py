"""Weighted Procrustes on PPM correspondences.

With binary weights ``w`` normalised to ``wb`` (sum 1)::

    K = I - sqrt(wb) sqrt(wb)^T,  W = diag(wb)
    H = Y' K W K X^T = U D V^T
    R = U diag(1, 1, det(U) det(V)) V^T,  t = (Y' - R X) W 1

Rows with zero weight (outliers, whose correspondence is the zero vector)
drop out of both ``H`` and ``t`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import PartialPermutationMatrix
from .geometry import PointCloud, RigidMotion

MIN_INLIERS = 3


class DegenerateCorrespondences(ValueError):
    """Fewer weighted correspondences than a 3D rigid motion needs."""


class DegenerateGeometry(ValueError):
    """Weighted points are (nearly) collinear, so the rotation is not determined."""


@dataclass(frozen=True, eq=False)
class MatchWeights:
    w: np.ndarray  # binary per source point
    w_bar: np.ndarray  # w / sum(w), or zeros when nothing matched

    @classmethod
    def from_binary(cls, w) -> "MatchWeights":
        w = np.asarray(w, dtype=np.float64).ravel()
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("match weights must be binary")
        total = w.sum()
        return cls(w, w / total if total > 0 else np.zeros_like(w))

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.w))


def correspondences_from_ppm(M: PartialPermutationMatrix, target: PointCloud) -> tuple[np.ndarray, MatchWeights]:
    """Rows of ``Y M^T``: the matched target point, or the origin for outliers."""
    if M.shape[1] != target.size:
        raise ValueError(f"PPM has {M.shape[1]} columns but target has {target.size} points")
    corr = np.zeros((M.shape[0], 3))
    rows = np.flatnonzero(M.row_to_col >= 0)
    corr[rows] = target.points[M.row_to_col[rows]]
    return corr, MatchWeights.from_binary(M.row_to_col >= 0)


def svd3(H) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD of a 3x3 matrix by one-sided Jacobi; singular values descending.

    Returns ``U, d, V`` with ``H = U @ diag(d) @ V.T`` and ``U``, ``V``
    orthogonal. Null directions of ``U`` are completed by cross products.
    """
    A = np.array(H, dtype=np.float64).reshape(3, 3)
    V = np.eye(3)
    for _ in range(30):
        off = 0.0
        for p, q in ((0, 1), (0, 2), (1, 2)):
            alpha = A[:, p] @ A[:, p]
            beta = A[:, q] @ A[:, q]
            gamma = A[:, p] @ A[:, q]
            if gamma == 0.0 or abs(gamma) <= 1e-15 * np.sqrt(alpha * beta):
                continue
            off = max(off, abs(gamma) / np.sqrt(alpha * beta))
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = A[:, p].copy(), A[:, q].copy()
            A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = V[:, p].copy(), V[:, q].copy()
            V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if off <= 1e-15:
            break
    d = np.linalg.norm(A, axis=0)
    order = np.argsort(-d, kind="stable")
    d, A, V = d[order], A[:, order], V[:, order]
    U = np.zeros((3, 3))
    tiny = 1e-300 + 1e-14 * d[0]
    for k in range(3):
        if d[k] > tiny:
            U[:, k] = A[:, k] / d[k]
    if d[1] <= tiny:
        # rank <= 1: any orthonormal completion works
        if d[0] <= tiny:
            U[:, 0] = (1.0, 0.0, 0.0)
        e = np.eye(3)[np.argmin(np.abs(U[:, 0]))]
        u1 = e - (e @ U[:, 0]) * U[:, 0]
        U[:, 1] = u1 / np.linalg.norm(u1)
    if d[2] <= tiny:
        U[:, 2] = np.cross(U[:, 0], U[:, 1])
    return U, d, V


def _weights(weights, n: int) -> np.ndarray:
    if isinstance(weights, MatchWeights):
        w = weights.w
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != n:
        raise ValueError(f"{w.shape[0]} weights for {n} points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    return w


def weighted_procrustes(source, corr, weights=None, rank_tol: float = 1e-10) -> RigidMotion:
    """Rigid motion mapping weighted ``source`` rows onto ``corr`` rows."""
    X = source.points if isinstance(source, PointCloud) else np.asarray(source, dtype=np.float64)
    Y = corr.points if isinstance(corr, PointCloud) else np.asarray(corr, dtype=np.float64)
    if X.shape != Y.shape:
        raise ValueError(f"source {X.shape} and correspondences {Y.shape} differ in shape")
    w = np.ones(X.shape[0]) if weights is None else _weights(weights, X.shape[0])
    if np.count_nonzero(w) < MIN_INLIERS:
        raise DegenerateCorrespondences(
            f"{np.count_nonzero(w)} weighted correspondences, need at least {MIN_INLIERS}"
        )
    wb = w / w.sum()
    sw = np.sqrt(wb)
    # rows with zero weight are dropped outright so that arbitrary values in
    # them cannot leak in through floating point
    keep = w > 0
    Xk, Yk, wb, sw = X[keep], Y[keep], wb[keep], sw[keep]
    Xc = Xk - np.outer(sw, sw @ Xk)  # (X K)^T
    Yc = Yk - np.outer(sw, sw @ Yk)  # (Y' K)^T
    H = (Yc * wb[:, None]).T @ Xc
    U, d, V = svd3(H)
    if d[0] <= 0 or d[1] <= rank_tol * d[0]:
        raise DegenerateGeometry("weighted correspondences are collinear (rank(H) < 2)")
    E = np.diag([1.0, 1.0, np.sign(np.linalg.det(U) * np.linalg.det(V))])
    R = U @ E @ V.T
    t = wb @ (Yk - Xk @ R.T)
    return RigidMotion(R, t)
