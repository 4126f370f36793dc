"""Many soft matching matrices, one rotation.

For centred, consistent clouds ``X`` and ``Y`` (3 x N coordinate matrices)
with true matching ``M*``, Procrustes factors ``H* = X (Y M*^T)^T = U* D* V*^T``
and returns ``R* = V* U*^T``. Any

    P(D) = X^+ (U* D V*^T) (Y^T)^+,   X^+ = X^T (X X^T)^-1,  (Y^T)^+ = (Y Y^T)^-1 Y

gives ``X P Y^T = U* D V*^T`` and therefore the same rotation for every
positive descending ``D``, while its virtual points ``Y P^T`` equal
``V* D U*^T (X X^T)^-1 X``: exactly ``R* X`` at ``D = D*`` and a linearly
distorted copy otherwise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidMotion, rotation_angle_deg
from .procrustes import weighted_procrustes

RANK_TOL = 1e-6
GAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AmbiguityInstance:
    X: np.ndarray  # 3 x N, centred source
    Y: np.ndarray  # 3 x N, centred target in shuffled order
    perm: np.ndarray  # Y[:, perm[i]] is the partner of X[:, i]
    H: np.ndarray
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray
    R: np.ndarray
    X_pinv: np.ndarray  # N x 3
    Yt_pinv: np.ndarray  # 3 x N

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def radius(self) -> float:
        """Largest distance of a source point from the centroid."""
        return float(np.linalg.norm(self.X, axis=0).max())

    def true_correspondences(self) -> np.ndarray:
        return self.R @ self.X


def _check_rank(A: np.ndarray, name: str) -> None:
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= RANK_TOL:
        raise ValueError(f"{name} is rank deficient (smallest singular value {s[-1]:.3g})")


def build_instance(cloud: PointCloud, motion: RigidMotion, seed: int = 0) -> AmbiguityInstance:
    if cloud.size < 4:
        raise ValueError("need at least 4 points")
    X = (cloud.points - cloud.points.mean(axis=0)).T
    _check_rank(X, "source")
    perm = np.random.default_rng(seed).permutation(cloud.size)
    Y_ordered = motion.apply(cloud.points)
    Y = np.empty((3, cloud.size))
    Y[:, perm] = Y_ordered.T
    Y -= Y.mean(axis=1, keepdims=True)
    _check_rank(Y, "target")
    YM = Y[:, perm]  # Y M*^T: partners in source order
    H = X @ YM.T
    U, D, Vt = np.linalg.svd(H)
    return AmbiguityInstance(
        X, Y, perm, H, U, D, Vt.T, Vt.T @ U.T,
        X.T @ np.linalg.inv(X @ X.T), np.linalg.inv(Y @ Y.T) @ Y,
    )


def _check_D(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64).ravel()
    if D.shape != (3,) or not np.all(np.isfinite(D)) or np.any(D <= 0):
        raise ValueError("D must be three positive finite values")
    if not (D[0] - D[1] > GAP_TOL * D[0] and D[1] - D[2] > GAP_TOL * D[0]):
        raise ValueError("D must be strictly descending")
    return D


def soft_matrix_family(inst: AmbiguityInstance, D) -> np.ndarray:
    D = _check_D(D)
    return inst.X_pinv @ (inst.U * D) @ inst.V.T @ inst.Yt_pinv


def virtual_points(inst: AmbiguityInstance, P: np.ndarray) -> np.ndarray:
    """``Y P^T``: one weighted-average partner per source point (3 x N)."""
    return inst.Y @ P.T


def procrustes_rotation(inst: AmbiguityInstance, P: np.ndarray) -> np.ndarray:
    return weighted_procrustes(inst.X.T, virtual_points(inst, P).T).rotation


@dataclass(frozen=True)
class DegenerationRow:
    label: str
    D: tuple
    rotation_error_deg: float
    virtual_rmse: float
    relative_rmse: float  # virtual_rmse / cloud radius
    p_min: float
    p_max: float
    p_negative_fraction: float
    row_sum_min: float
    row_sum_max: float


def degeneration_report(inst: AmbiguityInstance, Ds, labels=None) -> list:
    truth = inst.true_correspondences()
    rows = []
    for k, D in enumerate(Ds):
        P = soft_matrix_family(inst, D)
        virt = virtual_points(inst, P)
        rmse = float(np.sqrt(np.mean(np.sum((virt - truth) ** 2, axis=0))))
        rs = P.sum(axis=1)
        rows.append(DegenerationRow(
            labels[k] if labels else f"D{k}", tuple(float(v) for v in np.asarray(D, dtype=float)),
            rotation_angle_deg(procrustes_rotation(inst, P), inst.R),
            rmse, rmse / inst.radius,
            float(P.min()), float(P.max()), float(np.mean(P < 0)), float(rs.min()), float(rs.max()),
        ))
    return rows


def standard_variants(D_star) -> tuple[list, list]:
    """Scaled and component-perturbed versions of ``D*`` that stay strictly descending."""
    d1, d2, d3 = (float(v) for v in D_star)
    cands = [
        ("D*", [d1, d2, d3]),
        ("10xD*", [10 * d1, 10 * d2, 10 * d3]),
        ("0.5xD*", [0.5 * d1, 0.5 * d2, 0.5 * d3]),
        ("2xD*", [2 * d1, 2 * d2, 2 * d3]),
        ("D3/2", [d1, d2, d3 / 2]),
        ("D3/4", [d1, d2, d3 / 4]),
        ("2xD1", [2 * d1, d2, d3]),
        ("D2/2", [d1, d2 / 2, d3]),
    ]
    labels, Ds = [], []
    for name, D in cands:
        try:
            _check_D(D)
        except ValueError:
            continue
        labels.append(name)
        Ds.append(D)
    return labels, Ds


def write_report(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "D1", "D2", "D3", "rotation_error_deg", "virtual_rmse", "relative_rmse",
                    "p_min", "p_max", "p_negative_fraction", "row_sum_min", "row_sum_max"])
        for r in rows:
            w.writerow([r.label, *map(repr, r.D), repr(r.rotation_error_deg), repr(r.virtual_rmse),
                        repr(r.relative_rmse), repr(r.p_min), repr(r.p_max), repr(r.p_negative_fraction),
                        repr(r.row_sum_min), repr(r.row_sum_max)])
