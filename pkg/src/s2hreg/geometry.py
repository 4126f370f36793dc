"""Point clouds, rigid motions, nearest-neighbour queries and Euler angles.

Clouds are stored as ``(N, 3)`` float64 arrays (row ``i`` is point ``i``);
all matching matrices index rows by source order and columns by target order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit

__all__ = [
    "PointCloud",
    "RigidMotion",
    "apply_motion",
    "compose",
    "inverse",
    "pairwise_sq_dists",
    "nearest_neighbor",
    "knn",
    "rotation_to_euler",
    "euler_to_rotation",
    "rot_x",
    "rot_y",
    "rot_z",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of finite 3D points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[np.asarray(idx)])

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Rotation ``R`` in SO(3) plus translation ``t``; maps ``x`` to ``R x + t``.

    Inputs within ``1e-6`` of orthogonality are re-projected onto the nearest
    rotation; anything further away, or with negative determinant, is rejected.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("motion entries must be finite")
        dev = np.abs(R.T @ R - np.eye(3)).max()
        det = np.linalg.det(R)
        if dev > 1e-6 or det <= 0:
            raise ValueError(f"not a rotation (|R^T R - I| = {dev:.3g}, det = {det:.3g})")
        if dev > 1e-12 or abs(det - 1.0) > 1e-12:
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3), np.zeros(3))

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidMotion":
        return cls(np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3), d["translation"])

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidMotion") -> "RigidMotion":
        return compose(self, other)


def apply_motion(cloud: PointCloud, motion: RigidMotion) -> PointCloud:
    return PointCloud(motion.apply(cloud.points))


def compose(a: RigidMotion, b: RigidMotion) -> RigidMotion:
    """Motion equivalent to applying ``b`` first, then ``a``."""
    return RigidMotion(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(m: RigidMotion) -> RigidMotion:
    Rt = m.rotation.T
    return RigidMotion(Rt, -Rt @ m.translation)


# --------------------------------------------------------------------------
# distances and neighbours (exhaustive scan is the contract)


@njit
def _sq_dists_numba(a, b):
    n, m = a.shape[0], b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        ax, ay, az = a[i, 0], a[i, 1], a[i, 2]
        for j in range(m):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            out[i, j] = dx * dx + dy * dy + dz * dz
    return out


def _sq_dists_numpy(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, 2_000_000 // max(1, b.shape[0]))
    for s in range(0, a.shape[0], step):
        d = a[s : s + step, None, :] - b[None, :, :]
        out[s : s + step] = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    return out


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances between rows of ``a`` and ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 3)
    if _accel.use_numba():
        return _sq_dists_numba(a, b)
    return _sq_dists_numpy(a, b)


@njit
def _nn_numba(q, r):
    n, m = q.shape[0], r.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        best = np.inf
        bj = 0
        for j in range(m):
            dx = q[i, 0] - r[j, 0]
            dy = q[i, 1] - r[j, 1]
            dz = q[i, 2] - r[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                bj = j
        idx[i] = bj
        dist[i] = np.sqrt(best)
    return idx, dist


def _points(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def nearest_neighbor(query, reference) -> tuple[np.ndarray, np.ndarray]:
    """Index and distance of the closest reference point for every query point.

    Ties go to the lowest reference index.
    """
    q = np.ascontiguousarray(_points(query))
    r = np.ascontiguousarray(_points(reference))
    if r.shape[0] == 0:
        raise ValueError("reference cloud is empty")
    if _accel.use_numba():
        return _nn_numba(q, r)
    d2 = _sq_dists_numpy(q, r)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(q.shape[0]), idx])


def knn(query, reference, k: int, exclude_self: bool = False) -> np.ndarray:
    """The ``k`` nearest reference indices per query, ascending by distance.

    ``query`` may be a single point (returns shape ``(k,)``) or many points
    (returns ``(n, k)``). With ``exclude_self`` every reference point at
    distance exactly 0 from the query is skipped. Ties go to the lower index.
    """
    single = not isinstance(query, PointCloud) and np.asarray(query).ndim == 1
    q = _points(query)
    r = _points(reference)
    if k < 0:
        raise ValueError("k must be non-negative")
    d2 = pairwise_sq_dists(q, r)
    order = np.argsort(d2, axis=1, kind="stable")
    out = np.empty((q.shape[0], k), dtype=np.int64)
    for i in range(q.shape[0]):
        row = order[i]
        if exclude_self:
            row = row[d2[i, row] > 0.0]
        if k > row.shape[0]:
            raise ValueError(f"k={k} exceeds the {row.shape[0]} usable reference points")
        out[i] = row[:k]
    return out[0] if single else out


# --------------------------------------------------------------------------
# rotations


def rot_x(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(angles) -> np.ndarray:
    """Intrinsic Z-Y-X angles ``(z, y, x)`` in degrees to ``Rz @ Ry @ Rx``."""
    z, y, x = np.asarray(angles, dtype=np.float64).reshape(3)
    return rot_z(z) @ rot_y(y) @ rot_x(x)


def rotation_to_euler(R) -> np.ndarray:
    """Inverse of :func:`euler_to_rotation`; pitch lands in [-90, 90].

    At gimbal lock the roll is fixed to 0 and the yaw absorbs the remainder.
    """
    R = np.asarray(R, dtype=np.float64).reshape(3, 3)
    sp = -R[2, 0]
    if abs(sp) >= 1.0 - 1e-12:
        pitch = np.copysign(90.0, sp)
        yaw = np.degrees(np.arctan2(-R[0, 1], R[1, 1]))
        return np.array([yaw, pitch, 0.0])
    pitch = np.degrees(np.arcsin(np.clip(sp, -1.0, 1.0)))
    yaw = np.degrees(np.arctan2(R[1, 0], R[0, 0]))
    roll = np.degrees(np.arctan2(R[2, 1], R[2, 2]))
    return np.array([yaw, pitch, roll])


def rotation_angle_deg(Ra, Rb) -> float:
    """Geodesic angle between two rotations, in degrees.

    Uses ``|Ra - Rb|_F = 2 sqrt(2) sin(theta / 2)``, which stays accurate
    near zero where ``arccos((trace - 1) / 2)`` loses half its digits.
    """
    s = np.linalg.norm(np.asarray(Ra) - np.asarray(Rb)) / np.sqrt(8.0)
    return float(np.degrees(2.0 * np.arcsin(min(1.0, s))))
