"""Hand-crafted point descriptors and the feature similarity matrix.

Each point gets a 10D raw feature per neighbour (its coordinates, the offset
to the neighbour, and the 4D point pair feature of the two), aggregated over
its radius neighbourhood by elementwise mean and standard deviation into a
20D vector and L2-normalised.

Normals are not available for synthetic clouds, so a point's normal is the
unit vector from its radius-neighbourhood centroid to the point.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .geometry import PointCloud, pairwise_sq_dists

DEFAULT_RADIUS = 0.3
DEFAULT_SAMPLES = 64
FEATURE_DIM = 20


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Unit-length per-point descriptors plus the raw aggregates they came from."""

    descriptors: np.ndarray  # (N, 20), unit rows
    aggregate: np.ndarray  # (N, 20) mean|std before normalisation
    radius: float
    samples: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.descriptors)):
            raise ValueError("descriptors must be finite")

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point"] + [f"f{k}" for k in range(self.dim)])
            for i, row in enumerate(self.descriptors):
                w.writerow([i] + [repr(float(v)) for v in row])


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle in [0, pi] between vectors along the last axis; 0 if either is zero."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def ppf(p_i, n_i, p_j, n_j) -> np.ndarray:
    """Point pair feature ``(ang(n_i, d), ang(n_j, d), ang(n_i, n_j), |d|)``, ``d = p_j - p_i``."""
    d = np.asarray(p_j, dtype=np.float64) - np.asarray(p_i, dtype=np.float64)
    n_i = np.asarray(n_i, dtype=np.float64)
    n_j = np.asarray(n_j, dtype=np.float64)
    return np.stack(
        [_angle(n_i, d), _angle(n_j, d), _angle(n_i, n_j), np.linalg.norm(d, axis=-1)], axis=-1
    )


def neighborhoods(points: np.ndarray, radius: float, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Up to ``samples`` nearest radius-neighbours of every point (self excluded).

    Returns a padded ``(N, samples)`` index array and the per-point counts. A
    point with nothing inside the radius falls back to its single nearest
    neighbour.
    """
    n = points.shape[0]
    if n < 2:
        raise ValueError("need at least two points to build neighbourhoods")
    d2 = pairwise_sq_dists(points, points)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :samples]
    within = np.take_along_axis(d2, order, axis=1) <= radius * radius
    counts = within.sum(axis=1)
    counts = np.maximum(counts, 1)
    return np.ascontiguousarray(order, dtype=np.int64), counts.astype(np.int64)


def estimate_normals(points: np.ndarray, radius: float = DEFAULT_RADIUS) -> np.ndarray:
    """Unit vector from the radius-neighbourhood centroid to each point.

    All radius neighbours are used (no sample cap). A point that coincides
    with its centroid gets the zero vector.
    """
    pts = np.asarray(points, dtype=np.float64)
    d2 = pairwise_sq_dists(pts, pts)
    np.fill_diagonal(d2, np.inf)
    inside = d2 <= radius * radius
    lonely = ~inside.any(axis=1)
    if np.any(lonely):
        inside[lonely, np.argmin(d2[lonely], axis=1)] = True
    w = inside.astype(np.float64)
    centroid = (w @ pts) / w.sum(axis=1, keepdims=True)
    v = pts - centroid
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def raw_feature_10d(cloud: PointCloud, i: int, j: int, normals: np.ndarray | None = None,
                    radius: float = DEFAULT_RADIUS) -> np.ndarray:
    """``[x_i, x_j - x_i, ppf(i, j)]`` for one centre/neighbour pair."""
    pts = cloud.points
    if normals is None:
        normals = estimate_normals(pts, radius)
    return np.concatenate([pts[i], pts[j] - pts[i], ppf(pts[i], normals[i], pts[j], normals[j])])


@njit
def _vec_angle(ax, ay, az, bx, by, bz):
    cx = ay * bz - az * by
    cy = az * bx - ax * bz
    cz = ax * by - ay * bx
    return np.arctan2(np.sqrt(cx * cx + cy * cy + cz * cz), ax * bx + ay * by + az * bz)


@njit
def _aggregate_numba(pts, nrm, nbr, counts):
    n = pts.shape[0]
    out = np.zeros((n, 20))
    f = np.empty(10)
    for i in range(n):
        k = counts[i]
        s1 = np.zeros(10)
        s2 = np.zeros(10)
        for a in range(k):
            j = nbr[i, a]
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            f[0] = pts[i, 0]
            f[1] = pts[i, 1]
            f[2] = pts[i, 2]
            f[3] = dx
            f[4] = dy
            f[5] = dz
            f[6] = _vec_angle(nrm[i, 0], nrm[i, 1], nrm[i, 2], dx, dy, dz)
            f[7] = _vec_angle(nrm[j, 0], nrm[j, 1], nrm[j, 2], dx, dy, dz)
            f[8] = _vec_angle(nrm[i, 0], nrm[i, 1], nrm[i, 2], nrm[j, 0], nrm[j, 1], nrm[j, 2])
            f[9] = np.sqrt(dx * dx + dy * dy + dz * dz)
            for c in range(10):
                s1[c] += f[c]
        for c in range(10):
            s1[c] /= k
        for a in range(k):
            j = nbr[i, a]
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            f[0] = pts[i, 0]
            f[1] = pts[i, 1]
            f[2] = pts[i, 2]
            f[3] = dx
            f[4] = dy
            f[5] = dz
            f[6] = _vec_angle(nrm[i, 0], nrm[i, 1], nrm[i, 2], dx, dy, dz)
            f[7] = _vec_angle(nrm[j, 0], nrm[j, 1], nrm[j, 2], dx, dy, dz)
            f[8] = _vec_angle(nrm[i, 0], nrm[i, 1], nrm[i, 2], nrm[j, 0], nrm[j, 1], nrm[j, 2])
            f[9] = np.sqrt(dx * dx + dy * dy + dz * dz)
            for c in range(10):
                e = f[c] - s1[c]
                s2[c] += e * e
        for c in range(10):
            out[i, c] = s1[c]
            out[i, 10 + c] = np.sqrt(s2[c] / k)
    return out


def _aggregate_numpy(pts, nrm, nbr, counts):
    n, s = nbr.shape
    mask = (np.arange(s)[None, :] < counts[:, None]).astype(np.float64)
    q = pts[nbr]  # (n, s, 3)
    d = q - pts[:, None, :]
    raw = np.empty((n, s, 10))
    raw[..., 0:3] = pts[:, None, :]
    raw[..., 3:6] = d
    raw[..., 6:10] = ppf(pts[:, None, :], nrm[:, None, :], q, nrm[nbr])
    k = counts[:, None].astype(np.float64)
    mean = (raw * mask[..., None]).sum(axis=1) / k
    var = (((raw - mean[:, None, :]) ** 2) * mask[..., None]).sum(axis=1) / k
    return np.concatenate([mean, np.sqrt(var)], axis=1)


def descriptor(cloud: PointCloud, radius: float = DEFAULT_RADIUS, samples: int = DEFAULT_SAMPLES) -> FeatureSet:
    """20D mean/std descriptor over each point's (at most ``samples``) nearest radius-neighbours."""
    pts = np.ascontiguousarray(cloud.points)
    if pts.shape[0] < 2:
        raise ValueError("descriptor needs a cloud with at least two points")
    if radius <= 0 or samples < 1:
        raise ValueError("radius must be positive and samples >= 1")
    nrm = estimate_normals(pts, radius)
    nbr, counts = neighborhoods(pts, radius, samples)
    if _accel.use_numba():
        agg = _aggregate_numba(pts, nrm, nbr, counts)
    else:
        agg = _aggregate_numpy(pts, nrm, nbr, counts)
    norm = np.linalg.norm(agg, axis=1, keepdims=True)
    desc = np.divide(agg, norm, out=np.zeros_like(agg), where=norm > 0)
    return FeatureSet(desc, agg, float(radius), int(samples))


@njit
def _neg_sq_feature_dist_numba(f, g):
    n, m, c = f.shape[0], g.shape[0], f.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(c):
                e = f[i, k] - g[j, k]
                s += e * e
            out[i, j] = -s
    return out


def _neg_sq_feature_dist_numpy(f, g):
    out = np.empty((f.shape[0], g.shape[0]))
    step = max(1, 1_000_000 // max(1, g.shape[0] * f.shape[1]))
    for s in range(0, f.shape[0], step):
        d = f[s : s + step, None, :] - g[None, :, :]
        out[s : s + step] = -np.einsum("ijk,ijk->ij", d, d)
    return out


def similarity(source: FeatureSet | np.ndarray, target: FeatureSet | np.ndarray) -> np.ndarray:
    """Negative squared feature distance ``s_ij = -|f_i - g_j|^2``."""
    f = source.descriptors if isinstance(source, FeatureSet) else np.asarray(source, dtype=np.float64)
    g = target.descriptors if isinstance(target, FeatureSet) else np.asarray(target, dtype=np.float64)
    if f.shape[1] != g.shape[1]:
        raise ValueError(f"descriptor dimensions differ: {f.shape[1]} vs {g.shape[1]}")
    f = np.ascontiguousarray(f)
    g = np.ascontiguousarray(g)
    if _accel.use_numba():
        return _neg_sq_feature_dist_numba(f, g)
    return _neg_sq_feature_dist_numpy(f, g)
