"""Synthetic registration pairs with known motion and ground-truth matching.

Base shapes are procedural surfaces scaled into the unit ball, so nothing
has to be downloaded. Pairs follow the usual ModelNet40 protocol: a random
motion (Euler angles uniform in [0, 45] degrees per axis, translation
uniform in [-0.5, 0.5]^3), independent random subsampling of source and
moved copy, and optional clipped Gaussian jitter.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assignment import PartialPermutationMatrix
from .geometry import PointCloud, RigidMotion, euler_to_rotation

SHAPES = ("sphere", "box", "torus", "blade", "composite")
MODES = ("random", "partial_view", "asymmetric")

BOX_HALF_EXTENTS = (1.0, 0.7, 0.45)
TORUS_RADII = (1.0, 0.45)
VIEWPOINT_RADIUS = 3.0
PARTIAL_PRESAMPLE = 896


def _sphere(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _box_surface(n, rng, half):
    a, b, c = half
    # faces come in +/- pairs normal to x, y, z; pick by area
    areas = np.array([b * c, a * c, a * b])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    sign = rng.choice([-1.0, 1.0], size=n)
    pts = (rng.random((n, 3)) * 2.0 - 1.0) * np.asarray(half)
    pts[np.arange(n), axis] = sign * np.asarray(half)[axis]
    return pts


def _torus(n, rng, R, r):
    out = np.empty((0, 3))
    while out.shape[0] < n:
        u = rng.random(2 * n) * 2 * np.pi
        v = rng.random(2 * n) * 2 * np.pi
        # area element is proportional to R + r cos v
        keep = rng.random(2 * n) * (R + r) < R + r * np.cos(v)
        u, v = u[keep], v[keep]
        p = np.stack([(R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u), r * np.sin(v)], 1)
        out = np.concatenate([out, p])
    return out[:n]


def _blade(n, rng):
    x = rng.random(n) * 2.0 - 1.0
    y = (rng.random(n) * 2.0 - 1.0) * 0.3
    th = x * np.pi / 3.0
    return np.stack([x, y * np.cos(th), y * np.sin(th) + 0.15 * x * x], 1)


def _cylinder_x(n, rng, x0, x1, radius):
    x = x0 + rng.random(n) * (x1 - x0)
    a = rng.random(n) * 2 * np.pi
    return np.stack([x, radius * np.cos(a), radius * np.sin(a)], 1)


def _cone_x(n, rng, x0, x1, radius):
    # lateral surface, radius shrinking linearly from x0 to the tip at x1
    h = np.sqrt(rng.random(n))
    a = rng.random(n) * 2 * np.pi
    x = x1 + (x0 - x1) * h
    rr = radius * h
    return np.stack([x, rr * np.cos(a), rr * np.sin(a)], 1)


def _composite(n, rng):
    """Airplane-like union: fuselage, nose cone, swept wings, tail fin, stabiliser."""
    parts = [
        ("fuselage", 2 * np.pi * 0.16 * 1.5),
        ("nose", np.pi * 0.16 * 0.45),
        ("wings", 2 * 1.6 * 0.38),
        ("fin", 2 * 0.45 * 0.3),
        ("stab", 2 * 0.7 * 0.22),
    ]
    area = np.array([a for _, a in parts])
    counts = rng.multinomial(n, area / area.sum())
    pieces = []
    for (name, _), k in zip(parts, counts):
        if name == "fuselage":
            pieces.append(_cylinder_x(k, rng, -0.9, 0.6, 0.16))
        elif name == "nose":
            pieces.append(_cone_x(k, rng, 0.6, 1.05, 0.16))
        elif name == "wings":
            s = rng.random(k) * 2 - 1  # span position
            c = rng.random(k)  # chord position
            x = 0.25 - 0.38 * c - 0.35 * np.abs(s)  # swept back
            z = 0.04 * np.abs(s) + rng.choice([-0.015, 0.015], size=k)
            pieces.append(np.stack([x, s, z], 1))
        elif name == "fin":
            h = rng.random(k)
            c = rng.random(k)
            x = -0.65 - 0.3 * c - 0.2 * h
            pieces.append(np.stack([x, rng.choice([-0.01, 0.01], size=k), 0.12 + 0.45 * h], 1))
        else:
            s = rng.random(k) * 2 - 1
            c = rng.random(k)
            x = -0.75 - 0.22 * c - 0.12 * np.abs(s)
            pieces.append(np.stack([x, 0.35 * s, np.full(k, 0.05)], 1))
    pts = np.concatenate(pieces)
    return pts[rng.permutation(pts.shape[0])]


def procedural_shape(kind: str, n: int = 1024, seed: int = 0) -> PointCloud:
    """Deterministic surface sample of a named shape, inside the unit ball."""
    if kind not in SHAPES:
        raise ValueError(f"unknown shape {kind!r}; choose from {SHAPES}")
    if n < 8:
        raise ValueError("need at least 8 points")
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        return PointCloud(_sphere(n, rng))
    if kind == "box":
        half = np.asarray(BOX_HALF_EXTENTS)
        return PointCloud(_box_surface(n, rng, half) / np.linalg.norm(half))
    if kind == "torus":
        R, r = TORUS_RADII
        return PointCloud(_torus(n, rng, R, r) / (R + r))
    if kind == "blade":
        return PointCloud(_blade(n, rng) / np.sqrt(1.0 + 0.3**2 + 0.15**2 + 0.3))
    # farthest analytic extent is the fin tip, |(-1.15, 0, 0.57)| < 1.3
    return PointCloud(_composite(n, rng) / 1.3)


def load_off(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangle faces of an OFF mesh (ModelNet40 format)."""
    tokens = Path(path).read_text().split()
    if tokens[0] == "OFF":
        tokens = tokens[1:]
    elif tokens[0].startswith("OFF"):
        tokens[0] = tokens[0][3:]
    nv, nf = int(tokens[0]), int(tokens[1])
    vals = tokens[3:]
    verts = np.array(vals[: 3 * nv], dtype=np.float64).reshape(nv, 3)
    faces, k = [], 3 * nv
    for _ in range(nf):
        cnt = int(vals[k])
        idx = [int(v) for v in vals[k + 1 : k + 1 + cnt]]
        faces.extend([idx[0], idx[a], idx[a + 1]] for a in range(1, cnt - 1))
        k += 1 + cnt
    return verts, np.asarray(faces, dtype=np.int64)


def sample_mesh(verts, faces, n: int, seed: int = 0) -> PointCloud:
    """Area-weighted surface sample of a triangle mesh, centred and scaled into the unit ball."""
    rng = np.random.default_rng(seed)
    tri = verts[faces]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    pick = rng.choice(len(faces), size=n, p=area / area.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    t = tri[pick]
    pts = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])
    pts -= pts.mean(axis=0)
    return PointCloud(pts / np.linalg.norm(pts, axis=1).max())


# --------------------------------------------------------------------------
# pairs


@dataclass(frozen=True)
class PairSpec:
    seed: int = 0
    base_size: int = 1024
    sample_size: int = 768
    rotation_range_deg: float = 45.0
    translation_range: float = 0.5
    noise_sigma: float = 0.0
    noise_clip: float = 0.05
    mode: str = "random"

    def __post_init__(self):
        if self.sample_size > self.base_size:
            raise ValueError("sample_size cannot exceed base_size")
        if self.noise_sigma < 0 or self.noise_clip < 0:
            raise ValueError("noise sigma and clip must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True, eq=False)
class LabeledPair:
    source: PointCloud
    target: PointCloud
    motion: RigidMotion  # maps source coordinates onto target coordinates
    matching: PartialPermutationMatrix
    source_inlier: np.ndarray
    target_inlier: np.ndarray
    spec: PairSpec = field(default_factory=PairSpec)

    def sidecar(self) -> dict:
        return {
            "motion": self.motion.to_dict(),
            "matching": self.matching.to_json(),
            "source_inlier": [bool(v) for v in self.source_inlier],
            "target_inlier": [bool(v) for v in self.target_inlier],
            "spec": asdict(self.spec),
        }

    def write(self, stem, fmt: str = "xyz") -> dict:
        """Write ``<stem>_src.<fmt>``, ``<stem>_tgt.<fmt>`` and ``<stem>.json``."""
        from .io import write_cloud

        stem = Path(stem)
        src = stem.with_name(stem.name + f"_src.{fmt}")
        tgt = stem.with_name(stem.name + f"_tgt.{fmt}")
        write_cloud(src, self.source)
        write_cloud(tgt, self.target)
        side = self.sidecar()
        side["source"] = src.name
        side["target"] = tgt.name
        stem.with_suffix(".json").write_text(json.dumps(side, indent=1))
        return side


def sample_motion(rng: np.random.Generator, rotation_range_deg=45.0, translation_range=0.5) -> RigidMotion:
    angles = rng.uniform(0.0, rotation_range_deg, size=3)
    t = rng.uniform(-translation_range, translation_range, size=3)
    return RigidMotion(euler_to_rotation(angles), t)


def _jitter(rng, n, spec: PairSpec) -> np.ndarray:
    if spec.noise_sigma == 0:
        return np.zeros((n, 3))
    return np.clip(rng.normal(0.0, spec.noise_sigma, size=(n, 3)), -spec.noise_clip, spec.noise_clip)


def _assemble(base_pts, moved_pts, src_idx, tgt_idx, motion, rng, spec) -> LabeledPair:
    src = base_pts[src_idx] + _jitter(rng, len(src_idx), spec)
    tgt = moved_pts[tgt_idx] + _jitter(rng, len(tgt_idx), spec)
    where_t = {int(b): j for j, b in enumerate(tgt_idx)}
    pairs = [(i, where_t[int(b)]) for i, b in enumerate(src_idx) if int(b) in where_t]
    M = PartialPermutationMatrix.from_pairs(pairs, (len(src_idx), len(tgt_idx)))
    return LabeledPair(
        PointCloud(src), PointCloud(tgt), motion, M,
        M.row_to_col >= 0, M.col_to_row >= 0, spec,
    )


def make_pair(base: PointCloud, spec: PairSpec) -> LabeledPair:
    """Random-sampling pair; ``partial_view`` mode defers to :func:`partial_view_pair`.

    Subsamples are prefixes of per-cloud random permutations, so a smaller
    ``sample_size`` under the same seed always gives nested subsets.
    """
    if spec.mode == "partial_view":
        return partial_view_pair(base, spec)
    if base.size != spec.base_size:
        raise ValueError(f"base has {base.size} points, spec expects {spec.base_size}")
    rng = np.random.default_rng(spec.seed)
    motion = sample_motion(rng, spec.rotation_range_deg, spec.translation_range)
    moved = motion.apply(base.points)
    src_idx = rng.permutation(spec.base_size)[: spec.sample_size]
    tgt_perm = rng.permutation(spec.base_size)
    tgt_idx = tgt_perm if spec.mode == "asymmetric" else tgt_perm[: spec.sample_size]
    return _assemble(base.points, moved, src_idx, tgt_idx, motion, rng, spec)


def _random_viewpoint(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return VIEWPOINT_RADIUS * v / np.linalg.norm(v)


def partial_view_pair(base: PointCloud, spec: PairSpec, viewpoints=None) -> LabeledPair:
    """Partial-view pair: presample 896 points, then keep the ``sample_size``
    points nearest a viewpoint, chosen independently for source (before the
    motion) and target (after the motion, with a fresh viewpoint).

    ``viewpoints`` optionally fixes ``(source_view, target_view)``.
    """
    n_pre = min(PARTIAL_PRESAMPLE, base.size)
    if spec.sample_size > n_pre:
        raise ValueError(f"sample_size must not exceed the {n_pre}-point presample")
    rng = np.random.default_rng(spec.seed)
    motion = sample_motion(rng, spec.rotation_range_deg, spec.translation_range)
    pre = rng.permutation(base.size)[:n_pre]
    if viewpoints is None:
        vs, vt = _random_viewpoint(rng), _random_viewpoint(rng)
    else:
        vs, vt = (np.asarray(v, dtype=np.float64) for v in viewpoints)
    pts = base.points[pre]
    moved = motion.apply(pts)
    keep_s = np.argsort(np.linalg.norm(pts - vs, axis=1), kind="stable")[: spec.sample_size]
    keep_t = np.argsort(np.linalg.norm(moved - vt, axis=1), kind="stable")[: spec.sample_size]
    src_idx = pre[rng.permutation(keep_s)]
    tgt_idx = pre[rng.permutation(keep_t)]
    moved_full = motion.apply(base.points)
    return _assemble(base.points, moved_full, src_idx, tgt_idx, motion, rng, spec)


def outlier_sweep(base: PointCloud, ratios, spec: PairSpec) -> list[LabeledPair]:
    """One pair per outlier ratio ``rho``.

    With both clouds drawn independently as ``s`` of ``b`` base points, a
    point of one cloud survives in the other with probability ``s / b``, so
    the expected per-cloud outlier fraction is ``1 - s / b``; hence
    ``s = round(b * (1 - rho))``.
    """
    out = []
    for rho in ratios:
        if not 0.0 <= rho <= 0.9:
            raise ValueError(f"outlier ratio {rho} outside [0, 0.9]")
        s = int(round(spec.base_size * (1.0 - rho)))
        sub = PairSpec(**{**asdict(spec), "sample_size": s, "mode": "random"})
        out.append(make_pair(base, sub))
    return out
