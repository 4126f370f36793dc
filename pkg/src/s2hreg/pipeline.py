"""Iterative registration: features, similarity, S-step, H-step, Procrustes.

Each iteration re-describes the currently transformed source, builds a
similarity matrix, turns it into a soft match matrix with augmented
Sinkhorn, projects that onto a partial permutation matrix and solves for an
incremental motion with weighted Procrustes.

The similarity is the feature similarity minus a spatial penalty
``|x_i - y_j|^2 / rho^2``. The first iteration uses features only
(``rho = inf``); afterwards ``rho`` tracks a multiple of the median residual
of the previous matches, so the matching tightens as the clouds converge.
Set ``spatial_factor=None`` for features only throughout.

The first ``coarse_iterations`` iterations project with a low inlier
threshold: the soft matches of an unaligned pair are too diffuse to clear
the final threshold, but a near-complete one-to-one assignment still gives
a good coarse motion.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assignment import PartialPermutationMatrix, h_step
from .features import DEFAULT_RADIUS, DEFAULT_SAMPLES, descriptor, similarity
from .geometry import PointCloud, RigidMotion, pairwise_sq_dists
from .procrustes import DegenerateCorrespondences, correspondences_from_ppm, weighted_procrustes
from .sinkhorn import SinkhornConfig, augmented_sinkhorn

MIN_POINTS = 4
MAX_POINTS = 2048


@dataclass(frozen=True)
class RegistrationConfig:
    iterations: int = 5
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    feature_radius: float = DEFAULT_RADIUS
    feature_samples: int = DEFAULT_SAMPLES
    inlier_threshold: float = 0.5
    coarse_threshold: float = 0.01
    coarse_iterations: int = 2
    min_inliers: int = 3
    spatial_factor: float | None = 3.0
    spatial_min: float = 1e-4
    temperature_schedule: tuple | None = None  # one temperature per iteration

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (0 < self.coarse_threshold and 0 < self.inlier_threshold):
            raise ValueError("inlier thresholds must be positive")
        if self.coarse_iterations < 0:
            raise ValueError("coarse_iterations must be >= 0")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")
        if self.spatial_factor is not None and not self.spatial_factor > 0:
            raise ValueError("spatial_factor must be positive or None")
        if self.temperature_schedule is not None:
            if len(self.temperature_schedule) != self.iterations:
                raise ValueError("temperature_schedule needs one entry per iteration")
            if any(not t > 0 for t in self.temperature_schedule):
                raise ValueError("temperatures must be positive")

    def threshold(self, k: int) -> float:
        """Inlier threshold of iteration ``k`` (0-based); the last one is never coarse."""
        if k < self.coarse_iterations and k < self.iterations - 1:
            return self.coarse_threshold
        return self.inlier_threshold

    @classmethod
    def training(cls, **kw) -> "RegistrationConfig":
        return cls(iterations=2, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "RegistrationConfig":
        d = dict(d)
        if "sinkhorn" in d and isinstance(d["sinkhorn"], dict):
            d["sinkhorn"] = SinkhornConfig(**d["sinkhorn"])
        if d.get("temperature_schedule") is not None:
            d["temperature_schedule"] = tuple(d["temperature_schedule"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "sinkhorn"}
        out["sinkhorn"] = {k: getattr(self.sinkhorn, k) for k in self.sinkhorn.__dataclass_fields__}
        if out["temperature_schedule"] is not None:
            out["temperature_schedule"] = list(out["temperature_schedule"])
        return out


@dataclass(frozen=True)
class IterationRecord:
    motion: RigidMotion  # composed motion after this iteration
    increment: RigidMotion
    n_inliers: int
    residual: float  # median distance of matched pairs after the increment
    spatial_scale: float
    sinkhorn_iterations: int
    sinkhorn_residual: float
    sigma_row_mean: float
    sigma_col_mean: float


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    motion: RigidMotion
    matching: PartialPermutationMatrix
    history: list
    degraded: bool = False
    error: str | None = None
    artifacts: dict | None = field(default=None, repr=False)

    @property
    def inlier_counts(self) -> list:
        return [h.n_inliers for h in self.history]

    def summary(self) -> dict:
        return {
            "motion": self.motion.to_dict(),
            "n_inliers": self.matching.n_matched,
            "inlier_counts": self.inlier_counts,
            "residuals": [h.residual for h in self.history],
            "sinkhorn_residuals": [h.sinkhorn_residual for h in self.history],
            "degraded": self.degraded,
            "error": self.error,
        }


class RegistrationFailed(DegenerateCorrespondences):
    """First iteration could not produce a motion; ``history`` is what ran."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def _check(cloud: PointCloud, name: str) -> None:
    if not MIN_POINTS <= cloud.size <= MAX_POINTS:
        raise ValueError(f"{name} has {cloud.size} points, need {MIN_POINTS}..{MAX_POINTS}")


def register(source: PointCloud, target: PointCloud, cfg: RegistrationConfig | None = None,
             keep_artifacts: bool = False) -> RegistrationResult:
    """Rigid motion taking ``source`` onto ``target``, plus the final matching.

    With ``keep_artifacts`` the result also carries the first iteration's
    source descriptors, the target descriptors and the last augmented profit.
    """
    cfg = cfg or RegistrationConfig()
    _check(source, "source")
    _check(target, "target")
    tfeat = descriptor(target, cfg.feature_radius, cfg.feature_samples)
    total = RigidMotion.identity()
    rho = np.inf
    history: list[IterationRecord] = []
    matching = None
    artifacts = {"target_features": tfeat} if keep_artifacts else None
    for k in range(cfg.iterations):
        moved = PointCloud(total.apply(source.points))
        sfeat = descriptor(moved, cfg.feature_radius, cfg.feature_samples)
        S = similarity(sfeat, tfeat)
        if artifacts is not None and k == 0:
            artifacts["source_features"] = sfeat
        if np.isfinite(rho):
            S -= pairwise_sq_dists(moved.points, target.points) / (rho * rho)
        scfg = cfg.sinkhorn
        if cfg.temperature_schedule is not None:
            scfg = replace(scfg, temperature=float(cfg.temperature_schedule[k]))
        soft = augmented_sinkhorn(S, scfg)
        M, aug = h_step(soft.P, cfg.threshold(k))
        corr, w = correspondences_from_ppm(M, target)
        try:
            if w.n_inliers < cfg.min_inliers:
                raise DegenerateCorrespondences(
                    f"iteration {k + 1}: {w.n_inliers} inliers, need {cfg.min_inliers}"
                )
            inc = weighted_procrustes(moved, corr, w)
        except ValueError as exc:
            if not history:
                raise RegistrationFailed(str(exc), history) from exc
            return RegistrationResult(total, matching, history, degraded=True, error=str(exc),
                                      artifacts=artifacts)
        total = inc @ total
        matching = M
        if artifacts is not None:
            artifacts["profit"] = aug
        keep = w.w > 0
        res = np.linalg.norm(inc.apply(moved.points[keep]) - corr[keep], axis=1)
        med = float(np.median(res))
        history.append(IterationRecord(
            total, inc, w.n_inliers, med, float(rho), soft.iterations, soft.residual,
            float(aug.sigma_row.mean()), float(aug.sigma_col.mean()),
        ))
        if cfg.spatial_factor is not None:
            rho = max(cfg.spatial_min, cfg.spatial_factor * med)
    return RegistrationResult(total, matching, history, artifacts=artifacts)


# --------------------------------------------------------------------------
# batch mode


def register_entry(entry: dict, root, cfg: RegistrationConfig | None = None, dumps: dict | None = None) -> dict:
    """Register one manifest entry; failures become an ``error`` field, never an exception.

    ``dumps`` may name a ``features`` and/or ``profit`` directory; files are
    prefixed with ``entry["index"]``.
    """
    from .io import read_cloud, read_motion
    from .metrics import re_te

    root = Path(root)
    rec = {"source": entry.get("source"), "target": entry.get("target"), "gt": entry.get("gt"),
           "root": str(root.resolve())}
    t0 = time.perf_counter()
    try:
        src = read_cloud(root / entry["source"])
        tgt = read_cloud(root / entry["target"])
        result = register(src, tgt, cfg, keep_artifacts=bool(dumps))
        if dumps:
            _dump(result, dumps, entry.get("index", 0))
        rec.update(result.summary())
        rec["iterations"] = len(result.history)
        rec["shape"] = list(result.matching.shape)
        rec["matching"] = result.matching.to_json()
        if entry.get("gt"):
            rt = re_te(result.motion, read_motion(root / entry["gt"]))
            rec["rotation_error_deg"] = rt.re
            rec["translation_error"] = rt.te
    except (ValueError, OSError, KeyError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["degraded"] = True
        if isinstance(exc, RegistrationFailed):
            rec["iterations"] = len(exc.history)
    rec["seconds"] = time.perf_counter() - t0
    return rec


def _dump(result: RegistrationResult, dumps: dict, index: int) -> None:
    art = result.artifacts or {}
    if dumps.get("features"):
        d = Path(dumps["features"])
        d.mkdir(parents=True, exist_ok=True)
        if "source_features" in art:
            art["source_features"].to_csv(d / f"pair_{index:04d}_src_features.csv")
        art["target_features"].to_csv(d / f"pair_{index:04d}_tgt_features.csv")
    if dumps.get("profit") and "profit" in art:
        d = Path(dumps["profit"])
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / f"pair_{index:04d}_profit.csv", art["profit"].matrix, delimiter=",", fmt="%.17g")


def run_manifest(manifest_path, report_path, cfg: RegistrationConfig | None = None, workers: int = 1,
                 truncate: bool = False, dumps: dict | None = None) -> int:
    """Register every entry of a JSON manifest, appending one JSON line each.

    Entries are ``{"source": path, "target": path, "gt": path?}``; relative
    paths resolve against the manifest's directory. Pairs may run in worker
    processes, but records are written by this process in manifest order.
    Returns the number of failed or degraded entries.
    """
    manifest_path = Path(manifest_path)
    entries = json.loads(manifest_path.read_text())
    if not isinstance(entries, list):
        raise ValueError("manifest must be a JSON list")
    root = manifest_path.parent
    entries = [{**e, "index": n} for n, e in enumerate(entries)]
    failures = 0
    with open(report_path, "w" if truncate else "a") as out:
        if workers > 1 and len(entries) > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(workers) as pool:
                k = len(entries)
                recs = pool.map(register_entry, entries, [root] * k, [cfg] * k, [dumps] * k)
                for n, rec in enumerate(recs):
                    failures += _write(out, n, rec)
        else:
            for n, entry in enumerate(entries):
                failures += _write(out, n, register_entry(entry, root, cfg, dumps))
    return failures


def _write(out, n: int, rec: dict) -> int:
    out.write(json.dumps({"index": n, **rec}) + "\n")
    out.flush()
    return int(bool(rec.get("degraded")))
