"""Command line: ``s2hreg gen | register | eval | ambiguity | grad-demo | sweep``.

Every subcommand accepts ``--config file.json`` whose keys are the long
option names (dashes or underscores); explicit flags win over the file.
Exit status: 0 success, 1 some pairs failed or were skipped, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# shared option groups


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of option defaults")


def _add_pair_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="base seed (required)")
    p.add_argument("--base-size", type=int, default=1024)
    p.add_argument("--sample-size", type=int, default=768)
    p.add_argument("--rotation-range", type=float, default=45.0, help="degrees per Euler axis")
    p.add_argument("--translation-range", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0, help="jitter standard deviation")
    p.add_argument("--clip", type=float, default=0.05)
    p.add_argument("--mode", choices=["random", "partial_view", "asymmetric"], default="random")


def _add_registration_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--temperature", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--sinkhorn-iters", type=int, default=100)
    p.add_argument("--sinkhorn-tol", type=float, default=1e-6)
    p.add_argument("--inlier-threshold", type=float, default=0.5)
    p.add_argument("--feature-radius", type=float, default=0.3)
    p.add_argument("--feature-samples", type=int, default=64)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def _registration_config(a):
    from .pipeline import RegistrationConfig
    from .sinkhorn import SinkhornConfig

    try:
        sk = SinkhornConfig(a.temperature, a.alpha, a.sinkhorn_iters, a.sinkhorn_tol)
        return RegistrationConfig(
            iterations=a.iterations, sinkhorn=sk, feature_radius=a.feature_radius,
            feature_samples=a.feature_samples, inlier_threshold=a.inlier_threshold,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _pair_spec(a, seed: int, **over):
    from .synthdata import PairSpec

    fields = dict(
        seed=seed, base_size=a.base_size, sample_size=a.sample_size,
        rotation_range_deg=a.rotation_range, translation_range=a.translation_range,
        noise_sigma=a.noise, noise_clip=a.clip, mode=a.mode,
    )
    try:
        return PairSpec(**{**fields, **over})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _require_seed(a) -> int:
    if a.seed is None:
        raise UsageError("--seed is required")
    return a.seed


def _base_cloud(a, shape: str, seed: int):
    from .synthdata import load_off, procedural_shape, sample_mesh

    if getattr(a, "off", None):
        verts, faces = load_off(a.off)
        return sample_mesh(verts, faces, a.base_size, seed)
    return procedural_shape(shape, a.base_size, seed)


# --------------------------------------------------------------------------
# gen


def cmd_gen(a) -> int:
    from .synthdata import SHAPES, make_pair

    seed = _require_seed(a)
    for s in a.shapes:
        if s not in SHAPES:
            raise UsageError(f"unknown shape {s!r}")
    if a.mode == "partial_view" and a.sample_size > 896:
        raise UsageError("partial_view keeps at most 896 presampled points")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    planned = []
    for k in range(a.pairs):
        stem = out / f"pair_{k:04d}"
        planned += [stem.with_name(stem.name + f"_src.{a.format}"),
                    stem.with_name(stem.name + f"_tgt.{a.format}"), stem.with_suffix(".json")]
    planned.append(out / "manifest.json")
    clash = [p for p in planned if p.exists()]
    if clash and not a.force:
        raise UsageError(f"{clash[0]} exists; pass --force to overwrite")
    manifest = []
    for k in range(a.pairs):
        shape = a.shapes[k % len(a.shapes)]
        base = _base_cloud(a, shape, seed + k)
        pair = make_pair(base, _pair_spec(a, seed + k))
        side = pair.write(out / f"pair_{k:04d}", a.format)
        manifest.append({"source": side["source"], "target": side["target"], "gt": f"pair_{k:04d}.json",
                         "shape": shape})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"wrote {a.pairs} pairs to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# register


def cmd_register(a) -> int:
    from .pipeline import run_manifest

    if a.manifest is None:
        raise UsageError("--manifest is required")
    if not Path(a.manifest).is_file():
        raise UsageError(f"manifest {a.manifest} not found")
    cfg = _registration_config(a)
    dumps = {"features": a.features_dir, "profit": a.profit_dir} if (a.features_dir or a.profit_dir) else None
    try:
        failures = run_manifest(a.manifest, a.out, cfg, workers=max(1, a.workers), truncate=a.force, dumps=dumps)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad manifest: {exc}") from exc
    print(f"results appended to {a.out} ({failures} failed or degraded)")
    return EXIT_PARTIAL if failures else EXIT_OK


# --------------------------------------------------------------------------
# eval


def _evaluate_record(rec: dict, ks) -> dict | None:
    from .assignment import PartialPermutationMatrix
    from .geometry import RigidMotion
    from .io import read_cloud
    from .metrics import (correspondence_discrepancy_matrix, correspondence_discrepancy_transform,
                          matching_recall, motion_errors, re_te)

    if not rec.get("gt") or "motion" not in rec:
        return None
    root = Path(rec.get("root", "."))
    side_path = root / rec["gt"]
    if not side_path.is_file():
        return None
    side = json.loads(side_path.read_text())
    gt = RigidMotion.from_dict(side["motion"])
    pred = RigidMotion.from_dict(rec["motion"])
    src, tgt = read_cloud(root / rec["source"]), read_cloud(root / rec["target"])
    gt_pairs = np.asarray(side.get("matching", []), dtype=np.int64).reshape(-1, 2)
    M = PartialPermutationMatrix.from_pairs(rec.get("matching", []), (src.size, tgt.size))
    err = motion_errors(pred, gt)
    rt = re_te(pred, gt)
    row = {"euler": err.euler_deg, "trans": err.translation_abs, "re": rt.re, "te": rt.te,
           "te_sq": rt.te_squared, "success": rt.success, "spec": side.get("spec", {})}
    if gt_pairs.shape[0]:
        row["dis_matrix"] = correspondence_discrepancy_matrix(M, tgt, gt_pairs)
        row["dis_transform"] = correspondence_discrepancy_transform(pred, src, tgt, gt_pairs)
        row["recall"] = [matching_recall(M, gt_pairs, tgt, k) for k in ks]
    return row


def _summary(rows: list, ks) -> dict:
    from .metrics import rmse_mae

    rmse_r, mae_r = rmse_mae([r["euler"] for r in rows])
    rmse_t, mae_t = rmse_mae([r["trans"] for r in rows])
    out = {"n_pairs": len(rows), "rmse_r_deg": rmse_r, "mae_r_deg": mae_r, "rmse_t": rmse_t, "mae_t": mae_t,
           "re_mean_deg": float(np.mean([r["re"] for r in rows])),
           "te_mean": float(np.mean([r["te"] for r in rows])),
           "te_squared_mean": float(np.mean([r["te_sq"] for r in rows])),
           "success_pct": 100.0 * float(np.mean([r["success"] for r in rows]))}
    with_dis = [r for r in rows if "dis_matrix" in r]
    if with_dis:
        out["rmse_dis_matrix"] = float(np.sqrt(np.mean([r["dis_matrix"][0] ** 2 for r in with_dis])))
        out["mae_dis_matrix"] = float(np.mean([r["dis_matrix"][1] for r in with_dis]))
        out["rmse_dis_transform"] = float(np.sqrt(np.mean([r["dis_transform"][0] ** 2 for r in with_dis])))
        out["mae_dis_transform"] = float(np.mean([r["dis_transform"][1] for r in with_dis]))
        out["recall_k0_pct"] = float(np.mean([r["recall"][0] for r in with_dis])) if ks and ks[0] == 0 else None
    return out


def _write_rows(path, rows: list) -> None:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def cmd_eval(a) -> int:
    if a.results is None:
        raise UsageError("--results is required")
    if not Path(a.results).is_file():
        raise UsageError(f"results file {a.results} not found")
    ks = list(range(a.max_k + 1))
    rows, skipped = [], 0
    for line in Path(a.results).read_text().splitlines():
        if not line.strip():
            continue
        row = _evaluate_record(json.loads(line), ks)
        if row is None:
            skipped += 1
        else:
            rows.append(row)
    if skipped:
        print(f"warning: skipped {skipped} record(s) without usable ground truth", file=sys.stderr)
    if a.outlier_sweep:
        groups: dict = {}
        for r in rows:
            spec = r["spec"]
            ratio = round(1.0 - spec.get("sample_size", 0) / max(spec.get("base_size", 1), 1), 6)
            groups.setdefault(ratio, []).append(r)
        summary = [{"outlier_ratio": k, **_summary(v, ks)} for k, v in sorted(groups.items())]
    else:
        summary = [_summary(rows, ks)] if rows else []
    _write_rows(a.out, summary)
    with_recall = [r for r in rows if "recall" in r]
    with open(a.recall_out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "recall_pct"])
        for i, k in enumerate(ks):
            vals = [r["recall"][i] for r in with_recall]
            w.writerow([k, float(np.mean(vals)) if vals else ""])
    print(f"evaluated {len(rows)} record(s)")
    return EXIT_PARTIAL if skipped else EXIT_OK


# --------------------------------------------------------------------------
# ambiguity / grad-demo / sweep


def cmd_ambiguity(a) -> int:
    from .ambiguity import (build_instance, degeneration_report, soft_matrix_family, standard_variants,
                            virtual_points, write_report)
    from .geometry import PointCloud
    from .io import write_ply
    from .synthdata import procedural_shape, sample_motion

    cloud = procedural_shape(a.shape, a.n, a.seed)
    motion = sample_motion(np.random.default_rng(a.seed))
    try:
        inst = build_instance(cloud, motion, a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if a.scales:
        labels = [f"{s:g}xD*" for s in a.scales]
        Ds = [np.asarray(inst.D) * s for s in a.scales]
    else:
        labels, Ds = standard_variants(inst.D)
    try:
        rows = degeneration_report(inst, Ds, labels)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_report(a.out, rows)
    if a.ply_dir:
        d = Path(a.ply_dir)
        d.mkdir(parents=True, exist_ok=True)
        for lab, D in zip(labels, Ds):
            pts = virtual_points(inst, soft_matrix_family(inst, D)).T
            write_ply(d / f"virtual_{lab.replace('*', 'star').replace('/', '_')}.ply", PointCloud(pts))
    bad = [r.label for r in rows if r.rotation_error_deg > 1e-6]
    print(f"D* = {inst.D.tolist()}; {len(rows)} rows written to {a.out}")
    if bad:
        print(f"rotation invariance violated for {bad}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_grad_demo(a) -> int:
    from .losses import LossConfig, demo_pair, descent_demo, write_trajectory
    from .sinkhorn import SinkhornConfig

    try:
        cfg = LossConfig(a.lambda_match, a.lambda_inlier, a.lambda_motion)
        sk = SinkhornConfig(a.temperature, a.alpha, a.sinkhorn_iters)
        pair = demo_pair(a.n, a.outliers, a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    traj = descent_demo(pair, a.steps, a.lr, cfg, sk)
    write_trajectory(a.out, traj)
    print(f"L1 {traj[0].match:.3f} -> {traj[-1].match:.3f} over {len(traj)} steps")
    return EXIT_OK


def cmd_sweep(a) -> int:
    from .metrics import aggregate, matching_recall
    from .pipeline import RegistrationFailed, register
    from .synthdata import outlier_sweep

    seed = _require_seed(a)
    cfg = _registration_config(a)
    per_ratio: dict = {r: [] for r in a.ratios}
    failures = 0
    for k in range(a.pairs):
        base = _base_cloud(a, a.shape, seed + k)
        try:
            spec = _pair_spec(a, seed + k, mode="random", sample_size=a.base_size)
            pairs = outlier_sweep(base, a.ratios, spec)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        for rho, pair in zip(a.ratios, pairs):
            try:
                res = register(pair.source, pair.target, cfg)
            except RegistrationFailed:
                failures += 1
                continue
            failures += int(res.degraded)
            per_ratio[rho].append((pair, res))
    rows = []
    for rho, items in per_ratio.items():
        row = {"outlier_ratio": rho, "n_pairs": len(items)}
        if items:
            rep = aggregate([r.motion for _, r in items], [p.motion for p, _ in items])
            row.update(asdict(rep))
            row["recall_k0_pct"] = float(np.mean([
                matching_recall(r.matching, p.matching, p.target, 0) for p, r in items if p.matching.n_matched
            ]))
        rows.append(row)
    _write_rows(a.out, rows)
    print(f"wrote {len(rows)} ratio rows to {a.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="s2hreg", description="Soft-to-hard point cloud registration toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate labelled synthetic pairs")
    _add_config(g)
    _add_pair_options(g)
    g.add_argument("--shapes", nargs="+", default=["composite"])
    g.add_argument("--off", type=Path, help="OFF mesh to sample instead of procedural shapes")
    g.add_argument("--pairs", type=int, default=10)
    g.add_argument("--format", choices=["xyz", "ply"], default="xyz")
    g.add_argument("--out", type=Path, default=Path("pairs"))
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("register", help="register every pair of a manifest")
    _add_config(r)
    _add_registration_options(r)
    r.add_argument("--manifest", type=Path, help="JSON list of {source, target, gt}")
    r.add_argument("--out", type=Path, default=Path("results.jsonl"))
    r.add_argument("--features-dir", type=Path, help="write descriptor CSVs here")
    r.add_argument("--profit-dir", type=Path, help="write the last augmented profit matrix CSVs here")
    r.add_argument("--force", action="store_true", help="truncate the results file first")
    r.set_defaults(func=cmd_register)

    e = sub.add_parser("eval", help="metrics for a results file")
    _add_config(e)
    e.add_argument("--results", type=Path, help="JSON-lines file written by register")
    e.add_argument("--out", type=Path, default=Path("metrics.csv"))
    e.add_argument("--recall-out", type=Path, default=Path("recall.csv"))
    e.add_argument("--max-k", type=int, default=10)
    e.add_argument("--outlier-sweep", action="store_true", help="one summary row per outlier ratio")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("ambiguity", help="same rotation from many soft matrices")
    _add_config(m)
    m.add_argument("--shape", default="box")
    m.add_argument("--n", type=int, default=512)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--scales", type=float, nargs="*", help="D = scale * D* for each value")
    m.add_argument("--out", type=Path, default=Path("ambiguity.csv"))
    m.add_argument("--ply-dir", type=Path)
    m.set_defaults(func=cmd_ambiguity)

    d = sub.add_parser("grad-demo", help="learn a similarity matrix by gradient descent")
    _add_config(d)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--steps", type=int, default=200)
    d.add_argument("--lr", type=float, default=1.0)
    d.add_argument("--n", type=int, default=16)
    d.add_argument("--outliers", type=int, default=4)
    d.add_argument("--lambda-match", type=float, default=1.0)
    d.add_argument("--lambda-inlier", type=float, default=1.0)
    d.add_argument("--lambda-motion", type=float, default=1.0)
    d.add_argument("--temperature", type=float, default=0.05)
    d.add_argument("--alpha", type=float, default=0.5)
    d.add_argument("--sinkhorn-iters", type=int, default=20)
    d.add_argument("--out", type=Path, default=Path("grad_demo.csv"))
    d.set_defaults(func=cmd_grad_demo)

    s = sub.add_parser("sweep", help="registration quality across outlier ratios")
    _add_config(s)
    _add_pair_options(s)
    _add_registration_options(s)
    s.add_argument("--shape", default="composite")
    s.add_argument("--ratios", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    s.add_argument("--pairs", type=int, default=5, help="pairs per ratio")
    s.add_argument("--out", type=Path, default=Path("sweep.csv"))
    s.set_defaults(func=cmd_sweep)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        conf = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(conf, dict):
        parser.error("config must be a JSON object")
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, val in conf.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "func"):
            parser.error(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = val
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)  # argparse exits with status 2 on usage errors
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
