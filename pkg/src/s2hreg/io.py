"""Readers and writers: ASCII XYZ / PLY clouds, JSON motions and matchings."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import PointCloud, RigidMotion


def read_xyz(path) -> PointCloud:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    return PointCloud(pts[:, :3])


def write_xyz(path, cloud: PointCloud) -> None:
    with open(path, "w") as fh:
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def write_ply(path, cloud: PointCloud) -> None:
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {cloud.size}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_ply(path) -> PointCloud:
    """Vertex-only ASCII PLY; extra vertex properties after x, y, z are ignored."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    body = None
    for k, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = k + 1
            break
    if n_vertex is None or body is None:
        raise ValueError(f"{path}: malformed PLY header")
    cols = [props.index(c) for c in ("x", "y", "z")]
    rows = [lines[body + i].split() for i in range(n_vertex)]
    data = np.array([[float(r[c]) for c in cols] for r in rows], dtype=np.float64)
    return PointCloud(data.reshape(-1, 3))


def read_cloud(path) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return read_ply(path)
    return read_xyz(path)


def write_cloud(path, cloud: PointCloud) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        write_ply(path, cloud)
    else:
        write_xyz(path, cloud)


def write_motion(path, motion: RigidMotion) -> None:
    Path(path).write_text(json.dumps(motion.to_dict()))


def read_motion(path) -> RigidMotion:
    """Motion JSON, or a pair sidecar holding one under ``"motion"``."""
    d = json.loads(Path(path).read_text())
    if "motion" in d and isinstance(d["motion"], dict):
        d = d["motion"]
    return RigidMotion.from_dict(d)
