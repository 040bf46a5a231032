"""File formats: pose CSV, point clouds (ASCII PLY / CSV), picks JSON.

Writers are deterministic so that write -> read -> write reproduces the same
bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from spinenav.errors import ValidationError
from spinenav.geometry import RigidTransform

POSE_HEADER = ["qw", "qx", "qy", "qz", "tx", "ty", "tz"]
QUATERNION_NORM_TOLERANCE = 1e-3


def _fmt_quat(v: float) -> str:
    # 12 decimals keeps rotation error ~1e-12 while making the text stable
    # under quaternion -> matrix -> quaternion round trips
    s = f"{v:.12f}"
    return "0.000000000000" if s == "-0.000000000000" else s


def poses_to_csv(poses: Sequence[RigidTransform]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POSE_HEADER)
    for p in poses:
        q = p.quaternion()
        w.writerow([*(_fmt_quat(float(v)) for v in q), *(repr(float(v)) for v in p.translation)])
    return buf.getvalue()


def poses_from_csv(text: str) -> list[RigidTransform]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ValidationError("pose file is empty")
    header = [c.strip() for c in rows[0]]
    if header != POSE_HEADER:
        raise ValidationError(f"pose CSV header must be {','.join(POSE_HEADER)}, got {','.join(header)}")
    poses = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 7:
            raise ValidationError(f"line {lineno}: expected 7 columns, got {len(row)}")
        try:
            vals = np.array([float(v) for v in row])
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric value") from None
        q = vals[:4]
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > QUATERNION_NORM_TOLERANCE:
            raise ValidationError(f"line {lineno}: quaternion norm {norm:.6f} is not within 1e-3 of 1")
        poses.append(RigidTransform.from_quaternion(q / norm, vals[4:]))
    return poses


def read_poses(path) -> list[RigidTransform]:
    return poses_from_csv(Path(path).read_text(encoding="utf-8"))


def write_poses(path, poses: Sequence[RigidTransform]) -> None:
    Path(path).write_text(poses_to_csv(poses), encoding="utf-8")


def ply_to_points(text: str) -> np.ndarray:
    """Vertices from an ASCII PLY file (x, y, z properties; others ignored)."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValidationError("not a PLY file")
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValidationError("only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if n_vertex is None or body_start is None:
        raise ValidationError("PLY header lacks a vertex element or end_header")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ValidationError("PLY vertex element needs x, y, z properties") from None
    body = [ln.split() for ln in lines[body_start:] if ln.strip()][:n_vertex]
    if len(body) != n_vertex:
        raise ValidationError(f"PLY declares {n_vertex} vertices but has {len(body)}")
    return np.array([[float(row[c]) for c in cols] for row in body], dtype=float).reshape(-1, 3)


def points_to_ply(points) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    body = [" ".join(repr(float(v)) for v in p) for p in pts]
    return "\n".join(head + body) + "\n"


def csv_to_points(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or [c.strip() for c in rows[0]] != ["x", "y", "z"]:
        raise ValidationError("point CSV needs header x,y,z")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 3)
    except ValueError:
        raise ValidationError("point CSV has malformed rows") from None


def points_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z"])
    for p in np.asarray(points, dtype=float).reshape(-1, 3):
        w.writerow([repr(float(v)) for v in p])
    return buf.getvalue()


def read_points(path) -> np.ndarray:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".ply":
        return ply_to_points(text)
    if path.suffix.lower() == ".csv":
        return csv_to_points(text)
    raise ValidationError(f"unsupported point cloud extension {path.suffix!r} (use .ply or .csv)")


def write_points(path, points) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        path.write_text(points_to_ply(points), encoding="utf-8")
    elif path.suffix.lower() == ".csv":
        path.write_text(points_to_csv(points), encoding="utf-8")
    else:
        raise ValidationError(f"unsupported point cloud extension {path.suffix!r} (use .ply or .csv)")


def parse_picks(d: dict) -> tuple[np.ndarray, np.ndarray]:
    try:
        src = np.asarray(d["src"], dtype=float)
        dst = np.asarray(d["dst"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise ValidationError('picks JSON must be {"src": [[x,y,z]x3], "dst": [[x,y,z]x3]}') from None
    if src.shape != (3, 3) or dst.shape != (3, 3):
        raise ValidationError("picks need exactly three src and three dst points")
    return src, dst


def picks_to_dict(src, dst) -> dict:
    return {
        "src": [[float(v) for v in p] for p in np.asarray(src, dtype=float)],
        "dst": [[float(v) for v in p] for p in np.asarray(dst, dtype=float)],
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def write_json(path, obj) -> None:
    Path(path).write_text(dump_json(obj), encoding="utf-8")
