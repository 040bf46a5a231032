"""Parametric vertebra phantoms.

The surface is a union of simple solids sampled on regular grids: a
cylindrical vertebral body, two pedicle boxes, a posterior arch, a spinous
process and two transverse processes. CT frame: origin at the body centre,
+z superior, +y anterior, +x toward the left pedicle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from spinenav.errors import InvalidParams
from spinenav.geometry import FrameId
from spinenav.metrics import LandmarkSet
from spinenav.registration import PointCloud

VERIFICATION_LANDMARKS = (
    "spinous_tip",
    "left_transverse_tip",
    "right_transverse_tip",
    "left_facet",
    "right_facet",
)

REQUIRED_PARAMS = (
    "body_radius",
    "body_height",
    "canal_diameter",
    "pedicle_wall",
    "pedicle_length",
    "pedicle_offset",
    "pedicle_medial_angle",
    "arch_depth",
    "spinous_length",
    "transverse_length",
    "grid_spacing",
)


@dataclass(frozen=True, eq=False)
class Phantom:
    label: str
    surface: PointCloud
    landmarks: LandmarkSet  # verification points plus "entry"
    canal_point: np.ndarray  # on the pedicle canal axis, CT frame
    canal_direction: np.ndarray  # unit, pointing into the vertebral body
    canal_diameter: float
    pedicle_length: float
    params: dict

    @property
    def entry_point(self) -> np.ndarray:
        return self.landmarks.points["entry"]

    def verification_landmarks(self) -> LandmarkSet:
        return LandmarkSet({k: self.landmarks.points[k] for k in VERIFICATION_LANDMARKS}, self.landmarks.frame)


class _Box:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def sample(self, h: float) -> np.ndarray:
        axes = [np.linspace(self.lo[i], self.hi[i], max(2, math.ceil((self.hi[i] - self.lo[i]) / h) + 1)) for i in range(3)]
        out = []
        for i in range(3):
            j, k = [a for a in range(3) if a != i]
            gj, gk = np.meshgrid(axes[j], axes[k], indexing="ij")
            for v in (self.lo[i], self.hi[i]):
                face = np.empty((gj.size, 3))
                face[:, i] = v
                face[:, j] = gj.ravel()
                face[:, k] = gk.ravel()
                out.append(face)
        return np.unique(np.vstack(out), axis=0)

    def inside(self, p: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        return np.all((p > self.lo + eps) & (p < self.hi - eps), axis=1)


class _Cylinder:
    """Axis along z through the origin."""

    def __init__(self, radius: float, height: float):
        self.r = radius
        self.h = height

    def sample(self, h: float) -> np.ndarray:
        n_theta = math.ceil(2 * math.pi * self.r / h)
        theta = np.arange(n_theta) * (2 * math.pi / n_theta)
        zs = np.linspace(-self.h / 2, self.h / 2, max(2, math.ceil(self.h / h) + 1))
        t, z = np.meshgrid(theta, zs, indexing="ij")
        side = np.column_stack([self.r * np.cos(t.ravel()), self.r * np.sin(t.ravel()), z.ravel()])
        caps = [np.zeros((1, 2))]
        n_rings = math.ceil(self.r / h)
        for i in range(1, n_rings + 1):
            rr = self.r * i / n_rings
            m = math.ceil(2 * math.pi * rr / h)
            a = np.arange(m) * (2 * math.pi / m)
            caps.append(np.column_stack([rr * np.cos(a), rr * np.sin(a)]))
        disk = np.vstack(caps)
        top = np.column_stack([disk, np.full(len(disk), self.h / 2)])
        bottom = np.column_stack([disk, np.full(len(disk), -self.h / 2)])
        return np.vstack([side, top, bottom])

    def inside(self, p: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        return (np.hypot(p[:, 0], p[:, 1]) < self.r - eps) & (np.abs(p[:, 2]) < self.h / 2 - eps)


def _validate(params: dict) -> dict:
    missing = [k for k in REQUIRED_PARAMS if k not in params]
    if missing:
        raise InvalidParams(f"phantom params missing {missing}")
    p = {k: float(params[k]) for k in REQUIRED_PARAMS}
    for k, v in p.items():
        if k == "pedicle_medial_angle":
            if not 0 <= v < 45:
                raise InvalidParams("pedicle_medial_angle must be in [0, 45) degrees")
        elif not v > 0:
            raise InvalidParams(f"{k} must be positive")
    if p["grid_spacing"] > 5:
        raise InvalidParams("grid_spacing above 5 mm is too coarse for registration")
    half = p["canal_diameter"] / 2 + p["pedicle_wall"]
    if p["pedicle_offset"] - half <= 0:
        raise InvalidParams("pedicles overlap the midline; increase pedicle_offset")
    if p["pedicle_offset"] + half >= p["body_radius"]:
        raise InvalidParams("pedicles extend beyond the vertebral body")
    return p


def generate_phantom(label: str, params: dict) -> Phantom:
    """Deterministically build a phantom surface, landmarks and canal axis."""
    p = _validate(params)
    rb, hb = p["body_radius"], p["body_height"]
    half = p["canal_diameter"] / 2 + p["pedicle_wall"]
    px = p["pedicle_offset"]
    y_post = -(rb + p["pedicle_length"])  # posterior face of the pedicles
    y_arch = y_post - p["arch_depth"]
    y_body = -math.sqrt(rb**2 - (px + half) ** 2) + 1.0  # pedicles sink 1 mm into the body

    body = _Cylinder(rb, hb)
    pedicles = [_Box((s * px - half, y_post, -half), (s * px + half, y_body, half)) for s in (1, -1)]
    arch = _Box((-(px - half), y_arch, -half), (px - half, y_post + 2.0, half))
    spinous = _Box((-3.0, y_arch - p["spinous_length"], -0.9 * half), (3.0, y_arch + 1.0, 0.5 * half))
    tx0 = px + half - 1.0
    transverse = [
        _Box((tx0, y_post - 3.0, -3.0), (tx0 + p["transverse_length"], y_post + 5.0, 3.0)),
        _Box((-tx0 - p["transverse_length"], y_post - 3.0, -3.0), (-tx0, y_post + 5.0, 3.0)),
    ]
    solids = [body, *pedicles, arch, spinous, *transverse]

    h = p["grid_spacing"]
    pieces = []
    for i, solid in enumerate(solids):
        pts = solid.sample(h)
        hidden = np.zeros(len(pts), dtype=bool)
        for j, other in enumerate(solids):
            if j != i:
                hidden |= other.inside(pts)
        pieces.append(pts[~hidden])
    surface = np.vstack(pieces)
    # drop duplicates from coincident faces, keep a stable order
    _, first = np.unique(np.round(surface, 9), axis=0, return_index=True)
    surface = surface[np.sort(first)]

    a = math.radians(p["pedicle_medial_angle"])
    canal_direction = np.array([-math.sin(a), math.cos(a), 0.0])
    entry = np.array([px, y_post, 0.0])
    landmarks = {
        "spinous_tip": np.array([0.0, y_arch - p["spinous_length"], 0.0]),
        "left_transverse_tip": np.array([tx0 + p["transverse_length"], y_post + 1.0, 0.0]),
        "right_transverse_tip": np.array([-tx0 - p["transverse_length"], y_post + 1.0, 0.0]),
        "left_facet": np.array([px, y_post + 3.0, half]),
        "right_facet": np.array([-px, y_post + 3.0, half]),
        "entry": entry,
    }

    lo = surface.min(axis=0) - 5.0
    hi = surface.max(axis=0) + 5.0
    for name, v in landmarks.items():
        if np.any(v < lo) or np.any(v > hi):
            raise InvalidParams(f"landmark {name} falls outside the phantom bounds")

    return Phantom(
        label=label,
        surface=PointCloud(surface, FrameId.CT),
        landmarks=LandmarkSet(landmarks, FrameId.CT),
        canal_point=entry,
        canal_direction=canal_direction,
        canal_diameter=p["canal_diameter"],
        pedicle_length=p["pedicle_length"],
        params=p,
    )


def bundled_phantoms() -> dict:
    text = resources.files("spinenav.data").joinpath("phantoms.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_phantom(label: str) -> Phantom:
    """Generate one of the bundled phantoms ("L3" or "T12")."""
    assets = bundled_phantoms()
    if label not in assets:
        raise InvalidParams(f"unknown phantom {label!r}; bundled: {sorted(assets)}")
    return generate_phantom(label, assets[label]["params"])
