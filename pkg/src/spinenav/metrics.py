"""Accuracy metrics: landmark verification error, radius of curvature, reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from spinenav.errors import CollinearPoints, NameMismatch, ValidationError
from spinenav.geometry import FrameId, RigidTransform

# Fitted radii above this are treated as a straight line.
MAX_RADIUS = 1e6


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    points: Mapping[str, np.ndarray]
    frame: FrameId = FrameId.CT

    def __post_init__(self):
        if not self.points:
            raise ValidationError("landmark set is empty")
        pts = {str(k): np.asarray(v, dtype=float).reshape(3) for k, v in self.points.items()}
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame", FrameId(self.frame))

    def names(self) -> list[str]:
        return list(self.points)

    def array(self, names: Sequence[str] | None = None) -> np.ndarray:
        return np.array([self.points[n] for n in (names or self.names())])

    def transformed(self, t: RigidTransform, frame: FrameId | None = None) -> LandmarkSet:
        return LandmarkSet({k: t.apply(v) for k, v in self.points.items()}, frame or self.frame)

    def to_dict(self) -> dict:
        return {"frame": self.frame.value, "points": {k: [float(x) for x in v] for k, v in self.points.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> LandmarkSet:
        return cls(d["points"], FrameId(d.get("frame", "CT")))


@dataclass(frozen=True)
class LandmarkError:
    per_point: dict[str, float]
    mean: float
    std: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return float("nan"), float("nan")
    std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return float(np.mean(v)), std


def landmark_error(measured: LandmarkSet, reference: LandmarkSet) -> LandmarkError:
    """Per-landmark Euclidean distances with their mean and sample std."""
    if set(measured.points) != set(reference.points):
        missing = set(measured.points) ^ set(reference.points)
        raise NameMismatch(f"landmark names differ: {sorted(missing)}")
    if measured.frame != reference.frame:
        raise NameMismatch(f"landmark frames differ: {measured.frame} vs {reference.frame}")
    names = sorted(reference.points)
    per = {n: float(np.linalg.norm(measured.points[n] - reference.points[n])) for n in names}
    mean, std = _mean_std(list(per.values()))
    return LandmarkError(per, mean, std)


@dataclass(frozen=True, eq=False)
class CircleFit:
    center: np.ndarray
    radius: float
    plane_normal: np.ndarray
    rms_residual: float


def _taubin(xy: np.ndarray) -> tuple[np.ndarray, float]:
    """Algebraic circle fit in 2D (Taubin's normalisation, solved by SVD)."""
    centroid = xy.mean(axis=0)
    x, y = (xy - centroid).T
    z = x * x + y * y
    zmean = z.mean()
    if zmean <= 0:
        raise CollinearPoints("all points coincide")
    z0 = (z - zmean) / (2.0 * math.sqrt(zmean))
    _, _, vt = np.linalg.svd(np.column_stack([z0, x, y]), full_matrices=False)
    a = vt[2].copy()
    a[0] /= 2.0 * math.sqrt(zmean)
    a3 = -zmean * a[0]
    if abs(a[0]) < 1e-300:
        raise CollinearPoints("points are collinear")
    center = -a[1:3] / a[0] / 2.0 + centroid
    radius = math.sqrt(a[1] ** 2 + a[2] ** 2 - 4 * a[0] * a3) / abs(a[0]) / 2.0
    return center, radius


def fit_circle(points) -> CircleFit:
    """Best-fit circle to 3D points.

    The plane comes from PCA of the centred points; the in-plane circle from
    an algebraic (Taubin) fit; ``rms_residual`` is the RMS 3D distance from
    the points to the fitted circle.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise CollinearPoints(f"circle fit needs at least 3 points, got {len(pts)}")
    c = pts.mean(axis=0)
    centered = pts - c
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[0] == 0 or s[1] <= 1e-12 * s[0]:
        raise CollinearPoints("points are collinear")
    e1, e2, normal = vt[0], vt[1], vt[2]
    xy = np.column_stack([centered @ e1, centered @ e2])
    center2, radius = _taubin(xy)
    if not radius < MAX_RADIUS:
        raise CollinearPoints(f"fitted radius {radius:.3e} mm exceeds {MAX_RADIUS:.0e} mm (straight line)")
    center = c + center2[0] * e1 + center2[1] * e2

    rel = pts - center
    h = rel @ normal
    in_plane = np.linalg.norm(rel - np.outer(h, normal), axis=1)
    dist = np.sqrt(h**2 + (in_plane - radius) ** 2)
    return CircleFit(center, float(radius), normal, float(np.sqrt(np.mean(dist**2))))


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> Stat:
        return cls(*_mean_std(values))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}

    def __str__(self) -> str:
        return f"{self.mean:.2f}±{self.std:.2f}"


@dataclass(frozen=True)
class PipelineReport:
    """Table-style summary of a simulated experiment (mm, s)."""

    label: str
    trials: int
    icp_error: Stat
    total_calibration_error: Stat
    ideal_radius: float
    fitted_radius: Stat
    radius_error: Stat
    trajectory_error: Stat
    procedure_time: float
    timeline: dict
    per_trial: list = field(default_factory=list)
    failed_trials: int = 0
    schema: str = "spinenav.pipeline_report/1"

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "label": self.label,
            "trials": self.trials,
            "failed_trials": self.failed_trials,
            "icp_error": self.icp_error.to_dict(),
            "total_calibration_error": self.total_calibration_error.to_dict(),
            "ideal_radius": self.ideal_radius,
            "fitted_radius": self.fitted_radius.to_dict(),
            "radius_error": self.radius_error.to_dict(),
            "trajectory_error": self.trajectory_error.to_dict(),
            "procedure_time": self.procedure_time,
            "timeline": dict(self.timeline),
            "per_trial": list(self.per_trial),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PipelineReport:
        return cls(
            schema=d["schema"],
            label=d["label"],
            trials=int(d["trials"]),
            failed_trials=int(d["failed_trials"]),
            icp_error=Stat(**d["icp_error"]),
            total_calibration_error=Stat(**d["total_calibration_error"]),
            ideal_radius=float(d["ideal_radius"]),
            fitted_radius=Stat(**d["fitted_radius"]),
            radius_error=Stat(**d["radius_error"]),
            trajectory_error=Stat(**d["trajectory_error"]),
            procedure_time=float(d["procedure_time"]),
            timeline=dict(d["timeline"]),
            per_trial=list(d["per_trial"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> PipelineReport:
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        return (
            f"{self.label}: ICP error {self.icp_error} mm | total calibration error "
            f"{self.total_calibration_error} mm | ideal radius {self.ideal_radius:g} mm | "
            f"actual radius {self.fitted_radius} mm | procedure time {self.procedure_time:.0f} s "
            f"({self.trials - self.failed_trials}/{self.trials} trials)"
        )


def build_report(
    label: str,
    trial_records: Sequence[dict],
    ideal_radius: float,
    timeline,
) -> PipelineReport:
    """Aggregate per-trial records into mean ± std fields.

    Failed trials (records carrying an ``"error"`` key) are kept in
    ``per_trial`` but excluded from the statistics.
    """
    ok = [r for r in trial_records if "error" not in r]
    tl = timeline.to_dict() if hasattr(timeline, "to_dict") else dict(timeline)
    return PipelineReport(
        label=label,
        trials=len(trial_records),
        failed_trials=len(trial_records) - len(ok),
        icp_error=Stat.of([r["icp_rmse"] for r in ok]),
        total_calibration_error=Stat.of([r["total_calibration_error"] for r in ok]),
        ideal_radius=float(ideal_radius),
        fitted_radius=Stat.of([r["fitted_radius"] for r in ok]),
        radius_error=Stat.of([abs(r["fitted_radius"] - ideal_radius) for r in ok]),
        trajectory_error=Stat.of([r["trajectory_error"] for r in ok]),
        procedure_time=float(tl["total"]),
        timeline=tl,
        per_trial=list(trial_records),
    )
