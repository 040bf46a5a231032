"""Patient-to-CT registration: 3-point coarse alignment followed by ICP.

ICP minimises ``E(T) = sum ||p - T q||^2`` over nearest-neighbour pairs,
where ``q`` are source (digitized) points and ``p`` target (CT model) points.
The returned transform therefore maps the source frame into the target
frame; for digitized points in the robot base this is ``T_CT_S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spinenav.errors import CollinearPoints, NoCorrespondences, ValidationError
from spinenav.geometry import FrameId, RigidTransform
from spinenav.spatial import NearestNeighborIndex

MIN_TRIANGLE_AREA = 1e-6  # mm^2


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    frame: FrameId = FrameId.CT

    def __post_init__(self):
        p = np.array(self.points, dtype=float).reshape(-1, 3)
        if len(p) == 0:
            raise ValidationError("point cloud is empty")
        if not np.all(np.isfinite(p)):
            raise ValidationError("point cloud has non-finite coordinates")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "frame", FrameId(self.frame))

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, t: RigidTransform, frame: FrameId | None = None) -> PointCloud:
        return PointCloud(t.apply(self.points), self.frame if frame is None else frame)


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 100
    convergence_delta: float = 1e-6  # mm of RMSE improvement
    max_correspondence_distance: float = 10.0  # mm

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.convergence_delta < 0 or self.max_correspondence_distance <= 0:
            raise ValidationError("convergence_delta must be >= 0 and max distance > 0")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "convergence_delta": self.convergence_delta,
            "max_correspondence_distance": self.max_correspondence_distance,
        }


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Matched pairs: ``p`` from the target, ``q`` from the (untransformed) source."""

    p: np.ndarray
    q: np.ndarray
    source_index: np.ndarray
    target_index: np.ndarray
    max_distance: float

    def __len__(self) -> int:
        return len(self.p)

    def energy(self, t: RigidTransform) -> float:
        """``E(T) = sum ||p - T q||^2``."""
        r = self.p - t.apply(self.q)
        return float(np.sum(r * r))

    def rmse(self, t: RigidTransform) -> float:
        return math.sqrt(self.energy(t) / len(self)) if len(self) else 0.0


@dataclass(frozen=True)
class IcpIteration:
    correspondence_count: int
    energy_before: float  # E(T_k) over the pairs found at T_k
    energy_after: float  # E(T_k+1) over the same pairs
    rmse_before: float
    rmse_after: float


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rmse: float
    iterations: int
    converged: bool
    correspondence_count: int
    initial_transform: RigidTransform | None = None
    history: tuple[IcpIteration, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        d = {
            "transform_ct_from_s": self.transform.to_dict(),
            "transform_s_from_ct": self.transform.inverse().to_dict(),
            "rmse": float(self.rmse),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "correspondence_count": int(self.correspondence_count),
        }
        if self.initial_transform is not None:
            d["initial_transform_ct_from_s"] = self.initial_transform.to_dict()
        return d


def best_fit_transform(src, dst) -> RigidTransform:
    """Closed-form rigid ``T`` minimising ``sum ||dst - T src||^2`` (no scaling)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def triangle_area(pts) -> float:
    a, b, c = np.asarray(pts, dtype=float)
    return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))


def coarse_align(src3, dst3) -> RigidTransform:
    """Rigid transform mapping three picked source points onto three target points."""
    src3 = np.asarray(src3, dtype=float)
    dst3 = np.asarray(dst3, dtype=float)
    if src3.shape != (3, 3) or dst3.shape != (3, 3):
        raise ValidationError("coarse alignment needs exactly three points on each side")
    for name, tri in (("source", src3), ("target", dst3)):
        area = triangle_area(tri)
        if not area > MIN_TRIANGLE_AREA:
            raise CollinearPoints(f"{name} picks are collinear (triangle area {area:.3e} mm^2)")
    return best_fit_transform(src3, dst3)


def find_correspondences(
    source: np.ndarray,
    index: NearestNeighborIndex,
    t: RigidTransform,
    max_distance: float,
) -> CorrespondenceSet:
    dist, idx = index.query(t.apply(source))
    keep = np.flatnonzero(dist <= max_distance)
    return CorrespondenceSet(
        p=index.points[idx[keep]],
        q=source[keep],
        source_index=keep,
        target_index=idx[keep],
        max_distance=max_distance,
    )


def icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform | None = None,
    params: IcpParams | None = None,
    index: NearestNeighborIndex | None = None,
) -> IcpResult:
    """Point-to-point ICP aligning ``source`` onto ``target``.

    Each iteration pairs every transformed source point with its nearest
    target point (within ``max_correspondence_distance``) and re-solves the
    rigid transform in closed form over those pairs. Iteration stops once the
    RMSE improvement produced by the update falls below
    ``convergence_delta``.
    """
    params = params or IcpParams()
    t = init if init is not None else RigidTransform.identity()
    index = index or NearestNeighborIndex(target.points)
    src = source.points
    history = []
    converged = False
    for _ in range(params.max_iterations):
        kappa = find_correspondences(src, index, t, params.max_correspondence_distance)
        if len(kappa) == 0:
            raise NoCorrespondences(
                f"no source point within {params.max_correspondence_distance} mm of the target; "
                "initial alignment is too far off"
            )
        e_before = kappa.energy(t)
        t_new = best_fit_transform(kappa.q, kappa.p)
        e_after = kappa.energy(t_new)
        n = len(kappa)
        step = IcpIteration(n, e_before, e_after, math.sqrt(e_before / n), math.sqrt(e_after / n))
        history.append(step)
        t = t_new
        if step.rmse_before - step.rmse_after < params.convergence_delta:
            converged = True
            break

    final = find_correspondences(src, index, t, params.max_correspondence_distance)
    if len(final) == 0:
        raise NoCorrespondences("final alignment has no correspondences")
    return IcpResult(
        transform=t,
        rmse=final.rmse(t),
        iterations=len(history),
        converged=converged,
        correspondence_count=len(final),
        initial_transform=init,
        history=tuple(history),
    )


def register_dual_stage(
    digitized: PointCloud,
    ct_model: PointCloud,
    picked_src,
    picked_dst,
    params: IcpParams | None = None,
    index: NearestNeighborIndex | None = None,
) -> IcpResult:
    """Coarse 3-point alignment, then ICP refinement from that start."""
    coarse = coarse_align(picked_src, picked_dst)
    return icp(digitized, ct_model, coarse, params, index)
